import math

import pytest

import rankft


def test_length_penalty_and_losses():
    assert rankft.length_penalized_score(-4.0, 1, 2.0) == -4.0
    assert rankft.length_penalized_score(-4.0, 4, 1.0) == pytest.approx(-1.0)
    assert rankft.rank_loss([0.0, 0.0], 0.5) == pytest.approx(0.5)
    assert rankft.rank_loss([1.0, 0.0], 0.5) == 0.0
    assert rankft.rank_loss_gradient([0.0, 0.0], 0.5) == pytest.approx([-1.0, 1.0])


def test_rouge_l():
    assert rankft.rouge_l("a b c", "a b c") == 1.0
    assert rankft.rouge_l("a b", "c d") == 0.0
    assert rankft.rouge_l("c d", "c e") == pytest.approx(0.5)


def test_judge_prompt_and_parser():
    prompt = rankft.build_judge_prompt({"instruction": "Name a prime."}, ["7", "9"])
    assert "Response 0/1" in prompt
    verdict = rankft.parse_judge_output("Response 0: [4 + 4 + 4 = 12]\nResponse 1: [3]\nrank: [0, 1]", 2)
    assert verdict["rank"] == [0, 1]
    assert verdict["subscores"][0] == [4, 4, 4]
    with pytest.raises(rankft.ParseError):
        rankft.parse_judge_output("no verdict here", 2)
    with pytest.raises(rankft.ValidationError):
        rankft.parse_judge_output("Response 0: [3]\nResponse 1: [12]\nrank: [0, 1]", 2)


def test_pipeline_model_and_sampling(tmp_path):
    instructions = tmp_path / "instr.jsonl"
    rankft.make_toy_instructions(str(instructions), 8, 4)
    ws = tmp_path / "ws"
    options = {"batch_size": 4, "mle_epochs": 1, "model": {"embed_dim": 4, "hidden_dim": 6, "max_new_tokens": 4}}
    partial = rankft.run_preset("tuna_p", str(instructions), str(ws), total=6, contextual=2, seed=1,
                                stop_after="sft", options=options)
    assert [s["name"] for s in partial["stages"]] == ["sft"]
    manifest = rankft.run_preset("tuna_p", str(instructions), str(ws), total=6, contextual=2, seed=1,
                                 options=options)
    assert [s["name"] for s in manifest["stages"]] == ["sft", "prob_build", "prob_train"]
    assert rankft.read_manifest(str(ws)) == manifest

    model = rankft.PolicyModel.load(str(ws / "artifacts" / "tuna_p.ckpt"))
    assert model.kind == "tiny_lm"
    prompt = {"instruction": "Describe the ocean."}
    lps = model.token_logprobs(prompt, "clear precise")
    assert len(lps) == 2 and all(lp <= 0 and math.isfinite(lp) for lp in lps)
    assert model.sample(prompt, 0.0) == model.sample(prompt, 0.0)
    samples = rankft.sample_diverse(model, prompt, n=3, seed=7)
    assert len(samples) == 3
    assert all(s["source"] == "student" for s in samples)

    with pytest.raises(rankft.ValidationError):
        rankft.run_preset("tuna_p", str(instructions), str(ws), options={"mystery": 1})
