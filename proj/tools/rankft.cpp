// rankft: command-line front end for dataset construction, ranking-based
// finetuning, the staged pipeline and evaluation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "rankft/eval.hpp"
#include "rankft/judge.hpp"
#include "rankft/mock_backends.hpp"
#include "rankft/pipeline.hpp"
#include "rankft/prm.hpp"
#include "rankft/prob_rank.hpp"
#include "rankft/sampler.hpp"
#include "rankft/tiny_lm.hpp"
#include "rankft/trainer.hpp"

using namespace rankft;
namespace fs = std::filesystem;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

// A backend argument is a JSON file, an inline JSON object or a type name.
Json backend_config(const std::string& arg) {
  if (!arg.empty() && arg.front() == '{') return Json::parse(arg);
  if (fs::exists(arg)) return Json::parse(read_file(arg));
  return Json(arg);
}

BackendSpec backend_spec(BackendKind kind, const LlmBackend& backend, const Json& cfg) {
  const std::string model = cfg.is_object() ? cfg.value("model", std::string("mock")) : std::string("mock");
  BackendSpec spec = kind == BackendKind::judge ? BackendSpec::judge(backend.id(), model)
                                                : BackendSpec::teacher(backend.id(), model);
  if (cfg.is_object()) {
    spec.prompt_price_per_1k = cfg.value("prompt_price_per_1k", 0.0);
    spec.completion_price_per_1k = cfg.value("completion_price_per_1k", 0.0);
    spec.max_concurrent_requests = cfg.value("max_concurrent_requests", spec.max_concurrent_requests);
    spec.max_tokens = cfg.value("max_tokens", spec.max_tokens);
  }
  return spec;
}

struct ClientBundle {
  std::shared_ptr<CostLedger> ledger = std::make_shared<CostLedger>();
  std::unique_ptr<LlmClient> client;
};

ClientBundle make_client(BackendKind kind, const std::string& backend_arg, const std::string& cache_dir) {
  const Json cfg = backend_config(backend_arg);
  auto backend = make_backend(cfg);
  ClientBundle b;
  auto cache = cache_dir.empty() ? nullptr : std::make_shared<ResponseCache>(cache_dir);
  b.client = std::make_unique<LlmClient>(backend, backend_spec(kind, *backend, cfg), cache, b.ledger);
  return b;
}

void print_costs(const CostLedger& ledger) {
  for (const auto& [stage, c] : ledger.entries()) {
    spdlog::info("cost[{}]: {} calls, {} cache hits, {} prompt + {} completion tokens, ${:.4f}", stage, c.calls,
                 c.cache_hits, c.prompt_tokens, c.completion_tokens, c.cost_usd);
  }
}

std::vector<InstructionRecord> load_instructions(const std::string& path) {
  return load_dataset<InstructionRecord>(path).records;
}

void write_json(const std::string& path, const Json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_file_atomic(path, j.dump(2) + "\n");
  }
}

Json train_report_json(const TrainReport& r) {
  return Json{{"steps", r.steps},
              {"step_losses", r.step_losses},
              {"agreement_before", r.agreement_before},
              {"agreement_after", r.agreement_after},
              {"skipped_examples", r.skipped_examples}};
}

struct HyperFlags {
  RankHyper h;
  void add(CLI::App* cmd, bool ranking) {
    if (ranking) {
      cmd->add_option("--margin", h.margin, "hinge margin m")->capture_default_str();
      cmd->add_option("--lambda", h.lambda, "weight of the original-response NLL")->capture_default_str();
    }
    cmd->add_option("--lr", h.learning_rate, "learning rate")->capture_default_str();
    cmd->add_option("--epochs", h.epochs)->capture_default_str();
    cmd->add_option("--batch-size", h.batch_size)->capture_default_str();
    cmd->add_option("--warmup", h.warmup_steps, "linear warmup steps")->capture_default_str();
    cmd->add_option("--weight-decay", h.weight_decay)->capture_default_str();
    cmd->add_option("--seed", h.seed)->capture_default_str();
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ranking-based instruction finetuning toolkit"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  // make-toy-data
  auto* toy = app.add_subcommand("make-toy-data", "Write synthetic instructions (and optionally eval tasks)");
  std::string toy_out, toy_tasks, toy_questions;
  int toy_count = 200;
  std::uint64_t toy_seed = 0;
  toy->add_option("--out", toy_out, "instruction dataset to write")->required();
  toy->add_option("--count", toy_count)->capture_default_str();
  toy->add_option("--seed", toy_seed)->capture_default_str();
  toy->add_option("--tasks", toy_tasks, "also write ROUGE-L task files into this directory");
  toy->add_option("--questions", toy_questions, "also write a pairwise question set");

  // init-model
  auto* init = app.add_subcommand("init-model", "Create an untrained toy policy checkpoint");
  std::string init_data, init_out;
  TinyLmConfig init_cfg;
  bool init_world = false;
  init->add_option("--instructions", init_data, "vocabulary source")->required();
  init->add_option("--out", init_out)->required();
  init->add_option("--embed-dim", init_cfg.embed_dim)->capture_default_str();
  init->add_option("--hidden-dim", init_cfg.hidden_dim)->capture_default_str();
  init->add_option("--max-new-tokens", init_cfg.max_new_tokens)->capture_default_str();
  init->add_option("--seed", init_cfg.seed)->capture_default_str();
  init->add_flag("--synthetic-vocab", init_world, "add the synthetic world's words to the vocabulary");

  // mle-train
  auto* mle = app.add_subcommand("mle-train", "Supervised finetuning on instruction/response pairs");
  std::string mle_model, mle_data, mle_ranked, mle_out, mle_report;
  HyperFlags mle_h;
  mle->add_option("--model", mle_model, "initial checkpoint")->required();
  mle->add_option("--data", mle_data, "instruction dataset")->required();
  mle->add_option("--ranked", mle_ranked, "add every ranked response as an extra pair");
  mle->add_option("--out", mle_out)->required();
  mle->add_option("--report", mle_report);
  mle_h.add(mle, false);

  // teacher-sample
  auto* ts = app.add_subcommand("teacher-sample", "Query the teacher for responses with log-probabilities");
  std::string ts_data, ts_out, ts_backend = "synthetic_teacher", ts_cache, ts_tok = "whitespace";
  int ts_n = 4;
  ts->add_option("--instructions", ts_data)->required();
  ts->add_option("--out", ts_out, "candidate dataset to write")->required();
  ts->add_option("--n", ts_n)->capture_default_str();
  ts->add_option("--backend", ts_backend, "backend name, JSON object or JSON file")->capture_default_str();
  ts->add_option("--cache", ts_cache, "response cache directory");
  ts->add_option("--tokenizer", ts_tok, "tokenizer id for lengths")->capture_default_str();

  // prob-rank
  auto* pr = app.add_subcommand("prob-rank", "Rank teacher responses by length-penalised log-likelihood");
  std::string pr_in, pr_out;
  double pr_beta = kDefaultBeta;
  pr->add_option("--candidates", pr_in)->required();
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--beta", pr_beta)->capture_default_str();

  // beta-sweep
  auto* bs = app.add_subcommand("beta-sweep", "Pick beta by held-out NLL of models trained on each ranking");
  std::string bs_cands, bs_data, bs_heldout, bs_init, bs_out;
  std::vector<double> bs_betas{0.5, 1.0, 1.3, 1.5, 2.0};
  HyperFlags bs_h;
  bs->add_option("--candidates", bs_cands)->required();
  bs->add_option("--instructions", bs_data, "training instructions")->required();
  bs->add_option("--heldout", bs_heldout, "held-out instructions with reference responses")->required();
  bs->add_option("--init-checkpoint", bs_init)->required();
  bs->add_option("--betas", bs_betas)->delimiter(',')->capture_default_str();
  bs->add_option("--out", bs_out, "report file (stdout when omitted)");
  bs_h.add(bs, true);

  // student-sample
  auto* ss = app.add_subcommand("student-sample", "Diversity-constrained sampling from a checkpoint");
  std::string ss_data, ss_model, ss_out;
  DiversityPolicy ss_p;
  std::uint64_t ss_seed = 0;
  ss->add_option("--instructions", ss_data)->required();
  ss->add_option("--model", ss_model)->required();
  ss->add_option("--out", ss_out)->required();
  ss->add_option("--n", ss_p.n)->capture_default_str();
  ss->add_option("--tau", ss_p.tau, "ROUGE-L acceptance threshold")->capture_default_str();
  ss->add_option("--temperature", ss_p.temperature_start)->capture_default_str();
  ss->add_option("--temperature-step", ss_p.temperature_step)->capture_default_str();
  ss->add_option("--max-trials", ss_p.max_trials)->capture_default_str();
  ss->add_option("--seed", ss_seed)->capture_default_str();

  // judge-rank
  auto* jr = app.add_subcommand("judge-rank", "Rank candidate sets with the contextual-ranking judge");
  std::string jr_data, jr_cands, jr_out, jr_skips, jr_backend = "synthetic_judge", jr_cache;
  jr->add_option("--instructions", jr_data)->required();
  jr->add_option("--candidates", jr_cands)->required();
  jr->add_option("--out", jr_out)->required();
  jr->add_option("--skips", jr_skips, "skip records file");
  jr->add_option("--backend", jr_backend)->capture_default_str();
  jr->add_option("--cache", jr_cache);

  // train
  auto* tr = app.add_subcommand("train", "Ranking-loss finetuning on a ranked dataset");
  std::string tr_data, tr_instr, tr_source = "any", tr_init, tr_out, tr_report;
  HyperFlags tr_h;
  tr->add_option("--data", tr_data, "ranked dataset")->required();
  tr->add_option("--instructions", tr_instr, "instruction dataset with original responses")->required();
  tr->add_option("--ranking-source", tr_source, "probabilistic|judge|prm|any")->capture_default_str();
  tr->add_option("--init-checkpoint", tr_init)->required();
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--report", tr_report);
  tr_h.add(tr, true);

  // prm-train
  auto* pt = app.add_subcommand("prm-train", "Train a proxy ranking model on judge rankings");
  std::string pt_data, pt_instr, pt_out, pt_report;
  PrmHyper pt_h;
  pt->add_option("--data", pt_data, "judge-ranked dataset")->required();
  pt->add_option("--instructions", pt_instr)->required();
  pt->add_option("--out", pt_out)->required();
  pt->add_option("--report", pt_report);
  pt->add_option("--margin", pt_h.margin)->capture_default_str();
  pt->add_option("--lr", pt_h.learning_rate)->capture_default_str();
  pt->add_option("--epochs", pt_h.epochs)->capture_default_str();
  pt->add_option("--heldout-fraction", pt_h.heldout_fraction)->capture_default_str();
  pt->add_option("--hidden-dim", pt_h.model.hidden_dim)->capture_default_str();
  pt->add_option("--seed", pt_h.seed)->capture_default_str();

  // prm-rank
  auto* prr = app.add_subcommand("prm-rank", "Rank candidate sets with a proxy ranking model");
  std::string prr_prm, prr_data, prr_cands, prr_out;
  prr->add_option("--prm", prr_prm)->required();
  prr->add_option("--instructions", prr_data)->required();
  prr->add_option("--candidates", prr_cands)->required();
  prr->add_option("--out", prr_out)->required();

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run or inspect a staged recipe");
  pl->require_subcommand(1);
  auto* pl_run = pl->add_subcommand("run", "Run a recipe in a workspace, resuming completed stages");
  std::string pl_recipe, pl_preset, pl_instr, pl_ws, pl_stop;
  std::uint64_t pl_seed = 0;
  auto* recipe_opt = pl_run->add_option("--recipe", pl_recipe, "recipe file");
  auto* preset_opt = pl_run->add_option("--preset", pl_preset, "named preset instead of a recipe file");
  recipe_opt->excludes(preset_opt);
  PresetOptions pl_po;
  pl_run->add_option("--instructions", pl_instr, "instruction dataset for --preset");
  pl_run->add_option("--total", pl_po.total, "instructions ranked by --preset")->capture_default_str();
  pl_run->add_option("--contextual", pl_po.contextual, "instructions judged by --preset")->capture_default_str();
  pl_run->add_option("--workspace", pl_ws)->required();
  auto* pl_seed_opt = pl_run->add_option("--seed", pl_seed, "overrides the recipe seed");
  pl_run->add_option("--stop-after", pl_stop, "stop after this stage");
  auto* pl_status = pl->add_subcommand("status", "Print a workspace manifest");
  std::string pls_ws;
  bool pls_json = false;
  pl_status->add_option("--workspace", pls_ws)->required();
  pl_status->add_flag("--json", pls_json, "print the raw manifest");
  auto* pl_preset_cmd = pl->add_subcommand("preset", "Write a preset as a recipe file");
  std::string plp_name, plp_instr, plp_out;
  PresetOptions plp;
  pl_preset_cmd->add_option("--name", plp_name)->required();
  pl_preset_cmd->add_option("--instructions", plp_instr)->required();
  pl_preset_cmd->add_option("--out", plp_out, "recipe file (stdout when omitted)");
  pl_preset_cmd->add_option("--total", plp.total)->capture_default_str();
  pl_preset_cmd->add_option("--contextual", plp.contextual)->capture_default_str();
  pl_preset_cmd->add_option("--ranking-lr", plp.ranking_learning_rate)->capture_default_str();
  pl_preset_cmd->add_option("--mle-lr", plp.mle_learning_rate)->capture_default_str();
  pl_preset_cmd->add_option("--mle-epochs", plp.mle_epochs)->capture_default_str();
  pl_preset_cmd->add_option("--batch-size", plp.batch_size)->capture_default_str();
  pl_preset_cmd->add_option("--seed", plp.seed)->capture_default_str();
  pl_preset_cmd->add_flag("--fresh-contextual-slice", plp.fresh_contextual_slice);

  // eval-rouge / eval-exact-match
  auto* er = app.add_subcommand("eval-rouge", "ROUGE-L of greedy outputs on task files");
  std::string er_model, er_tasks, er_out;
  int er_shots = 0;
  er->add_option("--model", er_model)->required();
  er->add_option("--tasks", er_tasks, "directory of task files")->required();
  er->add_option("--shots", er_shots)->check(CLI::IsMember({0, 2}))->capture_default_str();
  er->add_option("--out", er_out, "JSON report");
  auto* em = app.add_subcommand("eval-exact-match", "Exact-match accuracy of greedy outputs on task files");
  std::string em_model, em_tasks, em_out;
  int em_shots = 0;
  em->add_option("--model", em_model)->required();
  em->add_option("--tasks", em_tasks)->required();
  em->add_option("--shots", em_shots)->check(CLI::IsMember({0, 2}))->capture_default_str();
  em->add_option("--out", em_out);

  // eval-pairwise
  auto* ep = app.add_subcommand("eval-pairwise", "Judge-mediated win/lose/tie of model a against model b");
  std::string ep_a, ep_b, ep_q, ep_judge = "pairwise_quality", ep_cache, ep_out;
  ep->add_option("--model-a", ep_a)->required();
  ep->add_option("--model-b", ep_b)->required();
  ep->add_option("--questions", ep_q, "instruction dataset of questions")->required();
  ep->add_option("--judge", ep_judge, "judge backend")->capture_default_str();
  ep->add_option("--cache", ep_cache);
  ep->add_option("--out", ep_out, "JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("rankft"));
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    if (*toy) {
      const auto records = make_synthetic_instructions(toy_count, toy_seed);
      save_dataset(records, toy_out);
      if (!toy_tasks.empty()) {
        fs::create_directories(toy_tasks);
        const auto& w = SyntheticWorld::standard();
        for (int t = 0; t < 2; ++t) {
          TaskFile task;
          task.task_id = "toy_task_" + std::to_string(t);
          task.definition = t == 0 ? "Describe the given topic." : "Name a good quality for the given topic.";
          Rng rng(toy_seed + static_cast<std::uint64_t>(t));
          for (int k = 0; k < 8; ++k) {
            TaskInstance x;
            x.input = w.topics[rng.below(w.topics.size())];
            x.output = w.good[rng.below(w.good.size())] + " " + w.good[rng.below(w.good.size())];
            (k < 2 ? task.positive_examples : task.instances).push_back(std::move(x));
          }
          save_task_file(task, fs::path(toy_tasks) / (task.task_id + ".json"));
        }
      }
      if (!toy_questions.empty()) save_dataset(make_synthetic_instructions(20, toy_seed + 1000), toy_questions);
      spdlog::info("wrote {} instructions to {}", records.size(), toy_out);
    } else if (*init) {
      const auto records = load_instructions(init_data);
      std::vector<std::string> extra;
      if (init_world) {
        const auto& w = SyntheticWorld::standard();
        for (const auto* pool : {&w.good, &w.filler, &w.topics}) extra.insert(extra.end(), pool->begin(), pool->end());
      }
      TinyLm model(build_vocabulary(records, extra), init_cfg);
      model.save(init_out);
      spdlog::info("wrote {} ({} parameters, vocabulary {})", init_out, model.parameters().size(), model.vocab_size());
    } else if (*mle) {
      auto model = load_policy(mle_model);
      auto data = load_instructions(mle_data);
      if (!mle_ranked.empty()) data = flatten_responses(data, load_dataset<RankedSet>(mle_ranked).records);
      const auto report = mle_finetune(*model, data, mle_h.h);
      model->save(mle_out);
      if (!mle_report.empty()) write_json(mle_report, train_report_json(report));
      spdlog::info("{} steps, final loss {}", report.steps, report.step_losses.empty() ? 0.0 : report.step_losses.back());
    } else if (*ts) {
      auto bundle = make_client(BackendKind::teacher, ts_backend, ts_cache);
      bundle.client->set_stage("teacher-sample");
      const Tokenizer tok(ts_tok);
      std::vector<CandidateSet> out;
      for (const auto& r : load_instructions(ts_data)) {
        out.push_back({r.id, fetch_teacher_responses(r, ts_n, *bundle.client, tok)});
      }
      save_dataset(out, ts_out, tok.id());
      print_costs(*bundle.ledger);
    } else if (*pr) {
      const auto cands = load_dataset<CandidateSet>(pr_in);
      std::vector<RankedSet> out;
      for (const auto& s : cands.records) out.push_back(rank_by_score(s.instruction_id, s.candidates, pr_beta));
      save_dataset(out, pr_out, cands.header.tokenizer);
    } else if (*bs) {
      const auto cands = load_dataset<CandidateSet>(bs_cands).records;
      const auto train_instr = load_instructions(bs_data);
      const auto heldout = load_instructions(bs_heldout);
      const auto init_model = load_policy(bs_init);
      const auto train = [&](const std::vector<RankedSet>& ranked, double) {
        auto m = init_model->clone();
        train_stage(*m, join_ranked(train_instr, ranked), bs_h.h);
        return m;
      };
      const auto result = select_beta(cands, heldout, bs_betas, train);
      write_json(bs_out, Json{{"betas", result.betas}, {"mean_nll", result.mean_nll}, {"best_beta", result.best_beta}});
    } else if (*ss) {
      const auto model = load_policy(ss_model);
      PolicyGenerator gen(*model);
      std::vector<CandidateSet> out;
      for (const auto& r : load_instructions(ss_data)) {
        out.push_back({r.id, sample_diverse(gen, r, ss_p, ss_seed ^ text_seed(r.id))});
      }
      save_dataset(out, ss_out);
    } else if (*jr) {
      auto bundle = make_client(BackendKind::judge, jr_backend, jr_cache);
      const auto instr = load_instructions(jr_data);
      std::map<std::string, const InstructionRecord*> by_id;
      for (const auto& r : instr) by_id[r.id] = &r;
      std::vector<RankedSet> ranked;
      std::vector<SkipRecord> skips;
      for (const auto& s : load_dataset<CandidateSet>(jr_cands).records) {
        const auto it = by_id.find(s.instruction_id);
        if (it == by_id.end()) throw ValidationError("instruction_id", "unknown instruction '" + s.instruction_id + "'");
        auto outcome = judge_rank(*it->second, s.candidates, *bundle.client, "judge-rank");
        if (outcome.ranked) ranked.push_back(std::move(*outcome.ranked));
        if (outcome.skip) {
          spdlog::warn("skipping '{}': {}", s.instruction_id, outcome.skip->reason);
          skips.push_back(std::move(*outcome.skip));
        }
      }
      save_dataset(ranked, jr_out);
      if (!jr_skips.empty()) save_dataset(skips, jr_skips);
      print_costs(*bundle.ledger);
    } else if (*tr) {
      const auto ranked = load_dataset<RankedSet>(tr_data).records;
      if (tr_source != "any") {
        const auto want = parse_ranking_source(tr_source);
        for (const auto& r : ranked) {
          if (r.ranking_source != want) {
            throw ValidationError("ranking_source", "'" + r.instruction_id + "' is ranked by " +
                                                        std::string(to_string(r.ranking_source)));
          }
        }
      }
      auto model = load_policy(tr_init);
      const auto report = train_stage(*model, join_ranked(load_instructions(tr_instr), ranked), tr_h.h);
      model->save(tr_out);
      if (!tr_report.empty()) write_json(tr_report, train_report_json(report));
      spdlog::info("{} steps, pairwise agreement {:.3f} -> {:.3f}", report.steps, report.agreement_before,
                   report.agreement_after);
    } else if (*pt) {
      const auto data = join_ranked(load_instructions(pt_instr), load_dataset<RankedSet>(pt_data).records);
      PrmTrainReport rep;
      pt_h.model.seed = pt_h.seed;
      const auto prm = train_prm(data, pt_h, &rep, fs::path(pt_data).filename().string());
      prm.save(pt_out);
      const Json j{{"train_pairs", rep.train_pairs},       {"heldout_pairs", rep.heldout_pairs},
                   {"train_accuracy", rep.train_accuracy}, {"heldout_accuracy", rep.heldout_accuracy},
                   {"epoch_losses", rep.epoch_losses},     {"heldout_ids", rep.heldout_ids}};
      if (!pt_report.empty()) write_json(pt_report, j);
      spdlog::info("held-out pairwise accuracy {:.3f} over {} pairs", rep.heldout_accuracy, rep.heldout_pairs);
    } else if (*prr) {
      const auto prm = PrmModel::load(prr_prm);
      const auto instr = load_instructions(prr_data);
      std::map<std::string, const InstructionRecord*> by_id;
      for (const auto& r : instr) by_id[r.id] = &r;
      std::vector<RankedSet> out;
      for (const auto& s : load_dataset<CandidateSet>(prr_cands).records) {
        const auto it = by_id.find(s.instruction_id);
        if (it == by_id.end()) throw ValidationError("instruction_id", "unknown instruction '" + s.instruction_id + "'");
        out.push_back(prm_rank(prm, *it->second, s.candidates));
      }
      save_dataset(out, prr_out);
    } else if (*pl_run) {
      RecipeSpec recipe;
      if (!pl_recipe.empty()) {
        recipe = load_recipe(pl_recipe);
      } else if (!pl_preset.empty()) {
        if (pl_instr.empty()) throw ValidationError("instructions", "--preset needs --instructions");
        pl_po.instructions = fs::absolute(pl_instr);
        recipe = make_preset(pl_preset, pl_po);
      } else {
        throw ValidationError("recipe", "give --recipe or --preset");
      }
      RunOptions options;
      if (pl_seed_opt->count() > 0) options.seed = pl_seed;
      if (!pl_stop.empty()) options.stop_after = pl_stop;
      const auto result = run_recipe(recipe, pl_ws, options);
      std::cout << format_status(result.manifest);
      for (const auto& s : result.stages) std::cout << (s.executed ? "ran     " : "skipped ") << s.name << "\n";
    } else if (*pl_status) {
      const auto m = read_manifest(pls_ws);
      if (pls_json) {
        std::cout << m.dump(2) << "\n";
      } else {
        std::cout << format_status(m);
        for (const auto& o : find_orphans(pls_ws)) std::cout << "orphan " << o.generic_string() << "\n";
      }
    } else if (*pl_preset_cmd) {
      plp.instructions = plp_instr;
      write_json(plp_out, Json(make_preset(plp_name, plp)));
    } else if (*er || *em) {
      const bool rouge = er->parsed();
      const auto model = load_policy(rouge ? er_model : em_model);
      PolicyGenerator gen(*model);
      const auto tasks = load_task_dir(rouge ? er_tasks : em_tasks);
      const auto report = rouge ? eval_rouge(gen, tasks, er_shots) : eval_exact_match(gen, tasks, em_shots);
      std::cout << format_table(report);
      const auto& out = rouge ? er_out : em_out;
      if (!out.empty()) write_json(out, Json(report));
    } else if (*ep) {
      const auto a = load_policy(ep_a);
      const auto b = load_policy(ep_b);
      PolicyGenerator ga(*a), gb(*b);
      auto bundle = make_client(BackendKind::judge, ep_judge, ep_cache);
      bundle.client->set_stage("eval-pairwise");
      const auto report = eval_pairwise(ga, gb, load_instructions(ep_q), *bundle.client);
      std::cout << format_table(report);
      if (!ep_out.empty()) write_json(ep_out, Json(report));
      print_costs(*bundle.ledger);
    }
  } catch (const ValidationError& e) {
    spdlog::error("validation error: {}", e.what());
    return kExitValidation;
  } catch (const ParseError& e) {
    spdlog::error("parse error: {}", e.what());
    return kExitValidation;
  } catch (const Json::exception& e) {
    spdlog::error("malformed JSON: {}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
