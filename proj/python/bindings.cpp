#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rankft/errors.hpp"
#include "rankft/eval.hpp"
#include "rankft/judge.hpp"
#include "rankft/json_io.hpp"
#include "rankft/losses.hpp"
#include "rankft/mock_backends.hpp"
#include "rankft/pipeline.hpp"
#include "rankft/policy_model.hpp"
#include "rankft/prob_rank.hpp"
#include "rankft/rouge.hpp"
#include "rankft/sampler.hpp"

namespace py = pybind11;
using namespace rankft;

namespace {

Json to_cpp(const py::handle& obj) {
  return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object to_py(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

InstructionRecord record(const py::dict& d) {
  Json j = to_cpp(d);
  if (!j.contains("id")) j["id"] = "python";
  if (!j.contains("input")) j["input"] = "";
  if (!j.contains("original_response")) j["original_response"] = "";
  return j.get<InstructionRecord>();
}

struct Model {
  std::unique_ptr<PolicyModel> impl;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "rankft core bindings";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
  static py::exception<ParseError> parse(m, "ParseError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation, e.what());
    } catch (const ParseError& e) {
      py::set_error(parse, e.what());
    } catch (const DomainError& e) {
      py::set_error(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("length_penalized_score", &length_penalized_score, py::arg("logprob_sum"), py::arg("length"),
        py::arg("beta") = kDefaultBeta);
  m.def(
      "rank_loss", [](const std::vector<double>& v, double margin) { return rank_loss(v, margin); }, py::arg("values"),
      py::arg("margin"));
  m.def(
      "rank_loss_gradient", [](const std::vector<double>& v, double margin) { return rank_loss_gradient(v, margin); },
      py::arg("values"), py::arg("margin"));
  m.def(
      "rouge_l",
      [](const std::string& a, const std::string& b, const std::string& tokenizer) {
        return rouge_l(a, b, Tokenizer(tokenizer));
      },
      py::arg("reference"), py::arg("candidate"), py::arg("tokenizer") = std::string(Tokenizer::kWhitespace));

  m.def(
      "build_judge_prompt",
      [](const py::dict& instruction, const std::vector<std::string>& responses) {
        return build_judge_prompt(record(instruction), responses);
      },
      py::arg("instruction"), py::arg("responses"));
  m.def(
      "parse_judge_output", [](const std::string& raw, int n) { return to_py(Json(parse_judge_output(raw, n))); },
      py::arg("reply"), py::arg("n"));

  py::class_<Model>(m, "PolicyModel")
      .def_static(
          "load", [](const std::string& path) { return Model{load_policy(path)}; }, py::arg("path"))
      .def_property_readonly("kind", [](const Model& self) { return std::string(self.impl->kind()); })
      .def_property_readonly("num_parameters", [](const Model& self) { return self.impl->parameters().size(); })
      .def(
          "token_logprobs",
          [](const Model& self, const py::dict& instruction, const std::string& response) {
            return self.impl->token_logprobs(record(instruction), response);
          },
          py::arg("instruction"), py::arg("response"))
      .def(
          "sample",
          [](const Model& self, const py::dict& instruction, double temperature, std::uint64_t seed) {
            Rng rng(seed);
            return self.impl->sample(record(instruction), temperature, rng);
          },
          py::arg("instruction"), py::arg("temperature") = 0.0, py::arg("seed") = 0)
      .def(
          "save", [](const Model& self, const std::string& path) { self.impl->save(path); }, py::arg("path"));

  m.def(
      "sample_diverse",
      [](const Model& model, const py::dict& instruction, int n, double tau, double temperature, double step,
         int max_trials, std::uint64_t seed) {
        DiversityPolicy p;
        p.n = n;
        p.tau = tau;
        p.temperature_start = temperature;
        p.temperature_step = step;
        p.max_trials = max_trials;
        PolicyGenerator gen(*model.impl);
        return to_py(Json(sample_diverse(gen, record(instruction), p, seed)));
      },
      py::arg("model"), py::arg("instruction"), py::arg("n") = 4, py::arg("tau") = 0.8, py::arg("temperature") = 1.0,
      py::arg("temperature_step") = 0.1, py::arg("max_trials") = 3, py::arg("seed") = 0);

  m.def("preset_names", &preset_names);
  m.def(
      "run_preset",
      [](const std::string& name, const std::string& instructions, const std::string& workspace, std::size_t total,
         std::size_t contextual, std::uint64_t seed, std::optional<std::string> stop_after, const py::dict& options) {
        PresetOptions o;
        o.instructions = instructions;
        o.total = total;
        o.contextual = contextual;
        o.seed = seed;
        const Json extra = to_cpp(options);
        for (const auto& [key, value] : extra.items()) {
          if (key == "ranking_learning_rate") o.ranking_learning_rate = value.get<double>();
          else if (key == "mle_learning_rate") o.mle_learning_rate = value.get<double>();
          else if (key == "mle_epochs") o.mle_epochs = value.get<int>();
          else if (key == "ranking_epochs") o.ranking_epochs = value.get<int>();
          else if (key == "batch_size") o.batch_size = value.get<int>();
          else if (key == "warmup_steps") o.warmup_steps = value.get<int>();
          else if (key == "model") o.model = value;
          else if (key == "teacher") o.teacher = value;
          else if (key == "judge") o.judge = value;
          else if (key == "fresh_contextual_slice") o.fresh_contextual_slice = value.get<bool>();
          else throw ValidationError(key, "unknown preset option");
        }
        RunOptions run;
        run.stop_after = std::move(stop_after);
        const auto result = run_recipe(make_preset(name, o), workspace, run);
        return to_py(result.manifest);
      },
      py::arg("name"), py::arg("instructions"), py::arg("workspace"), py::arg("total") = 200,
      py::arg("contextual") = 50, py::arg("seed") = 0, py::arg("stop_after") = py::none(),
      py::arg("options") = py::dict());
  m.def(
      "run_recipe",
      [](const std::string& recipe, const std::string& workspace, std::optional<std::string> stop_after) {
        RunOptions run;
        run.stop_after = std::move(stop_after);
        return to_py(run_recipe(load_recipe(recipe), workspace, run).manifest);
      },
      py::arg("recipe"), py::arg("workspace"), py::arg("stop_after") = py::none());
  m.def(
      "read_manifest", [](const std::string& workspace) { return to_py(read_manifest(workspace)); },
      py::arg("workspace"));

  m.def(
      "make_toy_instructions",
      [](const std::string& path, int count, std::uint64_t seed) {
        save_dataset(make_synthetic_instructions(count, seed), path);
      },
      py::arg("path"), py::arg("count"), py::arg("seed") = 0);
  m.def(
      "eval_rouge",
      [](const Model& model, const std::string& tasks, int shots) {
        PolicyGenerator gen(*model.impl);
        return to_py(Json(eval_rouge(gen, load_task_dir(tasks), shots)));
      },
      py::arg("model"), py::arg("tasks"), py::arg("shots") = 0);
}
