#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpr/cli.hpp"
#include "lpr/diagnostics.hpp"
#include "lpr/errors.hpp"
#include "lpr/losses.hpp"
#include "lpr/mask.hpp"
#include "lpr/net.hpp"
#include "lpr/rescale.hpp"

namespace py = pybind11;

namespace {

using Grad = std::pair<double, std::vector<double>>;

lpr::TypeCountTable table_from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  if (rows.empty()) throw lpr::InputError("empty count table");
  std::vector<std::string> types;
  std::vector<std::int64_t> flat;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != rows[0].size()) throw lpr::InputError("ragged count table");
    types.push_back("qt_" + std::to_string(j));
    flat.insert(flat.end(), rows[j].begin(), rows[j].end());
  }
  return lpr::TypeCountTable(std::move(types), rows[0].size(), std::move(flat));
}

std::vector<std::vector<double>> weight_table(const std::vector<std::vector<std::int64_t>>& rows) {
  const auto table = table_from_rows(rows);
  const auto w = lpr::build_weight_table(table);
  std::vector<std::vector<double>> out;
  for (std::size_t j = 0; j < w.num_types(); ++j) {
    auto r = w.row(j);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

Grad loss(lpr::LossKind kind, const std::vector<double>& logits, const std::vector<double>& targets,
          const std::vector<double>& mu, double alpha, double gamma) {
  auto r = lpr::classification_loss(kind, logits, targets, mu, {alpha, gamma});
  return {r.loss, r.grad};
}

// Generate, train and evaluate in one call; returns a JSON summary.
std::string run_experiment(const std::string& data_json, const std::string& train_json) {
  auto dc = nlohmann::json::parse(data_json).get<lpr::SyntheticConfig>();
  auto tc = nlohmann::json::parse(train_json).get<lpr::TrainConfig>();
  dc.validate();
  const auto data = lpr::generate(dc);
  const auto counts = lpr::count_answers(data.train.typed_labels(), data.types, data.vocab.size());
  std::unique_ptr<lpr::WeightTable> weights;
  if (tc.use_rescale) weights = std::make_unique<lpr::WeightTable>(lpr::build_weight_table(counts));
  lpr::TrainResult result;
  {
    py::gil_scoped_release release;
    result = lpr::train(data.train, tc, weights.get(), counts);
  }
  const auto ev = lpr::evaluate(data.test, result.params);
  const auto stats = lpr::prediction_stats(data.test, ev.predictions, counts);
  nlohmann::json out = {
      {"test_acc", lpr::vqa_accuracy(ev.predictions, data.test)},
      {"kappa", lpr::cohens_kappa(ev.predictions, lpr::hard_labels(data.test))},
      {"out_of_type_rate", stats.out_of_type_rate},
      {"iterations", result.trace.rows.size()},
      {"mask_epochs", result.trace.mask_epochs},
      {"final_loss", result.trace.rows.empty() ? 0.0 : result.trace.rows.back().loss_total}};
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_lpr, m) {
  m.doc() = "Loss re-scaling and answer-mask primitives";

  py::register_exception<lpr::InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<lpr::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("raw_weight",
        [](const std::vector<std::vector<std::int64_t>>& rows, std::size_t type, std::size_t answer) {
          return lpr::compute_raw_weight(table_from_rows(rows), type, answer);
        },
        py::arg("counts"), py::arg("type"), py::arg("answer"));
  m.def("smooth_weight", &lpr::smooth_weight, py::arg("raw"));
  m.def("weight_table", &weight_table, py::arg("counts"),
        "Smoothed weights per [type][answer] from per-type vote counts");

  m.def("sigm_bce",
        [](const std::vector<double>& p, const std::vector<double>& a, const std::vector<double>& mu) {
          return loss(lpr::LossKind::sigm_bce, p, a, mu, 1.0, 2.0);
        },
        py::arg("logits"), py::arg("targets"), py::arg("mu"));
  m.def("soft_ce",
        [](const std::vector<double>& p, const std::vector<double>& a, const std::vector<double>& mu) {
          return loss(lpr::LossKind::soft_ce, p, a, mu, 1.0, 2.0);
        },
        py::arg("logits"), py::arg("targets"), py::arg("mu"));
  m.def("focal",
        [](const std::vector<double>& p, const std::vector<double>& a, double alpha, double gamma) {
          return loss(lpr::LossKind::focal, p, a, std::vector<double>(p.size(), 1.0), alpha, gamma);
        },
        py::arg("logits"), py::arg("targets"), py::arg("alpha") = 1.0, py::arg("gamma") = 2.0);

  m.def("softplus_g", &lpr::softplus_g, py::arg("x"), py::arg("alpha") = 1.0);
  m.def("mask_loss",
        [](const std::vector<double>& mp, const std::vector<double>& ma, double alpha) {
          auto r = lpr::mask_loss(mp, ma, alpha);
          return Grad{r.loss, r.grad};
        },
        py::arg("m_p"), py::arg("m_a"), py::arg("alpha") = 1.0);

  m.def("vqa_accuracy",
        [](const std::vector<std::size_t>& preds, const std::vector<std::vector<int>>& votes) {
          return lpr::vqa_accuracy(preds, votes);
        },
        py::arg("predictions"), py::arg("votes"));
  m.def("cohens_kappa",
        [](const std::vector<std::size_t>& p, const std::vector<std::size_t>& l) {
          return lpr::cohens_kappa(p, l);
        },
        py::arg("predictions"), py::arg("labels"));

  m.def("run_experiment", &run_experiment, py::arg("data_json"), py::arg("train_json"));
  m.def("cli", [](const std::vector<std::string>& args) { return lpr::cli::run(args); },
        py::arg("args"), "Run the command-line interface; returns the exit code");
}
