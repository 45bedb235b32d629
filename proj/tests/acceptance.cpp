// Acceptance checks, one line per criterion.
//   lpr_acceptance [--only N]... [--allow-fail N]...
// Exit status is 0 when every criterion passes, ignoring those named by
// --allow-fail (they are still run and reported).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "json.hpp"
#include "lpr/cli.hpp"
#include "lpr/diagnostics.hpp"
#include "lpr/net.hpp"
#include "lpr/rescale.hpp"

using namespace lpr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// log(1 + e^x) in long double, separate from the library's evaluation.
double softplus_oracle(double x) {
  const long double lx = x;
  return static_cast<double>(std::log1p(std::exp(lx)));
}

long double bce_oracle(const std::vector<double>& p, const std::vector<double>& a) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    long double q = 1.0L / (1.0L + std::exp(-static_cast<long double>(p[i])));
    s -= a[i] * std::log(q) + (1 - a[i]) * std::log(1 - q);
  }
  return s;
}

long double ce_oracle(const std::vector<double>& p, const std::vector<double>& a) {
  long double z = 0;
  for (double x : p) z += std::exp(static_cast<long double>(x));
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s -= a[i] * (p[i] - std::log(z));
  return s;
}

struct LossCase {
  std::vector<double> p, a, mu;
};

LossCase random_case(std::mt19937_64& rng, bool unit_weights) {
  std::uniform_int_distribution<int> size(2, 10);
  std::normal_distribution<double> logit(0.0, 3.0);
  std::uniform_real_distribution<double> w(0.5, 100.0);
  const auto n = static_cast<std::size_t>(size(rng));
  LossCase c;
  c.p.resize(n);
  c.a.assign(n, 0.0);
  c.mu.resize(n);
  for (auto& x : c.p) x = logit(rng);
  for (auto& x : c.mu) x = unit_weights ? 1.0 : w(rng);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int v = 0; v < 10; ++v) c.a[pick(rng)] += 0.1;
  return c;
}

TypeCountTable counts_of(const SyntheticData& d) {
  return count_answers(d.train.typed_labels(), d.types, d.vocab.size());
}

// 1. Worked weight example.
Outcome weight_example() {
  // proportions 0.8, 0.04, 0.1, 0.06
  TypeCountTable t({"how many"}, 4, {80, 4, 10, 6});
  const double raw_a = compute_raw_weight(t, 0, 0), raw_b = compute_raw_weight(t, 0, 1);
  const auto w = build_weight_table(t);
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double raw = compute_raw_weight(t, 0, i);
    worst = std::max(worst, std::abs(w.at(0, i) - softplus_oracle(raw)));
  }
  // reference values from 30-digit arithmetic
  worst = std::max(worst, std::abs(w.at(0, 0) - 0.8259394198788436));
  worst = std::max(worst, std::abs(w.at(0, 1) - 24.00000000003775));
  Outcome o;
  o.pass = raw_a == 0.25 && raw_b == 24.0 && worst < 1e-12;
  o.detail = "raw=" + fmt("%.17g", raw_a) + "," + fmt("%.17g", raw_b) +
             " max|smoothed-oracle|=" + fmt("%.2e", worst);
  return o;
}

// 2. Analytic vs central-difference gradients.
Outcome gradient_suite() {
  std::mt19937_64 rng(20240601);
  double worst[3] = {0.0, 0.0, 0.0};
  const LossKind kinds[3] = {LossKind::sigm_bce, LossKind::soft_ce, LossKind::focal};
  for (int k = 0; k < 3; ++k) {
    for (int n = 0; n < 100; ++n) {
      auto c = random_case(rng, false);
      auto r = classification_loss(kinds[k], c.p, c.a, c.mu);
      auto f = [&](const std::vector<double>& x) {
        return classification_loss(kinds[k], x, c.a, c.mu).loss;
      };
      worst[k] = std::max(worst[k], lpr::testing::relative_error(
                                        r.grad, lpr::testing::numeric_gradient(f, c.p)));
    }
  }

  SyntheticConfig dc;
  dc.num_types = 2;
  dc.answers_per_type = 2;
  dc.q_dim = 2;
  dc.v_dim = 4;
  dc.train_size = 6;
  dc.test_size = 1;
  dc.label_noise = 0.2;
  dc.seed = 3;
  auto data = generate(dc);
  auto counts = counts_of(data);
  auto weights = build_weight_table(counts);
  TrainConfig tc;
  tc.use_rescale = true;
  tc.use_mask = true;
  tc.h_q = 3;
  tc.h_v = 4;
  tc.h_f = 5;
  std::mt19937_64 init(7);
  auto params = init_params(dc.q_dim, dc.v_dim, data.train.num_answers, tc, init);
  params.use_mask = true;
  const double model_err =
      lpr::testing::model_gradient_error(params, data.train, tc, &weights, counts);

  Outcome o;
  o.pass = worst[0] < 1e-6 && worst[1] < 1e-6 && worst[2] < 1e-6 && model_err < 1e-5;
  o.detail = "max rel err sigm_bce=" + fmt("%.1e", worst[0]) + " soft_ce=" + fmt("%.1e", worst[1]) +
             " focal=" + fmt("%.1e", worst[2]) + " full model=" + fmt("%.1e", model_err);
  return o;
}

// 3. Unit weights reduce to the unweighted losses.
Outcome reduction() {
  std::mt19937_64 rng(99);
  long double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    auto c = random_case(rng, true);
    worst = std::max(worst, std::abs(static_cast<long double>(sigm_bce(c.p, c.a, c.mu).loss) -
                                     bce_oracle(c.p, c.a)));
    worst = std::max(worst, std::abs(static_cast<long double>(soft_ce(c.p, c.a, c.mu).loss) -
                                     ce_oracle(c.p, c.a)));
  }
  return {worst < 1e-12, "max |weighted(mu=1) - unweighted| over 50 cases=" +
                             fmt("%.2e", static_cast<double>(worst))};
}

// 4. Loss confusion asymmetry on a converged plain Soft-CE model.
Outcome confusion_asymmetry() {
  SyntheticConfig dc;
  dc.num_types = 4;
  dc.answers_per_type = 6;
  dc.skew = 1.5;
  dc.train_size = 20000;
  dc.seed = 1;
  auto data = generate(dc);
  auto counts = counts_of(data);
  TrainConfig tc;
  tc.epochs_finetune = 30;
  tc.seed = 1;
  auto result = train(data.train, tc, nullptr, counts);

  // epoch-mean loss change over the last epoch
  const auto& rows = result.trace.rows;
  std::vector<double> epoch_mean(static_cast<std::size_t>(tc.epochs_finetune), 0.0);
  std::vector<int> epoch_n(epoch_mean.size(), 0);
  for (const auto& r : rows) {
    epoch_mean[static_cast<std::size_t>(r.epoch)] += r.loss_total;
    ++epoch_n[static_cast<std::size_t>(r.epoch)];
  }
  for (std::size_t e = 0; e < epoch_mean.size(); ++e) epoch_mean[e] /= epoch_n[e];
  const double last_change =
      std::abs(epoch_mean.back() - epoch_mean[epoch_mean.size() - 2]) / epoch_mean.back();

  Outcome o;
  o.pass = true;
  int populated = 0;
  std::string ratios;
  for (std::size_t j = 0; j < 4; ++j) {
    auto conf = loss_confusion(result.params, data.train, j, LossKind::soft_ce, counts);
    TriangleAsymmetry t;
    try {
      t = triangle_asymmetry(conf);
    } catch (const std::exception&) {
      ratios += " " + data.types[j] + "=n/a";
      continue;
    }
    ++populated;
    ratios += " " + data.types[j] + "=" + fmt("%.3f", t.ratio) + " (" + fmt("%.3f", t.upper_mean) +
              "/" + fmt("%.3f", t.lower_mean) + ")";
    if (!(t.ratio > 1.5)) o.pass = false;
  }
  if (populated == 0) o.pass = false;
  o.detail = "upper/lower ratio, need > 1.5:" + ratios +
             "; last-epoch loss change " + fmt("%.2e", last_change);
  return o;
}

// Shared runs for criteria 5-7: eight question types, two-unit question
// encoder, reversed priors at test time.
struct VariantResult {
  double shifted_acc = 0.0;
  double iid_acc = 0.0;
  double oot_rate = 0.0;
};

struct SeedRuns {
  VariantResult plain, plain_mask, rescale, rescale_mask, focal;
};

const std::vector<SeedRuns>& benchmark_runs() {
  static std::vector<SeedRuns> runs = [] {
    std::vector<SeedRuns> out;
    for (std::uint64_t seed : {1, 2, 3}) {
      SyntheticConfig dc;
      dc.num_types = 8;
      dc.answers_per_type = 6;
      dc.q_dim = 8;
      dc.v_dim = 48;
      dc.skew = 1.5;
      dc.visual_noise = 0.3;
      dc.shift_mode = ShiftMode::reversed;
      dc.seed = seed;
      auto shifted = generate(dc);
      dc.shift_mode = ShiftMode::none;
      auto iid = generate(dc);
      auto counts = counts_of(shifted);

      auto run = [&](LossKind kind, bool rescale, bool mask) {
        TrainConfig tc;
        tc.loss_kind = kind;
        tc.use_rescale = rescale;
        tc.use_mask = mask;
        tc.h_q = 2;
        tc.seed = seed;
        std::unique_ptr<WeightTable> weights;
        if (rescale) weights = std::make_unique<WeightTable>(build_weight_table(counts));
        auto params = train(shifted.train, tc, weights.get(), counts).params;
        weights.reset();
        VariantResult v;
        auto ev = evaluate(shifted.test, params);
        v.shifted_acc = vqa_accuracy(ev.predictions, shifted.test);
        v.oot_rate = prediction_stats(shifted.test, ev.predictions, counts).out_of_type_rate;
        v.iid_acc = vqa_accuracy(evaluate(iid.test, params).predictions, iid.test);
        return v;
      };
      SeedRuns s;
      s.plain = run(LossKind::soft_ce, false, false);
      s.plain_mask = run(LossKind::soft_ce, false, true);
      s.rescale = run(LossKind::soft_ce, true, false);
      s.rescale_mask = run(LossKind::soft_ce, true, true);
      s.focal = run(LossKind::focal, false, false);
      out.push_back(s);
    }
    return out;
  }();
  return runs;
}

// 5. Re-scaling + mask vs plain Soft-CE under shifted priors.
Outcome main_effect() {
  Outcome o{true, ""};
  for (std::size_t k = 0; k < benchmark_runs().size(); ++k) {
    const auto& s = benchmark_runs()[k];
    const double gain = s.rescale_mask.shifted_acc - s.plain.shifted_acc;
    const double iid_gap = s.plain.iid_acc - s.rescale_mask.iid_acc;
    if (!(gain >= 0.05 && iid_gap > 0.0)) o.pass = false;
    o.detail += " seed" + std::to_string(k + 1) + ": shifted " + fmt("%.4f", s.plain.shifted_acc) +
                "->" + fmt("%.4f", s.rescale_mask.shifted_acc) + " (+" + fmt("%.4f", gain) +
                "), iid " + fmt("%.4f", s.plain.iid_acc) + " vs " +
                fmt("%.4f", s.rescale_mask.iid_acc) + ";";
  }
  o.detail = "plain->rescale+mask" + o.detail;
  return o;
}

// 6. The mask lowers the out-of-type prediction rate.
Outcome mask_effect() {
  Outcome o{true, "out-of-type rate without->with mask"};
  for (std::size_t k = 0; k < benchmark_runs().size(); ++k) {
    const auto& s = benchmark_runs()[k];
    if (!(s.plain_mask.oot_rate < s.plain.oot_rate)) o.pass = false;
    if (!(s.rescale_mask.oot_rate < s.rescale.oot_rate)) o.pass = false;
    o.detail += " seed" + std::to_string(k + 1) + ": plain " + fmt("%.4f", s.plain.oot_rate) +
                "->" + fmt("%.4f", s.plain_mask.oot_rate) + ", rescaled " +
                fmt("%.4f", s.rescale.oot_rate) + "->" + fmt("%.4f", s.rescale_mask.oot_rate) + ";";
  }
  return o;
}

// 7. Re-scaling vs focal loss on the shifted test split.
Outcome focal_comparison() {
  Outcome o{true, "shifted acc rescale vs focal(gamma=2)"};
  for (std::size_t k = 0; k < benchmark_runs().size(); ++k) {
    const auto& s = benchmark_runs()[k];
    if (!(s.rescale.shifted_acc >= s.focal.shifted_acc)) o.pass = false;
    o.detail += " seed" + std::to_string(k + 1) + ": " + fmt("%.4f", s.rescale.shifted_acc) +
                " vs " + fmt("%.4f", s.focal.shifted_acc) + ";";
  }
  return o;
}

// 8. Metric examples.
Outcome metrics() {
  std::vector<std::vector<int>> votes{{10, 0}, {1, 9}, {0, 10}};
  std::vector<std::size_t> preds{0, 0, 0};
  const double a10 = vqa_accuracy(std::span(preds).subspan(0, 1), std::span(votes).subspan(0, 1));
  const double a1 = vqa_accuracy(std::span(preds).subspan(1, 1), std::span(votes).subspan(1, 1));
  const double a0 = vqa_accuracy(std::span(preds).subspan(2, 1), std::span(votes).subspan(2, 1));

  std::vector<std::size_t> x{0, 1, 2, 2, 1, 0, 3};
  const double k_same = cohens_kappa(x, x);
  std::vector<std::size_t> zeros(10, 0), half{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const double k_half = cohens_kappa(zeros, half);

  Outcome o;
  o.pass = a10 == 1.0 && a1 == 1.0 / 3.0 && a0 == 0.0 && k_same == 1.0 && k_half == 0.0;
  o.detail = "acc(10 votes)=" + fmt("%g", a10) + " acc(1 vote)=" + fmt("%.17g", a1) +
             " acc(0 votes)=" + fmt("%g", a0) + " kappa(x,x)=" + fmt("%g", k_same) +
             " kappa(all-0 vs half)=" + fmt("%g", k_half);
  return o;
}

// 9. Prediction never sees the weight table.
static_assert(std::is_same_v<decltype(&predict), std::size_t (*)(const Instance&, const ModelParams&)>);
static_assert(std::is_same_v<decltype(&evaluate), Evaluation (*)(const Dataset&, const ModelParams&)>);

Outcome inference_invariant() {
  SyntheticConfig dc;
  dc.train_size = 2000;
  dc.test_size = 500;
  dc.v_dim = 24;
  dc.seed = 4;
  auto data = generate(dc);
  auto counts = counts_of(data);
  TrainConfig tc;
  tc.use_rescale = true;
  tc.use_mask = true;
  tc.epochs_mask_pretrain = 5;
  tc.epochs_finetune = 3;
  auto weights = std::make_unique<WeightTable>(build_weight_table(counts));
  auto params = train(data.train, tc, weights.get(), counts).params;
  weights.reset();
  auto ev = evaluate(data.test, params);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    agree += predict(data.test.instances[i], params) == ev.predictions[i];
  }
  Outcome o;
  o.pass = agree == data.test.size();
  o.detail = "predict(instance, params) signature checked at compile time; " +
             std::to_string(agree) + "/" + std::to_string(data.test.size()) +
             " predictions after the weight table was destroyed";
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. gen-data + train + eval twice with one seed.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "lpr_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  nlohmann::json cfg = {{"data", {{"train_size", 4000}, {"test_size", 1000}}},
                        {"train", {{"use_mask", true}, {"use_rescale", true}, {"epochs_finetune", 3},
                                   {"epochs_mask_pretrain", 3}, {"dropout_rate", 0.2}}}};
  std::ofstream(root / "config.json") << cfg.dump(2);
  const auto config = (root / "config.json").string();
  std::vector<std::string> metrics;
  bool ok = true;
  for (const char* tag : {"a", "b"}) {
    const auto dir = root / tag;
    const auto data = (dir / "data").string(), ckpt = (dir / "model.json").string();
    ok = ok && cli::run({"gen-data", "--config", config, "--seed", "42", "--out", data}) == 0;
    ok = ok && cli::run({"train", "--config", config, "--seed", "42", "--data", data, "--out", ckpt}) == 0;
    ok = ok && cli::run({"eval", "--config", config, "--seed", "42", "--data", data, "--ckpt", ckpt,
                         "--out", (dir / "report").string()}) == 0;
    metrics.push_back(slurp(dir / "report" / "metrics.json"));
  }
  fs::remove_all(root);
  Outcome o;
  o.pass = ok && !metrics[0].empty() && metrics[0] == metrics[1];
  o.detail = std::string("metrics.json ") + (metrics[0] == metrics[1] ? "identical" : "differs") +
             " across two runs (" + std::to_string(metrics[0].size()) + " bytes)";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only, allow_fail;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--allow-fail", allow_fail, "Criteria whose failure does not fail the run");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "weight worked example", 1.0, weight_example},
      {2, "gradient suite", 10.0, gradient_suite},
      {3, "unit-weight reduction", 1.0, reduction},
      {4, "loss confusion asymmetry", 60.0, confusion_asymmetry},
      {5, "re-scaling + mask under shifted priors", 120.0, main_effect},
      {6, "mask lowers out-of-type predictions", 120.0, mask_effect},
      {7, "re-scaling vs focal loss", 120.0, focal_comparison},
      {8, "metric examples", 1.0, metrics},
      {9, "inference without the weight table", 60.0, inference_invariant},
      {10, "end-to-end determinism", 120.0, determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  const std::set<int> tolerated(allow_fail.begin(), allow_fail.end());

  // criteria 5-7 share one set of runs, timed together
  double shared_seconds = 0.0;
  if (selected.empty() || selected.count(5) || selected.count(6) || selected.count(7)) {
    const auto t0 = std::chrono::steady_clock::now();
    benchmark_runs();
    shared_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  int failures = 0, tolerated_failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.id >= 5 && c.id <= 7) secs += shared_seconds;
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name << ": " << o.detail
              << " [" << fmt("%.2f", secs) << "s, limit " << fmt("%g", c.limit_s) << "s"
              << (in_time ? "" : ", over time") << "]" << std::endl;
    if (!pass) {
      if (tolerated.count(c.id)) ++tolerated_failures;
      else ++failures;
    }
  }
  std::cout << "summary: " << failures + tolerated_failures << " failing";
  if (tolerated_failures) std::cout << " (" << tolerated_failures << " allowed)";
  std::cout << std::endl;
  return failures == 0 ? 0 : 1;
}
