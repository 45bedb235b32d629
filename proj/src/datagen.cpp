#include "lpr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include "lpr/errors.hpp"

namespace lpr {
namespace {

enum Stream : std::uint32_t { kStructure = 1, kTrain = 2, kTest = 3, kPermute = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

std::vector<std::vector<std::size_t>> type_answer_sets(const SyntheticConfig& c) {
  const auto k = static_cast<std::size_t>(c.answers_per_type);
  const std::size_t stride = c.shared_vocab ? (k + 1) / 2 : k;
  std::vector<std::vector<std::size_t>> sets(c.num_types);
  for (std::size_t j = 0; j < sets.size(); ++j) {
    for (std::size_t r = 0; r < k; ++r) sets[j].push_back(j * stride + r);
  }
  return sets;
}

std::vector<int> synth_votes(std::size_t answer, const std::vector<std::size_t>& same_type,
                             std::size_t num_answers, double label_noise, std::mt19937_64& rng) {
  std::vector<int> counts(num_answers, 0);
  const int majority = static_cast<int>(std::lround(kAnnotators * (1.0 - label_noise)));
  counts[answer] = majority;
  std::vector<std::size_t> others;
  for (auto a : same_type) {
    if (a != answer) others.push_back(a);
  }
  std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
  for (int v = majority; v < kAnnotators; ++v) ++counts[others[pick(rng)]];
  return counts;
}

Dataset sample_split(const SyntheticConfig& c, const TypePriors& priors, int size,
                     const std::vector<std::vector<double>>& probs, std::mt19937_64& rng) {
  Dataset ds;
  ds.num_types = static_cast<std::size_t>(c.num_types);
  ds.num_answers = static_cast<std::size_t>(c.total_answers());
  ds.q_dim = static_cast<std::size_t>(c.q_dim);
  ds.v_dim = static_cast<std::size_t>(c.v_dim);
  ds.instances.reserve(static_cast<std::size_t>(size));

  std::vector<std::discrete_distribution<std::size_t>> answer_dists;
  for (const auto& p : probs) answer_dists.emplace_back(p.begin(), p.end());
  std::uniform_int_distribution<std::size_t> pick_type(0, ds.num_types - 1);
  std::uniform_int_distribution<std::size_t> pick_any(0, ds.num_answers - 1);
  std::bernoulli_distribution noisy_cue(c.visual_noise);
  std::normal_distribution<double> jitter(0.0, c.feature_sigma);

  for (int n = 0; n < size; ++n) {
    Instance inst;
    inst.type_id = pick_type(rng);
    const auto& answers = priors.answers[inst.type_id];
    const std::size_t answer = answers[answer_dists[inst.type_id](rng)];
    const std::size_t cue = noisy_cue(rng) ? pick_any(rng) : answer;

    inst.q_feat.resize(ds.q_dim);
    for (auto& x : inst.q_feat) x = jitter(rng);
    inst.q_feat[inst.type_id] += 1.0;
    inst.v_feat.resize(ds.v_dim);
    for (auto& x : inst.v_feat) x = jitter(rng);
    inst.v_feat[cue] += 1.0;

    auto votes = synth_votes(answer, answers, ds.num_answers, c.label_noise, rng);
    inst.label = soft_label_from_counts(votes);
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

}  // namespace

ShiftMode shift_mode_from_string(const std::string& s) {
  if (s == "none") return ShiftMode::none;
  if (s == "reversed") return ShiftMode::reversed;
  if (s == "permuted") return ShiftMode::permuted;
  throw InputError("unknown shift_mode '" + s + "'");
}

std::string to_string(ShiftMode m) {
  switch (m) {
    case ShiftMode::none: return "none";
    case ShiftMode::reversed: return "reversed";
    case ShiftMode::permuted: return "permuted";
  }
  return "none";
}

int SyntheticConfig::total_answers() const {
  if (!shared_vocab) return num_types * answers_per_type;
  const int stride = (answers_per_type + 1) / 2;
  return stride * (num_types - 1) + answers_per_type;
}

void SyntheticConfig::validate() const {
  if (num_types <= 0) throw InputError("num_types must be positive");
  if (answers_per_type < 2) throw InputError("answers_per_type must be at least 2");
  if (train_size <= 0 || test_size <= 0) throw InputError("split sizes must be positive");
  if (!(skew >= 0.0) || !std::isfinite(skew)) throw InputError("skew must be >= 0");
  if (q_dim < num_types) throw InputError("q_dim must be >= num_types");
  if (v_dim < total_answers()) throw InputError("v_dim must be >= total answers");
  if (!(visual_noise >= 0.0 && visual_noise <= 1.0)) throw InputError("visual_noise outside [0,1]");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw InputError("label_noise outside [0,1]");
  if (!(feature_sigma >= 0.0) || !std::isfinite(feature_sigma)) {
    throw InputError("feature_sigma must be >= 0");
  }
}

void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"num_types", c.num_types},
                     {"answers_per_type", c.answers_per_type},
                     {"shared_vocab", c.shared_vocab},
                     {"train_size", c.train_size},
                     {"test_size", c.test_size},
                     {"skew", c.skew},
                     {"shift_mode", to_string(c.shift_mode)},
                     {"q_dim", c.q_dim},
                     {"v_dim", c.v_dim},
                     {"visual_noise", c.visual_noise},
                     {"label_noise", c.label_noise},
                     {"feature_sigma", c.feature_sigma},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c.num_types = j.value("num_types", c.num_types);
  c.answers_per_type = j.value("answers_per_type", c.answers_per_type);
  c.shared_vocab = j.value("shared_vocab", c.shared_vocab);
  c.train_size = j.value("train_size", c.train_size);
  c.test_size = j.value("test_size", c.test_size);
  c.skew = j.value("skew", c.skew);
  if (j.contains("shift_mode")) c.shift_mode = shift_mode_from_string(j.at("shift_mode"));
  c.q_dim = j.value("q_dim", c.q_dim);
  c.v_dim = j.value("v_dim", c.v_dim);
  c.visual_noise = j.value("visual_noise", c.visual_noise);
  c.label_noise = j.value("label_noise", c.label_noise);
  c.feature_sigma = j.value("feature_sigma", c.feature_sigma);
  c.seed = j.value("seed", c.seed);
}

std::vector<TypedLabel> Dataset::typed_labels() const {
  std::vector<TypedLabel> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back({inst.type_id, inst.label});
  return out;
}

TypePriors type_priors(const SyntheticConfig& config) {
  config.validate();
  TypePriors priors;
  auto structure = make_rng(config.seed, kStructure);
  auto permute = make_rng(config.seed, kPermute);

  const auto k = static_cast<std::size_t>(config.answers_per_type);
  std::vector<double> zipf(k);
  for (std::size_t r = 0; r < k; ++r) zipf[r] = std::pow(static_cast<double>(r + 1), -config.skew);
  const double z = std::accumulate(zipf.begin(), zipf.end(), 0.0);
  for (auto& p : zipf) p /= z;

  for (auto answers : type_answer_sets(config)) {
    std::shuffle(answers.begin(), answers.end(), structure);
    std::vector<double> test = zipf;
    switch (config.shift_mode) {
      case ShiftMode::none: break;
      case ShiftMode::reversed: std::reverse(test.begin(), test.end()); break;
      case ShiftMode::permuted: std::shuffle(test.begin(), test.end(), permute); break;
    }
    priors.answers.push_back(std::move(answers));
    priors.train.push_back(zipf);
    priors.test.push_back(std::move(test));
  }
  return priors;
}

SyntheticData generate(const SyntheticConfig& config) {
  const TypePriors priors = type_priors(config);
  SyntheticData data;

  std::vector<std::string> answers;
  for (int i = 0; i < config.total_answers(); ++i) answers.push_back("ans_" + std::to_string(i));
  data.vocab = build_vocab(answers);
  for (int j = 0; j < config.num_types; ++j) data.types.push_back("qt_" + std::to_string(j));

  auto train_rng = make_rng(config.seed, kTrain);
  auto test_rng = make_rng(config.seed, kTest);
  data.train = sample_split(config, priors, config.train_size, priors.train, train_rng);
  data.test = sample_split(config, priors, config.test_size, priors.test, test_rng);
  return data;
}

namespace {

StatsReport stats_impl(const Dataset& dataset, const TypeCountTable& reference,
                       const std::function<std::size_t(std::size_t)>& answer_of) {
  if (dataset.num_answers != reference.num_answers() || dataset.num_types != reference.num_types()) {
    throw InputError("dataset vocabulary does not match the reference count table");
  }
  StatsReport report;
  report.per_type.resize(dataset.num_types);
  for (auto& t : report.per_type) t.distribution.assign(dataset.num_answers, 0.0);
  std::size_t outside_total = 0;
  std::vector<std::size_t> outside(dataset.num_types, 0);
  for (std::size_t n = 0; n < dataset.size(); ++n) {
    const auto& inst = dataset.instances[n];
    if (inst.type_id >= dataset.num_types) throw InputError("instance type out of range");
    const std::size_t a = answer_of(n);
    if (a >= dataset.num_answers) throw InputError("answer index out of range");
    auto& t = report.per_type[inst.type_id];
    ++t.instances;
    t.distribution[a] += 1.0;
    if (!reference.in_type(inst.type_id, a)) {
      ++outside[inst.type_id];
      ++outside_total;
    }
  }
  for (std::size_t j = 0; j < report.per_type.size(); ++j) {
    auto& t = report.per_type[j];
    if (t.instances == 0) continue;
    for (auto& d : t.distribution) d /= static_cast<double>(t.instances);
    t.out_of_type_rate = static_cast<double>(outside[j]) / static_cast<double>(t.instances);
  }
  if (dataset.size() > 0) {
    report.out_of_type_rate = static_cast<double>(outside_total) / static_cast<double>(dataset.size());
  }
  return report;
}

}  // namespace

StatsReport dataset_stats(const Dataset& dataset, const TypeCountTable& reference) {
  return stats_impl(dataset, reference,
                    [&](std::size_t n) { return dataset.instances[n].label.majority(); });
}

StatsReport prediction_stats(const Dataset& dataset, std::span<const std::size_t> predictions,
                             const TypeCountTable& reference) {
  if (predictions.size() != dataset.size()) throw InputError("predictions/dataset length mismatch");
  return stats_impl(dataset, reference, [&](std::size_t n) { return predictions[n]; });
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InputError("distribution length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

nlohmann::json to_json(const StatsReport& report, const std::vector<std::string>& types) {
  nlohmann::json per_type = nlohmann::json::array();
  for (std::size_t j = 0; j < report.per_type.size(); ++j) {
    const auto& t = report.per_type[j];
    per_type.push_back({{"type", j < types.size() ? types[j] : std::to_string(j)},
                        {"instances", t.instances},
                        {"out_of_type_rate", t.out_of_type_rate},
                        {"distribution", t.distribution}});
  }
  return {{"out_of_type_rate", report.out_of_type_rate}, {"per_type", per_type}};
}

void write_jsonl(std::ostream& out, const Dataset& dataset) {
  for (const auto& inst : dataset.instances) {
    nlohmann::ordered_json line;
    line["type"] = inst.type_id;
    line["q"] = inst.q_feat;
    line["v"] = inst.v_feat;
    line["counts"] = inst.label.counts;
    out << line.dump() << '\n';
  }
}

void write_jsonl(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_jsonl(out, dataset);
  if (!out) throw InputError("write failed for " + path.string());
}

Dataset read_jsonl(std::istream& in, std::size_t num_types, std::size_t num_answers) {
  Dataset ds;
  ds.num_types = num_types;
  ds.num_answers = num_answers;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Instance inst;
      inst.type_id = j.at("type").get<std::size_t>();
      inst.q_feat = j.at("q").get<std::vector<double>>();
      inst.v_feat = j.at("v").get<std::vector<double>>();
      inst.label = soft_label_from_counts(j.at("counts").get<std::vector<int>>());
      if (inst.type_id >= num_types) throw InputError("type id out of range");
      if (inst.label.size() != num_answers) throw InputError("counts length does not match vocabulary");
      if (ds.instances.empty()) {
        ds.q_dim = inst.q_feat.size();
        ds.v_dim = inst.v_feat.size();
      } else if (inst.q_feat.size() != ds.q_dim || inst.v_feat.size() != ds.v_dim) {
        throw InputError("inconsistent feature dimensions");
      }
      ds.instances.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

Dataset read_jsonl(const std::filesystem::path& path, std::size_t num_types,
                   std::size_t num_answers) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_jsonl(in, num_types, num_answers);
}

}  // namespace lpr
