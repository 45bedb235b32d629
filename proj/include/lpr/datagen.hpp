#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpr/vocab.hpp"

namespace lpr {

enum class ShiftMode { none, reversed, permuted };

ShiftMode shift_mode_from_string(const std::string& s);
std::string to_string(ShiftMode m);

// Synthetic changing-priors task. Each question type owns a set of answers
// whose training prior is Zipf(skew) over a seed-chosen rank order; the test
// prior is a rank-reversed or seed-permuted copy of it, or identical.
struct SyntheticConfig {
  int num_types = 4;
  int answers_per_type = 6;
  // false: disjoint per-type answer sets. true: consecutive types overlap by
  // half of their answers.
  bool shared_vocab = false;
  int train_size = 20000;
  int test_size = 5000;
  double skew = 1.5;
  ShiftMode shift_mode = ShiftMode::reversed;
  int q_dim = 8;
  int v_dim = 32;
  // Probability the visual cue names a uniformly random vocabulary answer.
  double visual_noise = 0.3;
  // Fraction of the 10 votes moved off the majority answer.
  double label_noise = 0.0;
  double feature_sigma = 0.05;
  std::uint64_t seed = 0;

  int total_answers() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, SyntheticConfig& c);

struct Instance {
  std::size_t type_id = 0;
  std::vector<double> q_feat;
  std::vector<double> v_feat;
  SoftLabel label;
};

struct Dataset {
  std::vector<Instance> instances;
  std::size_t num_types = 0;
  std::size_t num_answers = 0;
  std::size_t q_dim = 0;
  std::size_t v_dim = 0;

  std::size_t size() const { return instances.size(); }
  std::vector<TypedLabel> typed_labels() const;
};

// Per-type sampling distributions used by the generator.
struct TypePriors {
  std::vector<std::vector<std::size_t>> answers;  // type -> answer ids, train rank order
  std::vector<std::vector<double>> train;         // type -> prob per entry of answers[type]
  std::vector<std::vector<double>> test;
};

TypePriors type_priors(const SyntheticConfig& config);

struct SyntheticData {
  Dataset train;
  Dataset test;
  AnswerVocabulary vocab;
  std::vector<std::string> types;
};

// Deterministic given config.seed. The training split does not depend on
// shift_mode, so shift_mode=none yields an i.i.d. held-out split for the same
// training set.
SyntheticData generate(const SyntheticConfig& config);

struct TypeStats {
  std::size_t instances = 0;
  std::vector<double> distribution;  // fraction of instances per majority answer
  double out_of_type_rate = 0.0;     // majority answer outside the reference answer set
};

struct StatsReport {
  std::vector<TypeStats> per_type;
  double out_of_type_rate = 0.0;  // over all instances
};

StatsReport dataset_stats(const Dataset& dataset, const TypeCountTable& reference);
// Same report with each instance's answer replaced by the given prediction.
StatsReport prediction_stats(const Dataset& dataset, std::span<const std::size_t> predictions,
                             const TypeCountTable& reference);

double total_variation(std::span<const double> p, std::span<const double> q);

nlohmann::json to_json(const StatsReport& report, const std::vector<std::string>& types);

// JSONL: one {"type", "q", "v", "counts"} object per line.
void write_jsonl(std::ostream& out, const Dataset& dataset);
void write_jsonl(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_jsonl(std::istream& in, std::size_t num_types, std::size_t num_answers);
Dataset read_jsonl(const std::filesystem::path& path, std::size_t num_types,
                   std::size_t num_answers);

}  // namespace lpr
