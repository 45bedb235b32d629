#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "lpr/vocab.hpp"

namespace lpr {

inline constexpr double kMaxWeight = 100.0;

// Per-(question type, answer) loss multipliers. In-type entries are the
// smoothed frequency-ratio weights; out-of-type entries are exactly 1.
class WeightTable {
 public:
  WeightTable() = default;
  WeightTable(std::size_t num_types, std::size_t num_answers, std::vector<double> mu);

  std::size_t num_types() const { return num_types_; }
  std::size_t num_answers() const { return num_answers_; }
  double at(std::size_t type, std::size_t answer) const;
  std::span<const double> row(std::size_t type) const;

 private:
  std::size_t num_types_ = 0;
  std::size_t num_answers_ = 0;
  std::vector<double> mu_;
};

// (sum_k n_k - n_i) / n_i for answers in the type's answer set, 1 otherwise.
double compute_raw_weight(const TypeCountTable& table, std::size_t type, std::size_t answer);

// min(100, log(1 + exp(raw))).
double smooth_weight(double raw);

WeightTable build_weight_table(const TypeCountTable& table);

// CSV with header type,answer,raw,smoothed; one row per (type, answer).
void write_weights_csv(std::ostream& out, const TypeCountTable& table,
                       const AnswerVocabulary& vocab);
void write_weights_csv(const std::filesystem::path& path, const TypeCountTable& table,
                       const AnswerVocabulary& vocab);

}  // namespace lpr
