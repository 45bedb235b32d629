#include "lpr/rescale.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "lpr/errors.hpp"

namespace lpr {

WeightTable::WeightTable(std::size_t num_types, std::size_t num_answers, std::vector<double> mu)
    : num_types_(num_types), num_answers_(num_answers), mu_(std::move(mu)) {
  if (mu_.size() != num_types_ * num_answers_) throw InputError("weight table shape mismatch");
}

double WeightTable::at(std::size_t type, std::size_t answer) const {
  if (type >= num_types_ || answer >= num_answers_) throw InputError("weight index out of range");
  return mu_[type * num_answers_ + answer];
}

std::span<const double> WeightTable::row(std::size_t type) const {
  if (type >= num_types_) throw InputError("weight table type out of range");
  return {mu_.data() + type * num_answers_, num_answers_};
}

double compute_raw_weight(const TypeCountTable& table, std::size_t type, std::size_t answer) {
  const std::int64_t n = table.count(type, answer);
  if (n == 0) return 1.0;
  const std::int64_t rest = table.total(type) - n;
  return static_cast<double>(rest) / static_cast<double>(n);
}

double smooth_weight(double raw) {
  if (!(raw >= 0.0)) throw InputError("raw weight must be non-negative");
  // log1p(exp(x)) == x to double precision beyond 50 and exp would overflow past ~709.
  const double softplus = raw > 50.0 ? raw : std::log1p(std::exp(raw));
  return std::min(kMaxWeight, softplus);
}

WeightTable build_weight_table(const TypeCountTable& table) {
  std::vector<double> mu(table.num_types() * table.num_answers(), 1.0);
  for (std::size_t j = 0; j < table.num_types(); ++j) {
    for (std::size_t i : table.answer_set(j)) {
      mu[j * table.num_answers() + i] = smooth_weight(compute_raw_weight(table, j, i));
    }
  }
  return WeightTable(table.num_types(), table.num_answers(), std::move(mu));
}

void write_weights_csv(std::ostream& out, const TypeCountTable& table,
                       const AnswerVocabulary& vocab) {
  if (vocab.size() != table.num_answers()) throw InputError("vocabulary/count table size mismatch");
  const WeightTable weights = build_weight_table(table);
  out << "type,answer,raw,smoothed\n";
  char buf[64];
  for (std::size_t j = 0; j < table.num_types(); ++j) {
    for (std::size_t i = 0; i < table.num_answers(); ++i) {
      out << table.types()[j] << ',' << vocab.answer(i) << ',';
      std::snprintf(buf, sizeof buf, "%.17g", compute_raw_weight(table, j, i));
      out << buf << ',';
      std::snprintf(buf, sizeof buf, "%.17g", weights.at(j, i));
      out << buf << '\n';
    }
  }
}

void write_weights_csv(const std::filesystem::path& path, const TypeCountTable& table,
                       const AnswerVocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_weights_csv(out, table, vocab);
}

}  // namespace lpr
