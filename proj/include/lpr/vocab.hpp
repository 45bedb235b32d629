#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace lpr {

inline constexpr int kAnnotators = 10;

// Dense, insertion-ordered index of candidate answers.
class AnswerVocabulary {
 public:
  AnswerVocabulary() = default;

  std::size_t size() const { return answers_.size(); }
  const std::string& answer(std::size_t i) const { return answers_.at(i); }
  const std::vector<std::string>& answers() const { return answers_; }

  // Throws InputError for unknown answers.
  std::size_t index(const std::string& answer) const;
  bool contains(const std::string& answer) const { return index_.contains(answer); }

  bool operator==(const AnswerVocabulary& other) const { return answers_ == other.answers_; }

  friend AnswerVocabulary build_vocab(std::span<const std::string> raw_answers);

 private:
  std::vector<std::string> answers_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Deduplicates in first-seen order. Throws InputError("empty vocabulary") on
// empty input and when fewer than two distinct answers remain.
AnswerVocabulary build_vocab(std::span<const std::string> raw_answers);

// Ground truth of one instance: annotator vote counts and the soft scores
// counts / 10.
struct SoftLabel {
  std::vector<double> scores;
  std::vector<int> counts;

  std::size_t size() const { return counts.size(); }
  int total_votes() const;
  // argmax of the vote counts, lowest index on ties.
  std::size_t majority() const;
};

SoftLabel soft_label_from_counts(std::span<const int> annotator_counts);

struct TypedLabel {
  std::size_t type_id = 0;
  SoftLabel label;
};

// Annotator-vote mass n_i^j of answer i under question type j.
class TypeCountTable {
 public:
  TypeCountTable() = default;
  // Validates shape and that every type has at least one positive count.
  TypeCountTable(std::vector<std::string> types, std::size_t num_answers,
                 std::vector<std::int64_t> counts);

  std::size_t num_types() const { return types_.size(); }
  std::size_t num_answers() const { return num_answers_; }
  const std::vector<std::string>& types() const { return types_; }

  std::int64_t count(std::size_t type, std::size_t answer) const;
  std::int64_t total(std::size_t type) const;
  std::span<const std::int64_t> row(std::size_t type) const;
  bool in_type(std::size_t type, std::size_t answer) const { return count(type, answer) > 0; }
  // Indices with a positive count, ascending.
  std::vector<std::size_t> answer_set(std::size_t type) const;

  bool operator==(const TypeCountTable&) const = default;

 private:
  void check_type(std::size_t type) const;

  std::vector<std::string> types_;
  std::size_t num_answers_ = 0;
  std::vector<std::int64_t> counts_;  // row-major [type][answer]
};

// counts[j][i] = sum of annotator votes for answer i over instances of type j.
TypeCountTable count_answers(std::span<const TypedLabel> dataset,
                             const std::vector<std::string>& types,
                             std::size_t num_answers);

// JSON file layout shared by vocab.json / counts.json:
// {"answers": [...], "types": [...], "counts": [[...], ...]}
nlohmann::json to_json(const AnswerVocabulary& vocab, const TypeCountTable& table);
nlohmann::json to_json(const AnswerVocabulary& vocab);
AnswerVocabulary vocab_from_json(const nlohmann::json& j);
TypeCountTable counts_from_json(const nlohmann::json& j);

}  // namespace lpr
