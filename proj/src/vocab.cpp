#include "lpr/vocab.hpp"

#include <algorithm>
#include <numeric>

#include "lpr/errors.hpp"

namespace lpr {

std::size_t AnswerVocabulary::index(const std::string& answer) const {
  auto it = index_.find(answer);
  if (it == index_.end()) throw InputError("unknown answer '" + answer + "'");
  return it->second;
}

AnswerVocabulary build_vocab(std::span<const std::string> raw_answers) {
  if (raw_answers.empty()) throw InputError("empty vocabulary");
  AnswerVocabulary vocab;
  for (const auto& a : raw_answers) {
    if (vocab.index_.emplace(a, vocab.answers_.size()).second) vocab.answers_.push_back(a);
  }
  if (vocab.size() < 2) throw InputError("vocabulary needs at least two distinct answers");
  return vocab;
}

int SoftLabel::total_votes() const { return std::accumulate(counts.begin(), counts.end(), 0); }

std::size_t SoftLabel::majority() const {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

SoftLabel soft_label_from_counts(std::span<const int> annotator_counts) {
  SoftLabel label;
  label.counts.assign(annotator_counts.begin(), annotator_counts.end());
  label.scores.reserve(label.counts.size());
  int total = 0;
  for (int c : label.counts) {
    if (c < 0 || c > kAnnotators) {
      throw InputError("annotator count " + std::to_string(c) + " outside [0, 10]");
    }
    total += c;
    label.scores.push_back(static_cast<double>(c) / kAnnotators);
  }
  if (total > kAnnotators) {
    throw InputError("annotator counts sum to " + std::to_string(total) + " > 10");
  }
  return label;
}

TypeCountTable::TypeCountTable(std::vector<std::string> types, std::size_t num_answers,
                               std::vector<std::int64_t> counts)
    : types_(std::move(types)), num_answers_(num_answers), counts_(std::move(counts)) {
  if (types_.empty()) throw InputError("count table has no question types");
  if (num_answers_ == 0) throw InputError("count table has no answers");
  if (counts_.size() != types_.size() * num_answers_) {
    throw InputError("count table shape mismatch");
  }
  for (std::size_t j = 0; j < types_.size(); ++j) {
    auto r = row(j);
    if (std::any_of(r.begin(), r.end(), [](std::int64_t c) { return c < 0; })) {
      throw InputError("negative count for type '" + types_[j] + "'");
    }
    if (std::none_of(r.begin(), r.end(), [](std::int64_t c) { return c > 0; })) {
      throw InputError("type '" + types_[j] + "' has no observed answers");
    }
  }
}

void TypeCountTable::check_type(std::size_t type) const {
  if (type >= types_.size()) throw InputError("unknown question type id " + std::to_string(type));
}

std::int64_t TypeCountTable::count(std::size_t type, std::size_t answer) const {
  check_type(type);
  if (answer >= num_answers_) throw InputError("answer index out of range");
  return counts_[type * num_answers_ + answer];
}

std::span<const std::int64_t> TypeCountTable::row(std::size_t type) const {
  check_type(type);
  return {counts_.data() + type * num_answers_, num_answers_};
}

std::int64_t TypeCountTable::total(std::size_t type) const {
  auto r = row(type);
  return std::accumulate(r.begin(), r.end(), std::int64_t{0});
}

std::vector<std::size_t> TypeCountTable::answer_set(std::size_t type) const {
  std::vector<std::size_t> out;
  auto r = row(type);
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] > 0) out.push_back(i);
  }
  return out;
}

TypeCountTable count_answers(std::span<const TypedLabel> dataset,
                             const std::vector<std::string>& types, std::size_t num_answers) {
  if (dataset.empty()) throw InputError("no instances");
  std::vector<std::int64_t> counts(types.size() * num_answers, 0);
  for (const auto& inst : dataset) {
    if (inst.type_id >= types.size()) {
      throw InputError("unknown question type id " + std::to_string(inst.type_id));
    }
    if (inst.label.size() != num_answers) throw InputError("label length does not match vocabulary");
    for (std::size_t i = 0; i < num_answers; ++i) {
      counts[inst.type_id * num_answers + i] += inst.label.counts[i];
    }
  }
  return TypeCountTable(types, num_answers, std::move(counts));
}

nlohmann::json to_json(const AnswerVocabulary& vocab) {
  return nlohmann::json{{"answers", vocab.answers()}};
}

nlohmann::json to_json(const AnswerVocabulary& vocab, const TypeCountTable& table) {
  if (vocab.size() != table.num_answers()) throw InputError("vocabulary/count table size mismatch");
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t j = 0; j < table.num_types(); ++j) {
    auto r = table.row(j);
    rows.push_back(std::vector<std::int64_t>(r.begin(), r.end()));
  }
  return nlohmann::json{{"answers", vocab.answers()}, {"types", table.types()}, {"counts", rows}};
}

AnswerVocabulary vocab_from_json(const nlohmann::json& j) {
  try {
    auto answers = j.at("answers").get<std::vector<std::string>>();
    auto vocab = build_vocab(answers);
    if (vocab.size() != answers.size()) throw InputError("duplicate answers in vocabulary file");
    return vocab;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed vocabulary json: ") + e.what());
  }
}

TypeCountTable counts_from_json(const nlohmann::json& j) {
  try {
    auto answers = j.at("answers").get<std::vector<std::string>>();
    auto types = j.at("types").get<std::vector<std::string>>();
    auto rows = j.at("counts").get<std::vector<std::vector<std::int64_t>>>();
    if (rows.size() != types.size()) throw InputError("counts rows do not match types");
    std::vector<std::int64_t> flat;
    flat.reserve(types.size() * answers.size());
    for (const auto& r : rows) {
      if (r.size() != answers.size()) throw InputError("counts row length does not match answers");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    return TypeCountTable(std::move(types), answers.size(), std::move(flat));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed counts json: ") + e.what());
  }
}

}  // namespace lpr
