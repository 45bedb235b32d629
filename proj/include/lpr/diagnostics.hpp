#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "lpr/datagen.hpp"
#include "lpr/losses.hpp"
#include "lpr/net.hpp"

namespace lpr {

// Mean over instances of min(1, votes[pred] / 3).
double vqa_accuracy(std::span<const std::size_t> predictions,
                    std::span<const std::vector<int>> annotator_counts);
double vqa_accuracy(std::span<const std::size_t> predictions, const Dataset& dataset);

// Majority answer per instance, lowest index on ties.
std::vector<std::size_t> hard_labels(const Dataset& dataset);

// (p_o - p_e) / (1 - p_e) with p_e from the product of marginals. When
// p_e == 1 the result is 1 if p_o == 1 and 0 otherwise.
double cohens_kappa(std::span<const std::size_t> predictions, std::span<const std::size_t> labels);

// Mean per-instance loss of mis-predicted instances, by (true, predicted)
// answer. Rows and columns follow `order`: the type's in-type answers from
// frequent to sparse.
struct LossConfusion {
  std::size_t type_id = 0;
  std::vector<std::size_t> order;
  std::vector<double> loss_sum;     // row-major [true position][predicted position]
  std::vector<std::size_t> counts;  // same layout

  std::size_t dim() const { return order.size(); }
  std::size_t count(std::size_t g, std::size_t p) const { return counts[g * dim() + p]; }
  std::optional<double> mean(std::size_t g, std::size_t p) const;
  std::size_t total() const;
};

struct MispredictionRecord {
  std::size_t truth = 0;
  std::size_t predicted = 0;
  double loss = 0.0;
};

// Generic builder over (truth, prediction, loss) records; records with either
// answer outside `order` or with truth == predicted are ignored.
LossConfusion loss_confusion_from_records(std::size_t type_id, std::vector<std::size_t> order,
                                          std::span<const MispredictionRecord> records);

// In-type answers of `type` sorted by training count, descending (ties by index).
std::vector<std::size_t> frequency_order(const TypeCountTable& train_counts, std::size_t type);

// Re-predicts `dataset` with the model and records the unweighted, unmasked
// loss of each mis-predicted in-type instance of `type`. Throws InputError if
// the type has fewer than two in-type answers.
LossConfusion loss_confusion(const ModelParams& params, const Dataset& dataset, std::size_t type,
                             LossKind loss_kind, const TypeCountTable& train_counts,
                             FocalParams focal_params = {});

struct TriangleAsymmetry {
  double upper_mean = 0.0;  // truth more frequent than prediction (hard mistakes)
  double lower_mean = 0.0;  // truth sparser than prediction (easy mistakes)
  double ratio = 0.0;       // upper_mean / lower_mean
  std::size_t upper_count = 0;
  std::size_t lower_count = 0;
};

// Count-weighted triangle means. Throws InputError("insufficient mispredictions")
// when either triangle is empty.
TriangleAsymmetry triangle_asymmetry(const LossConfusion& conf);

struct GradientNormSeries {
  std::vector<long> iterations;
  std::vector<int> phases;
  std::array<std::vector<double>, kNumGroups> norms;
};

GradientNormSeries gradient_norm_trace(const TrainingTrace& trace);

// CSV columns: iter,group,norm
void write_gradient_norm_csv(std::ostream& out, const GradientNormSeries& series);
// CSV columns: truth,predicted,count,mean_loss (populated cells only)
void write_confusion_csv(std::ostream& out, const LossConfusion& conf,
                         const AnswerVocabulary& vocab);
// CSV columns: iter,phase,epoch,loss_total,loss_cls,loss_mask,<group norms>
void write_trace_csv(std::ostream& out, const TrainingTrace& trace);
TrainingTrace read_trace_csv(std::istream& in);

}  // namespace lpr
