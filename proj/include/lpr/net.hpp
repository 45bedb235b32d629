#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "lpr/datagen.hpp"
#include "lpr/losses.hpp"
#include "lpr/mask.hpp"
#include "lpr/rescale.hpp"

namespace lpr {

struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

enum class OutputActivation { sigmoid, softmax };

OutputActivation activation_for(LossKind kind);
std::string to_string(OutputActivation a);
OutputActivation activation_from_string(const std::string& s);

// Parameter groups, in the order used by traces and reports.
enum class Group { q_encoder, v_encoder, fusion, classifier, mask };
inline constexpr std::size_t kNumGroups = 5;
inline constexpr std::array<std::string_view, kNumGroups> kGroupNames = {
    "q_encoder", "v_encoder", "fusion", "classifier", "mask"};

// logits = classifier(ReLU(fusion([ReLU(q_encoder(q)); ReLU(v_encoder(v))])))
// m_p    = softplus_g(W_q q), used when use_mask is set.
struct ModelParams {
  DenseLayer q_encoder;
  DenseLayer v_encoder;
  DenseLayer fusion;
  DenseLayer classifier;
  MaskParams mask;
  bool use_mask = false;
  OutputActivation activation = OutputActivation::softmax;

  std::size_t q_dim() const { return static_cast<std::size_t>(q_encoder.W.cols()); }
  std::size_t v_dim() const { return static_cast<std::size_t>(v_encoder.W.cols()); }
  std::size_t num_answers() const { return static_cast<std::size_t>(classifier.W.rows()); }
  // Throws InputError on inconsistent shapes or non-finite values.
  void validate() const;
  bool operator==(const ModelParams& other) const;
};

struct Gradients {
  DenseLayer q_encoder;
  DenseLayer v_encoder;
  DenseLayer fusion;
  DenseLayer classifier;
  Eigen::MatrixXd mask;

  static Gradients zeros_like(const ModelParams& params);
  double norm(Group g) const;
  std::array<double, kNumGroups> norms() const;
};

struct TrainConfig {
  LossKind loss_kind = LossKind::soft_ce;
  bool use_rescale = false;
  bool use_mask = false;
  double lr = 0.05;
  // Negative: train the mask until the epoch-mean mask loss stops improving.
  int epochs_mask_pretrain = -1;
  int mask_patience = 3;
  double mask_min_rel_improvement = 1e-3;
  int mask_max_epochs = 50;
  int epochs_finetune = 10;
  int batch_size = 32;
  Reduction reduction = Reduction::mean;
  std::uint64_t seed = 0;
  int h_q = 16;
  int h_v = 32;
  int h_f = 32;
  double dropout_rate = 0.0;
  double mask_alpha = 1.0;
  FocalParams focal{};

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
ModelParams init_params(std::size_t q_dim, std::size_t v_dim, std::size_t num_answers,
                        const TrainConfig& config, std::mt19937_64& rng);

// Column-per-instance feature matrices.
struct Batch {
  Eigen::MatrixXd q;
  Eigen::MatrixXd v;
  std::size_t size() const { return static_cast<std::size_t>(q.cols()); }
};

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);
Batch make_batch(const Dataset& dataset, std::size_t begin, std::size_t end);

struct ForwardCache {
  Eigen::MatrixXd q, v;
  Eigen::MatrixXd h_q, h_v, h_f;  // post-ReLU
  Eigen::MatrixXd logits;         // [num_answers x batch]
  Eigen::MatrixXd mask_input;     // q after dropout
  Eigen::MatrixXd mask_pre;       // W_q * mask_input
  Eigen::MatrixXd mask;           // softplus_g(mask_pre); empty when the mask is off
};

// rng is needed only for mask dropout in training mode.
ForwardCache forward(const Batch& batch, const ModelParams& params, bool training,
                     std::mt19937_64* rng = nullptr);

// Upstream gradients: dL/dlogits and dL/d(mask pre-activation), one column
// per instance, already scaled by the batch reduction.
struct OutputGrads {
  Eigen::MatrixXd logits;
  Eigen::MatrixXd mask_pre;
};

Gradients backward(const ForwardCache& cache, const ModelParams& params, const OutputGrads& grads);

struct BatchLoss {
  double total = 0.0;
  double cls = 0.0;
  double mask = 0.0;  // 0 when the mask is off
  OutputGrads grads;
};

// Classification (+ mask) loss over a forward pass, reduced per config.
// weights must be non-null iff config.use_rescale; counts supplies mask labels.
BatchLoss batch_loss(const ForwardCache& cache, const ModelParams& params, const Dataset& dataset,
                     std::span<const std::size_t> indices, const TrainConfig& config,
                     const WeightTable* weights, const TypeCountTable& counts);

struct TraceRow {
  long iteration = 0;
  int phase = 2;  // 1: mask pre-training, 2: joint training
  int epoch = 0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_mask = 0.0;
  std::array<double, kNumGroups> grad_norms{};
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  int mask_epochs = 0;
};

struct TrainResult {
  ModelParams params;
  TrainingTrace trace;
};

// Phase 1 (use_mask): SGD on the mask loss alone until converged.
// Phase 2: SGD on L_cls (+ re-scaling) + L_mask for epochs_finetune epochs.
// Throws DivergenceError on a non-finite loss.
TrainResult train(const Dataset& train_set, const TrainConfig& config, const WeightTable* weights,
                  const TypeCountTable& counts);

// argmax over activation(logits), gated by the mask when given; ties go to
// the lowest index.
std::size_t predict_from_logits(std::span<const double> logits, OutputActivation activation,
                                std::optional<std::span<const double>> mask = std::nullopt);

// Inference reads only the model parameters.
std::size_t predict(const Instance& instance, const ModelParams& params);

struct Evaluation {
  Eigen::MatrixXd logits;  // [num_answers x n]
  std::vector<std::size_t> predictions;
};

Evaluation evaluate(const Dataset& dataset, const ModelParams& params);

}  // namespace lpr
