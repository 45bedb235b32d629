#include "lpr/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lpr/errors.hpp"

namespace lpr {
namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& x) { return x.cwiseMax(0.0); }

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  return (layer.W * x).colwise() + layer.b;
}

void init_layer(DenseLayer& layer, Eigen::Index out, Eigen::Index in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  layer.W.resize(out, in);
  layer.b.resize(out);
  // Column-major fill order is part of the deterministic layout.
  for (Eigen::Index k = 0; k < layer.W.size(); ++k) layer.W.data()[k] = u(rng);
  for (Eigen::Index k = 0; k < layer.b.size(); ++k) layer.b[k] = u(rng);
}

void check_layer(const DenseLayer& layer, Eigen::Index in, const char* name) {
  if (layer.W.cols() != in || layer.b.size() != layer.W.rows() || layer.W.rows() == 0) {
    throw InputError(std::string("inconsistent shape in group ") + name);
  }
  if (!layer.W.allFinite() || !layer.b.allFinite()) {
    throw InputError(std::string("non-finite parameters in group ") + name);
  }
}

void sgd_step(DenseLayer& layer, const DenseLayer& grad, double lr) {
  layer.W -= lr * grad.W;
  layer.b -= lr * grad.b;
}

double layer_norm_sq(const DenseLayer& g) { return g.W.squaredNorm() + g.b.squaredNorm(); }

std::vector<std::vector<double>> all_mask_labels(const TypeCountTable& counts) {
  std::vector<std::vector<double>> labels;
  for (std::size_t j = 0; j < counts.num_types(); ++j) labels.push_back(mask_labels(j, counts));
  return labels;
}

std::span<const double> col_span(const Eigen::MatrixXd& m, Eigen::Index c) {
  return {m.data() + c * m.rows(), static_cast<std::size_t>(m.rows())};
}

void check_dataset(const Dataset& ds, const ModelParams& params) {
  if (ds.q_dim != params.q_dim() || ds.v_dim != params.v_dim() ||
      ds.num_answers != params.num_answers()) {
    throw InputError("dataset shape does not match model parameters");
  }
}

}  // namespace

OutputActivation activation_for(LossKind kind) {
  return kind == LossKind::soft_ce ? OutputActivation::softmax : OutputActivation::sigmoid;
}

std::string to_string(OutputActivation a) {
  return a == OutputActivation::softmax ? "softmax" : "sigmoid";
}

OutputActivation activation_from_string(const std::string& s) {
  if (s == "softmax") return OutputActivation::softmax;
  if (s == "sigmoid") return OutputActivation::sigmoid;
  throw InputError("unknown activation '" + s + "'");
}

void ModelParams::validate() const {
  check_layer(q_encoder, q_encoder.W.cols(), "q_encoder");
  check_layer(v_encoder, v_encoder.W.cols(), "v_encoder");
  check_layer(fusion, q_encoder.W.rows() + v_encoder.W.rows(), "fusion");
  check_layer(classifier, fusion.W.rows(), "classifier");
  if (use_mask) {
    mask.validate();
    if (mask.W_q.rows() != classifier.W.rows() || mask.W_q.cols() != q_encoder.W.cols()) {
      throw InputError("inconsistent shape in group mask");
    }
  }
}

bool ModelParams::operator==(const ModelParams& o) const {
  auto same = [](const DenseLayer& a, const DenseLayer& b) {
    return a.W.rows() == b.W.rows() && a.W.cols() == b.W.cols() && a.b.size() == b.b.size() &&
           a.W == b.W && a.b == b.b;
  };
  return same(q_encoder, o.q_encoder) && same(v_encoder, o.v_encoder) && same(fusion, o.fusion) &&
         same(classifier, o.classifier) && mask.W_q.rows() == o.mask.W_q.rows() &&
         mask.W_q.cols() == o.mask.W_q.cols() && mask.W_q == o.mask.W_q &&
         mask.dropout_rate == o.mask.dropout_rate && mask.alpha == o.mask.alpha &&
         use_mask == o.use_mask && activation == o.activation;
}

Gradients Gradients::zeros_like(const ModelParams& p) {
  auto zero = [](const DenseLayer& l) {
    return DenseLayer{Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()),
                      Eigen::VectorXd::Zero(l.b.size())};
  };
  return {zero(p.q_encoder), zero(p.v_encoder), zero(p.fusion), zero(p.classifier),
          Eigen::MatrixXd::Zero(p.mask.W_q.rows(), p.mask.W_q.cols())};
}

double Gradients::norm(Group g) const {
  switch (g) {
    case Group::q_encoder: return std::sqrt(layer_norm_sq(q_encoder));
    case Group::v_encoder: return std::sqrt(layer_norm_sq(v_encoder));
    case Group::fusion: return std::sqrt(layer_norm_sq(fusion));
    case Group::classifier: return std::sqrt(layer_norm_sq(classifier));
    case Group::mask: return mask.norm();
  }
  return 0.0;
}

std::array<double, kNumGroups> Gradients::norms() const {
  std::array<double, kNumGroups> out{};
  for (std::size_t g = 0; g < kNumGroups; ++g) out[g] = norm(static_cast<Group>(g));
  return out;
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InputError("lr must be >= 0");
  if (epochs_finetune < 0 || mask_max_epochs < 0) throw InputError("epochs must be >= 0");
  if (batch_size <= 0) throw InputError("batch_size must be positive");
  if (h_q <= 0 || h_v <= 0 || h_f <= 0) throw InputError("hidden sizes must be positive");
  if (mask_patience <= 0) throw InputError("mask_patience must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InputError("dropout_rate outside [0, 1)");
  if (!(mask_alpha > 0.0)) throw InputError("mask_alpha must be positive");
  if (!(focal.alpha > 0.0) || !(focal.gamma >= 0.0)) throw InputError("invalid focal parameters");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"loss_kind", to_string(c.loss_kind)},
      {"use_rescale", c.use_rescale},
      {"use_mask", c.use_mask},
      {"lr", c.lr},
      {"epochs_mask_pretrain",
       c.epochs_mask_pretrain < 0 ? nlohmann::json("until-converged")
                                  : nlohmann::json(c.epochs_mask_pretrain)},
      {"mask_patience", c.mask_patience},
      {"mask_min_rel_improvement", c.mask_min_rel_improvement},
      {"mask_max_epochs", c.mask_max_epochs},
      {"epochs_finetune", c.epochs_finetune},
      {"batch_size", c.batch_size},
      {"reduction", to_string(c.reduction)},
      {"seed", c.seed},
      {"h_q", c.h_q},
      {"h_v", c.h_v},
      {"h_f", c.h_f},
      {"dropout_rate", c.dropout_rate},
      {"mask_alpha", c.mask_alpha},
      {"focal_alpha", c.focal.alpha},
      {"focal_gamma", c.focal.gamma}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (j.contains("loss_kind")) c.loss_kind = loss_kind_from_string(j.at("loss_kind"));
  c.use_rescale = j.value("use_rescale", c.use_rescale);
  c.use_mask = j.value("use_mask", c.use_mask);
  c.lr = j.value("lr", c.lr);
  if (j.contains("epochs_mask_pretrain")) {
    const auto& e = j.at("epochs_mask_pretrain");
    if (e.is_string()) {
      if (e.get<std::string>() != "until-converged") {
        throw InputError("epochs_mask_pretrain must be an integer or \"until-converged\"");
      }
      c.epochs_mask_pretrain = -1;
    } else {
      c.epochs_mask_pretrain = e.get<int>();
    }
  }
  c.mask_patience = j.value("mask_patience", c.mask_patience);
  c.mask_min_rel_improvement = j.value("mask_min_rel_improvement", c.mask_min_rel_improvement);
  c.mask_max_epochs = j.value("mask_max_epochs", c.mask_max_epochs);
  c.epochs_finetune = j.value("epochs_finetune", c.epochs_finetune);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("reduction")) c.reduction = reduction_from_string(j.at("reduction"));
  c.seed = j.value("seed", c.seed);
  c.h_q = j.value("h_q", c.h_q);
  c.h_v = j.value("h_v", c.h_v);
  c.h_f = j.value("h_f", c.h_f);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.mask_alpha = j.value("mask_alpha", c.mask_alpha);
  c.focal.alpha = j.value("focal_alpha", c.focal.alpha);
  c.focal.gamma = j.value("focal_gamma", c.focal.gamma);
}

ModelParams init_params(std::size_t q_dim, std::size_t v_dim, std::size_t num_answers,
                        const TrainConfig& config, std::mt19937_64& rng) {
  config.validate();
  const auto q = static_cast<Eigen::Index>(q_dim), v = static_cast<Eigen::Index>(v_dim),
             a = static_cast<Eigen::Index>(num_answers);
  ModelParams p;
  init_layer(p.q_encoder, config.h_q, q, rng);
  init_layer(p.v_encoder, config.h_v, v, rng);
  init_layer(p.fusion, config.h_f, config.h_q + config.h_v, rng);
  init_layer(p.classifier, a, config.h_f, rng);
  DenseLayer mask_layer;
  init_layer(mask_layer, a, q, rng);
  p.mask.W_q = std::move(mask_layer.W);
  p.mask.dropout_rate = config.dropout_rate;
  p.mask.alpha = config.mask_alpha;
  p.use_mask = config.use_mask;
  p.activation = activation_for(config.loss_kind);
  return p;
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  b.q.resize(static_cast<Eigen::Index>(dataset.q_dim), n);
  b.v.resize(static_cast<Eigen::Index>(dataset.v_dim), n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& inst = dataset.instances.at(indices[static_cast<std::size_t>(c)]);
    if (inst.q_feat.size() != dataset.q_dim || inst.v_feat.size() != dataset.v_dim) {
      throw InputError("instance feature length does not match dataset");
    }
    std::copy(inst.q_feat.begin(), inst.q_feat.end(), b.q.col(c).data());
    std::copy(inst.v_feat.begin(), inst.v_feat.end(), b.v.col(c).data());
  }
  return b;
}

Batch make_batch(const Dataset& dataset, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return make_batch(dataset, idx);
}

ForwardCache forward(const Batch& batch, const ModelParams& params, bool training,
                     std::mt19937_64* rng) {
  if (static_cast<std::size_t>(batch.q.rows()) != params.q_dim() ||
      static_cast<std::size_t>(batch.v.rows()) != params.v_dim() ||
      batch.q.cols() != batch.v.cols()) {
    throw InputError("batch shape does not match model parameters");
  }
  ForwardCache c;
  c.q = batch.q;
  c.v = batch.v;
  c.h_q = relu(affine(params.q_encoder, batch.q));
  c.h_v = relu(affine(params.v_encoder, batch.v));
  Eigen::MatrixXd joint(c.h_q.rows() + c.h_v.rows(), batch.q.cols());
  joint << c.h_q, c.h_v;
  c.h_f = relu(affine(params.fusion, joint));
  c.logits = affine(params.classifier, c.h_f);

  if (params.use_mask) {
    c.mask_input = batch.q;
    const double rate = params.mask.dropout_rate;
    if (training && rate > 0.0) {
      if (rng == nullptr) throw InputError("mask dropout needs a random generator");
      std::bernoulli_distribution keep(1.0 - rate);
      const double scale = 1.0 / (1.0 - rate);
      for (Eigen::Index k = 0; k < c.mask_input.size(); ++k) {
        c.mask_input.data()[k] = keep(*rng) ? c.mask_input.data()[k] * scale : 0.0;
      }
    }
    c.mask_pre = params.mask.W_q * c.mask_input;
    const double alpha = params.mask.alpha;
    c.mask = c.mask_pre.unaryExpr([alpha](double z) { return softplus_g(z, alpha); });
  }
  return c;
}

Gradients backward(const ForwardCache& cache, const ModelParams& params, const OutputGrads& grads) {
  Gradients g;
  const Eigen::MatrixXd& d_logits = grads.logits;
  g.classifier.W = d_logits * cache.h_f.transpose();
  g.classifier.b = d_logits.rowwise().sum();

  Eigen::MatrixXd d_hf = (params.classifier.W.transpose() * d_logits).cwiseProduct(
      (cache.h_f.array() > 0.0).cast<double>().matrix());
  Eigen::MatrixXd joint(cache.h_q.rows() + cache.h_v.rows(), cache.h_q.cols());
  joint << cache.h_q, cache.h_v;
  g.fusion.W = d_hf * joint.transpose();
  g.fusion.b = d_hf.rowwise().sum();

  Eigen::MatrixXd d_joint = params.fusion.W.transpose() * d_hf;
  const Eigen::Index hq = cache.h_q.rows();
  Eigen::MatrixXd d_hq = d_joint.topRows(hq).cwiseProduct(
      (cache.h_q.array() > 0.0).cast<double>().matrix());
  Eigen::MatrixXd d_hv = d_joint.bottomRows(cache.h_v.rows())
                             .cwiseProduct((cache.h_v.array() > 0.0).cast<double>().matrix());
  g.q_encoder.W = d_hq * cache.q.transpose();
  g.q_encoder.b = d_hq.rowwise().sum();
  g.v_encoder.W = d_hv * cache.v.transpose();
  g.v_encoder.b = d_hv.rowwise().sum();

  if (params.use_mask && grads.mask_pre.size() > 0) {
    g.mask = grads.mask_pre * cache.mask_input.transpose();
  } else {
    g.mask = Eigen::MatrixXd::Zero(params.mask.W_q.rows(), params.mask.W_q.cols());
  }
  return g;
}

BatchLoss batch_loss(const ForwardCache& cache, const ModelParams& params, const Dataset& dataset,
                     std::span<const std::size_t> indices, const TrainConfig& config,
                     const WeightTable* weights, const TypeCountTable& counts) {
  if (config.use_rescale != (weights != nullptr)) {
    throw InputError("a weight table is required exactly when re-scaling is enabled");
  }
  const auto n = static_cast<Eigen::Index>(indices.size());
  const auto a = cache.logits.rows();
  const double scale = config.reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  const std::vector<double> ones(static_cast<std::size_t>(a), 1.0);
  const auto labels = params.use_mask ? all_mask_labels(counts) : std::vector<std::vector<double>>{};

  BatchLoss out;
  out.grads.logits.resize(a, n);
  if (params.use_mask) out.grads.mask_pre.resize(a, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& inst = dataset.instances.at(indices[static_cast<std::size_t>(c)]);
    const auto& targets = inst.label.scores;
    std::span<const double> mu = weights ? weights->row(inst.type_id) : std::span<const double>(ones);
    auto logits = col_span(cache.logits, c);
    if (params.use_mask) {
      auto m = col_span(cache.mask, c);
      auto cls = classification_loss_masked(config.loss_kind, logits, targets, mu, m, config.focal);
      auto ml = mask_loss(m, labels.at(inst.type_id), params.mask.alpha);
      out.cls += cls.loss;
      out.mask += ml.loss;
      for (Eigen::Index i = 0; i < a; ++i) {
        const auto k = static_cast<std::size_t>(i);
        out.grads.logits(i, c) = scale * cls.grad_logits[k];
        const double dm_dz = softplus_g_derivative(cache.mask_pre(i, c), params.mask.alpha);
        const double from_cls = dm_dz == 0.0 ? 0.0 : cls.grad_mask[k] * dm_dz;
        out.grads.mask_pre(i, c) = scale * (from_cls + ml.grad[k]);
      }
    } else {
      auto cls = classification_loss(config.loss_kind, logits, targets, mu, config.focal);
      out.cls += cls.loss;
      for (Eigen::Index i = 0; i < a; ++i) {
        out.grads.logits(i, c) = scale * cls.grad[static_cast<std::size_t>(i)];
      }
    }
  }
  out.cls *= scale;
  out.mask *= scale;
  out.total = combine_total(out.cls, params.use_mask ? std::optional<double>(out.mask) : std::nullopt);
  return out;
}

TrainResult train(const Dataset& train_set, const TrainConfig& config, const WeightTable* weights,
                  const TypeCountTable& counts) {
  config.validate();
  if (config.use_rescale != (weights != nullptr)) {
    throw InputError("a weight table is required exactly when re-scaling is enabled");
  }
  if (train_set.size() == 0) throw InputError("empty training set");
  if (counts.num_answers() != train_set.num_answers || counts.num_types() != train_set.num_types) {
    throw InputError("count table does not match the training set");
  }
  if (weights && (weights->num_answers() != train_set.num_answers ||
                  weights->num_types() != train_set.num_types)) {
    throw InputError("weight table does not match the training set");
  }

  std::mt19937_64 init_rng(config.seed);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);

  TrainResult result;
  ModelParams& params = result.params;
  params = init_params(train_set.q_dim, train_set.v_dim, train_set.num_answers, config, init_rng);
  auto& trace = result.trace;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  long iteration = 0;

  auto check_finite = [&](double loss) {
    if (!std::isfinite(loss)) {
      throw DivergenceError(iteration, "training diverged (non-finite loss) at iteration " +
                                           std::to_string(iteration));
    }
  };

  if (config.use_mask) {
    const auto labels = all_mask_labels(counts);
    const int max_epochs =
        config.epochs_mask_pretrain >= 0 ? config.epochs_mask_pretrain : config.mask_max_epochs;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double epoch_loss = 0.0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t end = std::min(order.size(), start + batch);
        std::span<const std::size_t> idx(order.data() + start, end - start);
        const auto n = static_cast<Eigen::Index>(idx.size());
        const double scale = config.reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
        Batch b = make_batch(train_set, idx);
        ForwardCache cache = forward(b, params, true, &dropout_rng);
        Eigen::MatrixXd d_pre(cache.mask.rows(), n);
        double loss = 0.0;
        for (Eigen::Index c = 0; c < n; ++c) {
          const auto& inst = train_set.instances[idx[static_cast<std::size_t>(c)]];
          auto ml = mask_loss(col_span(cache.mask, c), labels.at(inst.type_id), params.mask.alpha);
          loss += ml.loss;
          for (Eigen::Index i = 0; i < d_pre.rows(); ++i) {
            d_pre(i, c) = scale * ml.grad[static_cast<std::size_t>(i)];
          }
        }
        loss *= scale;
        check_finite(loss);
        Eigen::MatrixXd g = d_pre * cache.mask_input.transpose();
        params.mask.W_q -= config.lr * g;

        TraceRow row;
        row.iteration = iteration++;
        row.phase = 1;
        row.epoch = epoch;
        row.loss_total = loss;
        row.loss_mask = loss;
        row.grad_norms[static_cast<std::size_t>(Group::mask)] = g.norm();
        trace.rows.push_back(row);
        epoch_loss += loss * static_cast<double>(n);
      }
      ++trace.mask_epochs;
      epoch_loss /= static_cast<double>(order.size());
      if (config.epochs_mask_pretrain >= 0) continue;
      if (epoch_loss < best * (1.0 - config.mask_min_rel_improvement)) {
        best = epoch_loss;
        stale = 0;
      } else if (++stale >= config.mask_patience) {
        break;
      }
    }
  }

  for (int epoch = 0; epoch < config.epochs_finetune; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Batch b = make_batch(train_set, idx);
      ForwardCache cache = forward(b, params, true, &dropout_rng);
      BatchLoss loss = batch_loss(cache, params, train_set, idx, config, weights, counts);
      check_finite(loss.total);
      Gradients g = backward(cache, params, loss.grads);

      TraceRow row;
      row.iteration = iteration++;
      row.phase = 2;
      row.epoch = epoch;
      row.loss_total = loss.total;
      row.loss_cls = loss.cls;
      row.loss_mask = loss.mask;
      row.grad_norms = g.norms();
      trace.rows.push_back(row);

      sgd_step(params.q_encoder, g.q_encoder, config.lr);
      sgd_step(params.v_encoder, g.v_encoder, config.lr);
      sgd_step(params.fusion, g.fusion, config.lr);
      sgd_step(params.classifier, g.classifier, config.lr);
      if (params.use_mask) params.mask.W_q -= config.lr * g.mask;
    }
  }
  return result;
}

std::size_t predict_from_logits(std::span<const double> logits, OutputActivation activation,
                                std::optional<std::span<const double>> mask) {
  if (logits.empty()) throw InputError("empty logits");
  if (mask && mask->size() != logits.size()) throw InputError("logit/mask length mismatch");
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // softmax normaliser is common to every entry, so exp(p - max) ranks the same
    double score = activation == OutputActivation::softmax ? std::exp(logits[i] - max_logit)
                                                           : sigmoid(logits[i]);
    if (mask) score *= (*mask)[i];
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

std::size_t predict(const Instance& instance, const ModelParams& params) {
  Dataset one;
  one.q_dim = params.q_dim();
  one.v_dim = params.v_dim();
  one.num_answers = params.num_answers();
  one.instances.push_back(instance);
  return evaluate(one, params).predictions.front();
}

Evaluation evaluate(const Dataset& dataset, const ModelParams& params) {
  check_dataset(dataset, params);
  Evaluation ev;
  ev.logits.resize(static_cast<Eigen::Index>(params.num_answers()),
                   static_cast<Eigen::Index>(dataset.size()));
  ev.predictions.reserve(dataset.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < dataset.size(); start += kChunk) {
    const std::size_t end = std::min(dataset.size(), start + kChunk);
    ForwardCache cache = forward(make_batch(dataset, start, end), params, false);
    ev.logits.middleCols(static_cast<Eigen::Index>(start), cache.logits.cols()) = cache.logits;
    for (Eigen::Index c = 0; c < cache.logits.cols(); ++c) {
      std::optional<std::span<const double>> m;
      if (params.use_mask) m = col_span(cache.mask, c);
      ev.predictions.push_back(predict_from_logits(col_span(cache.logits, c), params.activation, m));
    }
  }
  return ev;
}

}  // namespace lpr
