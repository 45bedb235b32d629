#include "lpr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lpr/errors.hpp"

namespace lpr {
namespace {

void check_lengths(std::size_t n, std::size_t targets, std::size_t other, const char* what) {
  if (n == 0) throw InputError("empty logits");
  if (targets != n || other != n) {
    throw InputError(std::string("length mismatch between logits, targets and ") + what);
  }
}

struct ClampedMask {
  double value;
  bool clamped;
};

ClampedMask clamp_mask(double m) {
  if (m < kMaskEpsilon) return {kMaskEpsilon, true};
  if (m > 1.0) return {1.0, true};
  return {m, false};
}

// Shared terms of the sigmoid family under a mask value m in [eps, 1].
struct GatedSigmoid {
  double s;             // s(p)
  double one_minus_s;   // s(-p)
  double q;             // s(p) m
  double one_minus_q;   // 1 - q
  double log_q;
  double log_one_minus_q;
  double ratio;         // (1 - s) / (1 - q)
};

GatedSigmoid gated_sigmoid(double p, double m) {
  GatedSigmoid g;
  g.s = sigmoid(p);
  g.one_minus_s = sigmoid(-p);
  g.q = g.s * m;
  g.log_q = log_sigmoid(p) + std::log(m);
  if (m == 1.0) {
    g.one_minus_q = g.one_minus_s;
    g.log_one_minus_q = log_sigmoid(-p);
    g.ratio = 1.0;
  } else {
    g.one_minus_q = (1.0 - m) + m * g.one_minus_s;
    g.log_one_minus_q = std::log(g.one_minus_q);
    g.ratio = g.one_minus_s / g.one_minus_q;
  }
  return g;
}

}  // namespace

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "sigm_bce") return LossKind::sigm_bce;
  if (s == "soft_ce") return LossKind::soft_ce;
  if (s == "focal") return LossKind::focal;
  throw InputError("unknown loss kind '" + s + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::sigm_bce: return "sigm_bce";
    case LossKind::soft_ce: return "soft_ce";
    case LossKind::focal: return "focal";
  }
  return "soft_ce";
}

Reduction reduction_from_string(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw InputError("unknown reduction '" + s + "'");
}

std::string to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

LossGrad sigm_bce(std::span<const double> logits, std::span<const double> targets,
                  std::span<const double> mu) {
  check_lengths(logits.size(), targets.size(), mu.size(), "weights");
  LossGrad out;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = logits[i], a = targets[i];
    out.loss -= mu[i] * (a * log_sigmoid(p) + (1.0 - a) * log_sigmoid(-p));
    out.grad[i] = mu[i] * ((1.0 - a) * sigmoid(p) - a * sigmoid(-p));
  }
  return out;
}

LossGrad sigm_bce(std::span<const double> logits, const SoftLabel& label,
                  std::span<const double> mu) {
  return sigm_bce(logits, label.scores, mu);
}

LossGrad soft_ce(std::span<const double> logits, std::span<const double> targets,
                 std::span<const double> mu) {
  check_lengths(logits.size(), targets.size(), mu.size(), "weights");
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum_exp = 0.0;
  for (double p : logits) sum_exp += std::exp(p - max_logit);
  const double log_z = max_logit + std::log(sum_exp);

  double weighted_mass = 0.0;
  LossGrad out;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double wa = mu[i] * targets[i];
    weighted_mass += wa;
    if (wa != 0.0) out.loss -= wa * (logits[i] - log_z);
  }
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.grad[i] = weighted_mass * std::exp(logits[i] - log_z) - mu[i] * targets[i];
  }
  return out;
}

LossGrad soft_ce(std::span<const double> logits, const SoftLabel& label,
                 std::span<const double> mu) {
  return soft_ce(logits, label.scores, mu);
}

LossGrad focal(std::span<const double> logits, std::span<const double> targets,
               FocalParams params) {
  if (!(params.alpha > 0.0) || !(params.gamma >= 0.0)) {
    throw InputError("focal loss needs alpha > 0 and gamma >= 0");
  }
  check_lengths(logits.size(), targets.size(), targets.size(), "targets");
  const double alpha = params.alpha, gamma = params.gamma;
  LossGrad out;
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = logits[i], a = targets[i];
    const double q = sigmoid(p), one_minus_q = sigmoid(-p);
    const double log_q = log_sigmoid(p), log_one_minus_q = log_sigmoid(-p);
    const double pos_w = std::pow(one_minus_q, gamma);
    const double neg_w = std::pow(q, gamma);
    out.loss -= alpha * (a * pos_w * log_q + (1.0 - a) * neg_w * log_one_minus_q);
    out.grad[i] = -alpha * (a * pos_w * (one_minus_q - gamma * q * log_q) +
                            (1.0 - a) * neg_w * (gamma * one_minus_q * log_one_minus_q - q));
  }
  return out;
}

LossGrad focal(std::span<const double> logits, const SoftLabel& label, FocalParams params) {
  return focal(logits, label.scores, params);
}

MaskedLossGrad sigm_bce_masked(std::span<const double> logits, std::span<const double> targets,
                               std::span<const double> mu, std::span<const double> mask) {
  check_lengths(logits.size(), targets.size(), mu.size(), "weights");
  if (mask.size() != logits.size()) throw InputError("length mismatch between logits and mask");
  MaskedLossGrad out;
  out.grad_logits.resize(logits.size());
  out.grad_mask.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto [m, clamped] = clamp_mask(mask[i]);
    const double a = targets[i];
    const auto g = gated_sigmoid(logits[i], m);
    out.loss -= mu[i] * (a * g.log_q + (1.0 - a) * g.log_one_minus_q);
    out.grad_logits[i] = -mu[i] * (a * g.one_minus_s - (1.0 - a) * g.q * g.ratio);
    out.grad_mask[i] = clamped ? 0.0 : -mu[i] * (a / m - (1.0 - a) * g.s / g.one_minus_q);
  }
  return out;
}

MaskedLossGrad soft_ce_masked(std::span<const double> logits, std::span<const double> targets,
                              std::span<const double> mu, std::span<const double> mask) {
  check_lengths(logits.size(), targets.size(), mu.size(), "weights");
  if (mask.size() != logits.size()) throw InputError("length mismatch between logits and mask");
  std::vector<double> shifted(logits.size());
  std::vector<ClampedMask> clamped(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    clamped[i] = clamp_mask(mask[i]);
    shifted[i] = logits[i] + std::log(clamped[i].value);
  }
  LossGrad inner = soft_ce(shifted, targets, mu);
  MaskedLossGrad out;
  out.loss = inner.loss;
  out.grad_mask.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.grad_mask[i] = clamped[i].clamped ? 0.0 : inner.grad[i] / clamped[i].value;
  }
  out.grad_logits = std::move(inner.grad);
  return out;
}

MaskedLossGrad focal_masked(std::span<const double> logits, std::span<const double> targets,
                            std::span<const double> mask, FocalParams params) {
  if (!(params.alpha > 0.0) || !(params.gamma >= 0.0)) {
    throw InputError("focal loss needs alpha > 0 and gamma >= 0");
  }
  check_lengths(logits.size(), targets.size(), mask.size(), "mask");
  const double alpha = params.alpha, gamma = params.gamma;
  MaskedLossGrad out;
  out.grad_logits.resize(logits.size());
  out.grad_mask.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto [m, clamped] = clamp_mask(mask[i]);
    const double a = targets[i];
    const auto g = gated_sigmoid(logits[i], m);
    const double pos_w = std::pow(g.one_minus_q, gamma);
    const double neg_w = std::pow(g.q, gamma);
    // log q / (1 - q) -> -1 as q -> 1
    const double log_q_over = g.one_minus_q > 0.0 ? g.log_q / g.one_minus_q : -1.0;

    out.loss -= alpha * (a * pos_w * g.log_q + (1.0 - a) * neg_w * g.log_one_minus_q);
    out.grad_logits[i] =
        -alpha * (a * pos_w * (g.one_minus_s - gamma * g.q * g.ratio * g.log_q) +
                  (1.0 - a) * neg_w * (gamma * g.one_minus_s * g.log_one_minus_q - g.q * g.ratio));
    if (clamped) {
      out.grad_mask[i] = 0.0;
    } else {
      const double pos = a != 0.0 ? a * pos_w * (1.0 / m - gamma * g.s * log_q_over) : 0.0;
      const double neg = a != 1.0 ? (1.0 - a) * neg_w *
                                        (gamma * g.log_one_minus_q / m - g.s / g.one_minus_q)
                                  : 0.0;
      out.grad_mask[i] = -alpha * (pos + neg);
    }
  }
  return out;
}

LossGrad classification_loss(LossKind kind, std::span<const double> logits,
                             std::span<const double> targets, std::span<const double> mu,
                             FocalParams focal_params) {
  switch (kind) {
    case LossKind::sigm_bce: return sigm_bce(logits, targets, mu);
    case LossKind::soft_ce: return soft_ce(logits, targets, mu);
    case LossKind::focal: return focal(logits, targets, focal_params);
  }
  throw InputError("unknown loss kind");
}

MaskedLossGrad classification_loss_masked(LossKind kind, std::span<const double> logits,
                                          std::span<const double> targets,
                                          std::span<const double> mu,
                                          std::span<const double> mask,
                                          FocalParams focal_params) {
  switch (kind) {
    case LossKind::sigm_bce: return sigm_bce_masked(logits, targets, mu, mask);
    case LossKind::soft_ce: return soft_ce_masked(logits, targets, mu, mask);
    case LossKind::focal: return focal_masked(logits, targets, mask, focal_params);
  }
  throw InputError("unknown loss kind");
}

double combine_total(double cls_loss, std::optional<double> mask_loss) {
  return cls_loss + mask_loss.value_or(0.0);
}

}  // namespace lpr
