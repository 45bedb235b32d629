#include "lpr/mask.hpp"

#include <cmath>

#include "lpr/errors.hpp"

namespace lpr {
namespace {

double softplus(double t) { return t > 30.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

void check_alpha(double alpha) {
  if (!(alpha > 0.0)) throw InputError("softplus_g requires alpha > 0");
}

}  // namespace

void MaskParams::validate() const {
  if (!W_q.allFinite()) throw InputError("mask weights are not finite");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InputError("dropout_rate outside [0, 1)");
  check_alpha(alpha);
}

double softplus_g(double x, double alpha) {
  check_alpha(alpha);
  return std::min(1.0, softplus(alpha * x) / alpha);
}

double softplus_g_derivative(double x, double alpha) {
  check_alpha(alpha);
  if (softplus(alpha * x) / alpha >= 1.0) return 0.0;
  return sigmoid(alpha * x);
}

double softplus_g_derivative_from_output(double m, double alpha) {
  check_alpha(alpha);
  if (m >= 1.0) return 0.0;
  // s(t) = 1 - exp(-softplus(t)) and softplus(t) = alpha m
  return -std::expm1(-alpha * m);
}

MaskOutput mask_forward(std::span<const double> q_feat, const MaskParams& params, bool training,
                        std::mt19937_64* rng) {
  if (static_cast<Eigen::Index>(q_feat.size()) != params.W_q.cols()) {
    throw InputError("question feature length does not match mask weights");
  }
  MaskOutput out;
  out.input = Eigen::Map<const Eigen::VectorXd>(q_feat.data(), static_cast<Eigen::Index>(q_feat.size()));
  if (training && params.dropout_rate > 0.0) {
    if (rng == nullptr) throw InputError("mask dropout needs a random generator");
    std::bernoulli_distribution keep(1.0 - params.dropout_rate);
    const double scale = 1.0 / (1.0 - params.dropout_rate);
    for (Eigen::Index k = 0; k < out.input.size(); ++k) {
      out.input[k] = keep(*rng) ? out.input[k] * scale : 0.0;
    }
  }
  out.pre = params.W_q * out.input;
  out.mask = out.pre.unaryExpr([&](double z) { return softplus_g(z, params.alpha); });
  return out;
}

std::vector<double> mask_labels(std::size_t type, const TypeCountTable& table) {
  std::vector<double> m(table.num_answers(), 0.0);
  for (std::size_t i : table.answer_set(type)) m[i] = 1.0;
  return m;
}

LossGrad mask_loss(std::span<const double> m_p, std::span<const double> m_a, double alpha) {
  if (m_p.size() != m_a.size()) throw InputError("mask prediction/label length mismatch");
  LossGrad out;
  out.grad.resize(m_p.size());
  for (std::size_t i = 0; i < m_p.size(); ++i) {
    const double raw = m_p[i];
    const double m = std::clamp(raw, kMaskLossEpsilon, 1.0 - kMaskLossEpsilon);
    const double t = m_a[i];
    out.loss -= t * std::log(m) + (1.0 - t) * std::log1p(-m);
    const bool clamped = raw < kMaskLossEpsilon || raw > 1.0 - kMaskLossEpsilon;
    const double d_m = clamped ? 0.0 : -(t / m - (1.0 - t) / (1.0 - m));
    const double d_pre = softplus_g_derivative_from_output(raw, alpha);
    out.grad[i] = d_pre == 0.0 ? 0.0 : d_m * d_pre;
  }
  return out;
}

std::vector<double> apply_mask(std::span<const double> probs, std::span<const double> m_p) {
  if (probs.size() != m_p.size()) throw InputError("probability/mask length mismatch");
  std::vector<double> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * m_p[i];
  return out;
}

}  // namespace lpr
