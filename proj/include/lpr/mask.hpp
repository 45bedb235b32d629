#pragma once

#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lpr/losses.hpp"
#include "lpr/vocab.hpp"

namespace lpr {

// Answer mask m_p = f(W_q q) with f the capped generalized softplus.
struct MaskParams {
  Eigen::MatrixXd W_q;  // [num_answers x q_dim]
  double dropout_rate = 0.0;
  double alpha = 1.0;

  void validate() const;
};

// min(1, log(1 + exp(alpha x)) / alpha). Throws InputError for alpha <= 0.
double softplus_g(double x, double alpha = 1.0);
// d softplus_g / dx: s(alpha x) below the cap, 0 on the capped plateau.
double softplus_g_derivative(double x, double alpha = 1.0);
// The same derivative recovered from an output value m = softplus_g(x).
double softplus_g_derivative_from_output(double m, double alpha = 1.0);

struct MaskOutput {
  Eigen::VectorXd input;  // question feature after dropout
  Eigen::VectorXd pre;    // W_q * input
  Eigen::VectorXd mask;   // softplus_g(pre), entries in (0, 1]
};

// Inverted dropout on the question feature when training; rng is required
// only if training with a positive dropout rate.
MaskOutput mask_forward(std::span<const double> q_feat, const MaskParams& params, bool training,
                        std::mt19937_64* rng = nullptr);

// 1 for answers in the type's answer set, 0 elsewhere.
std::vector<double> mask_labels(std::size_t type, const TypeCountTable& table);

inline constexpr double kMaskLossEpsilon = 1e-7;

// -sum_i (m_a log m_p + (1 - m_a) log(1 - m_p)) with m_p clamped to
// [eps, 1 - eps]. The gradient is taken with respect to the mask
// pre-activations, chaining through softplus_g.
LossGrad mask_loss(std::span<const double> m_p, std::span<const double> m_a, double alpha = 1.0);

std::vector<double> apply_mask(std::span<const double> probs, std::span<const double> m_p);

}  // namespace lpr
