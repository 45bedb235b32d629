#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lpr/vocab.hpp"

namespace lpr {

enum class LossKind { sigm_bce, soft_ce, focal };
enum class Reduction { mean, sum };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);
Reduction reduction_from_string(const std::string& s);
std::string to_string(Reduction r);

// Loss value and its gradient with respect to the logits p.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Loss evaluated on mask-gated predictions, with gradients for both the
// logits and the mask values.
struct MaskedLossGrad {
  double loss = 0.0;
  std::vector<double> grad_logits;
  std::vector<double> grad_mask;
};

struct FocalParams {
  double alpha = 1.0;
  double gamma = 2.0;
};

// Lower clamp for mask values entering a log.
inline constexpr double kMaskEpsilon = 1e-7;

double sigmoid(double x);
// log(sigmoid(x)) without overflow or cancellation.
double log_sigmoid(double x);

// -sum_i mu_i (a_i log s(p_i) + (1 - a_i) log(1 - s(p_i)));
// dL/dp_i = mu_i ((1 - a_i) s(p_i) - a_i (1 - s(p_i))).
LossGrad sigm_bce(std::span<const double> logits, std::span<const double> targets,
                  std::span<const double> mu);
LossGrad sigm_bce(std::span<const double> logits, const SoftLabel& label,
                  std::span<const double> mu);

// -sum_i mu_i a_i log softmax(p)_i;
// dL/dp_i = (sum_k mu_k a_k) softmax(p)_i - mu_i a_i.
LossGrad soft_ce(std::span<const double> logits, std::span<const double> targets,
                 std::span<const double> mu);
LossGrad soft_ce(std::span<const double> logits, const SoftLabel& label,
                 std::span<const double> mu);

// Per-class sigmoid focal loss with soft targets:
// -alpha sum_i [a_i (1-q_i)^gamma log q_i + (1-a_i) q_i^gamma log(1-q_i)], q = s(p).
LossGrad focal(std::span<const double> logits, std::span<const double> targets,
               FocalParams params = {});
LossGrad focal(std::span<const double> logits, const SoftLabel& label, FocalParams params = {});

// Mask-gated variants. The sigmoid family uses q_i = s(p_i) m_i as the
// probability; Soft-CE renormalises softmax(p) * m, i.e. softmax(p + log m).
// Mask values are clamped to [kMaskEpsilon, 1]; the clamped region has zero
// mask gradient. With m == 1 these reduce to the unmasked losses.
MaskedLossGrad sigm_bce_masked(std::span<const double> logits, std::span<const double> targets,
                               std::span<const double> mu, std::span<const double> mask);
MaskedLossGrad soft_ce_masked(std::span<const double> logits, std::span<const double> targets,
                              std::span<const double> mu, std::span<const double> mask);
MaskedLossGrad focal_masked(std::span<const double> logits, std::span<const double> targets,
                            std::span<const double> mask, FocalParams params = {});

// Dispatch on kind; focal ignores mu.
LossGrad classification_loss(LossKind kind, std::span<const double> logits,
                             std::span<const double> targets, std::span<const double> mu,
                             FocalParams focal_params = {});
MaskedLossGrad classification_loss_masked(LossKind kind, std::span<const double> logits,
                                          std::span<const double> targets,
                                          std::span<const double> mu,
                                          std::span<const double> mask,
                                          FocalParams focal_params = {});

// L = L_cls + L_mask; the mask term is absent when the mask is disabled.
double combine_total(double cls_loss, std::optional<double> mask_loss);

}  // namespace lpr
