#pragma once

// Training objectives: fused classification, per-modality adversarial domain
// loss, correspondence loss, their weighted combination, and the MMD and
// classifier-discrepancy baseline losses.
//
// Probabilities are clamped to [1e-12, 1 - 1e-12] before every log, so all
// losses are finite and non-negative on valid inputs.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mmsada/nets.hpp"
#include "mmsada/sample.hpp"
#include "mmsada/tensor.hpp"

namespace mmsada {

struct LossWeights {
  double lambda_d = 1.0;
  double lambda_c = 5.0;

  void validate() const;
};

// ---- Tensor-level forms (shared forward passes in the trainer use these) ----

/// softmax(sum_m logits_m), row-wise.
Tensor fused_probabilities(std::span<const Tensor> modality_logits);

/// Mean over rows of -log softmax(sum_m logits_m)[y].
Tensor fused_classification_loss(std::span<const Tensor> modality_logits, std::span<const std::size_t> labels);

/// Binary cross-entropy of discriminator outputs against domain bits (1 = source).
Tensor domain_loss(const Tensor& domain_probs, std::span<const int> domain_bits);

/// Two-class cross-entropy of correspondence probabilities against c bits.
Tensor correspondence_loss(const Tensor& correspondence_probs, std::span<const int> correspondence_bits);

/// Mean over rows of the L1 distance between two row-stochastic matrices.
Tensor mcd_discrepancy(const Tensor& probs1, const Tensor& probs2);

struct MmdOptions {
  // Kernel variances are median(pairwise squared distance) x multiplier.
  std::vector<double> multipliers{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  // When non-empty these kernel variances are used as-is instead.
  std::vector<double> fixed_variances;
  // U-statistic (drops self-similarity terms) instead of the V-statistic.
  bool unbiased = false;
};

/// Squared MMD between two feature sets [N x D] and [M x D] under an average
/// of Gaussian kernels exp(-|a-b|^2 / (2 s^2)). Differentiable in both inputs;
/// the median bandwidth is treated as a constant.
Tensor mmd_loss(const Tensor& source_features, const Tensor& target_features, const MmdOptions& options = {});

struct LossBreakdown {
  double classification = 0.0;
  std::vector<double> domain;  // per modality
  double correspondence = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  Tensor total;
  LossBreakdown parts;
};

/// L = L_y + lambda_d * sum_m L_d^m + lambda_c * L_c. Undefined domain or
/// correspondence tensors count as zero.
TotalLoss combine_losses(const Tensor& classification, std::span<const Tensor> domain, const Tensor& correspondence,
                         const LossWeights& weights);

// ---- Bundle-level forms over labelled examples ----

struct ForwardContext {
  Mode mode = Mode::train;
  std::mt19937_64* rng = nullptr;  // required in train mode (dropout)
};

/// Requires every example to be corresponding source (d = 1, c = 1) with a label.
Tensor classification_loss(ModelBundle& bundle, std::span<const LabeledExample> batch, ForwardContext ctx);

/// Features pass through gradient reversal before D_m.
Tensor adversarial_domain_loss(ModelBundle& bundle, std::size_t m, std::span<const LabeledExample> batch,
                               ForwardContext ctx);

Tensor correspondence_loss(ModelBundle& bundle, std::span<const LabeledExample> batch, ForwardContext ctx);

/// Weighted total over one composed batch: L_y on the corresponding source
/// subset, both alignment terms on the whole batch, one shared forward pass.
TotalLoss total_loss(ModelBundle& bundle, std::span<const LabeledExample> batch, const LossWeights& weights,
                     ForwardContext ctx);

}  // namespace mmsada
