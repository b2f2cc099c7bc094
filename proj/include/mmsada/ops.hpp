#pragma once

// Differentiable primitives. Matrices are [rows x cols]; "row-wise" ops treat
// each row as one example.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mmsada/tensor.hpp"

namespace mmsada {

/// Running statistics of one batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}

  std::size_t channels() const { return running_mean.size(); }
  bool operator==(const BatchNormState&) const = default;
};

/// y = x W + b for x [B x I], W [I x O], b [O] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Row-wise softmax with max subtraction. Throws NumericError on non-finite input.
Tensor softmax(const Tensor& logits);

/// Mean over rows of -log p[row, label[row]], with p clamped to [1e-12, 1 - 1e-12].
Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);

/// Mean of -t log p - (1 - t) log(1 - p) over all entries; p clamped as above.
Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets);

/// Identity forward; backward multiplies the upstream gradient by -scale.
Tensor gradient_reversal(const Tensor& x, double scale = 1.0);

/// Per-column normalization of x [B x C]. Train mode uses biased batch
/// moments and folds them into `state` by exponential moving average
/// (unbiased variance); eval mode uses the running statistics.
Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode);

/// Per-column affine: y[:, c] = gamma[c] * x[:, c] + beta[c].
Tensor scale_shift(const Tensor& x, const Tensor& gamma, const Tensor& beta);

/// Inverted dropout. Eval mode and rate 0 return x itself.
Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor abs(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Sum of scalar tensors with weights: sum_i w_i * t_i.
Tensor weighted_sum(std::span<const Tensor> terms, std::span<const double> weights);

Tensor reshape(const Tensor& x, Shape shape);
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_cols(std::span<const Tensor> parts);

}  // namespace mmsada
