#include "mmsada/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmsada/errors.hpp"
#include "mmsada/kernels.hpp"

namespace mmsada {
namespace {

constexpr double kProbFloor = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.shape()[1] != weight.shape()[0])
    throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));
  const std::size_t batch = x.shape()[0];
  const std::size_t in = weight.shape()[0];
  const std::size_t out = weight.shape()[1];
  if (bias.defined() && bias.size() != out)
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " incompatible with weight " +
                         shape_string(weight.shape()));

  std::vector<double> y(batch * out, 0.0);
  if (bias.defined()) {
    const auto b = bias.values();
    for (std::size_t r = 0; r < batch; ++r) std::copy(b.begin(), b.end(), y.begin() + r * out);
  }
  kernels::gemm_nn(batch, out, in, x.values().data(), weight.values().data(), y.data());

  return Tensor::make_result(
      {batch, out}, std::move(y), {x, weight, bias},
      [x, weight, bias, batch, in, out](std::span<const double> dy) {
        if (x.requires_grad()) {
          std::vector<double> dx(batch * in, 0.0);
          kernels::gemm_nt(batch, in, out, dy.data(), weight.values().data(), dx.data());
          x.accumulate_grad(dx);
        }
        if (weight.requires_grad()) {
          std::vector<double> dw(in * out, 0.0);
          kernels::gemm_tn(in, out, batch, x.values().data(), dy.data(), dw.data());
          weight.accumulate_grad(dw);
        }
        if (bias.defined() && bias.requires_grad()) {
          std::vector<double> db(out, 0.0);
          for (std::size_t r = 0; r < batch; ++r) kernels::axpy(out, 1.0, dy.data() + r * out, db.data());
          bias.accumulate_grad(db);
        }
      });
}

Tensor relu(const Tensor& x) {
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] > 0.0 ? v[i] : 0.0;
  return Tensor::make_result(x.shape(), std::move(y), {x}, [x](std::span<const double> dy) {
    const auto v = x.values();
    std::vector<double> dx(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dx[i] = v[i] > 0.0 ? dy[i] : 0.0;
    x.accumulate_grad(dx);
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    // Branch keeps exp() from overflowing for large |x|.
    y[i] = v[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-v[i])) : std::exp(v[i]) / (1.0 + std::exp(v[i]));
  }
  auto out = y;
  return Tensor::make_result(x.shape(), std::move(y), {x},
                             [x, out = std::move(out)](std::span<const double> dy) {
                               std::vector<double> dx(out.size());
                               for (std::size_t i = 0; i < out.size(); ++i)
                                 dx[i] = dy[i] * out[i] * (1.0 - out[i]);
                               x.accumulate_grad(dx);
                             });
}

Tensor softmax(const Tensor& logits) {
  require_matrix(logits, "softmax");
  const std::size_t rows = logits.rows();
  const std::size_t k = logits.cols();
  const auto v = logits.values();
  std::vector<double> y(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * k;
    double* out = y.data() + r * k;
    double mx = in[0];
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(in[j])) throw NumericError("softmax: non-finite logit in row " + std::to_string(r));
      mx = std::max(mx, in[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (out[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < k; ++j) out[j] /= z;
  }
  auto probs = y;
  return Tensor::make_result(
      logits.shape(), std::move(y), {logits},
      [logits, probs = std::move(probs), rows, k](std::span<const double> dy) {
        std::vector<double> dx(probs.size());
        for (std::size_t r = 0; r < rows; ++r) {
          const double* p = probs.data() + r * k;
          const double* g = dy.data() + r * k;
          double inner = 0.0;
          for (std::size_t j = 0; j < k; ++j) inner += g[j] * p[j];
          for (std::size_t j = 0; j < k; ++j) dx[r * k + j] = p[j] * (g[j] - inner);
        }
        logits.accumulate_grad(dx);
      });
}

Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  require_matrix(probs, "cross_entropy");
  const std::size_t rows = probs.rows();
  const std::size_t k = probs.cols();
  if (labels.size() != rows)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for probs " +
                         shape_string(probs.shape()));
  for (std::size_t r = 0; r < rows; ++r)
    if (labels[r] >= k)
      throw IndexError("cross_entropy: label " + std::to_string(labels[r]) + " out of range for " +
                       std::to_string(k) + " classes");
  const auto p = probs.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) total -= std::log(clamp_prob(p[r * k + labels[r]]));
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  return Tensor::make_result(
      {1}, {total / static_cast<double>(rows)}, {probs},
      [probs, targets = std::move(targets), rows, k](std::span<const double> dy) {
        const auto p = probs.values();
        std::vector<double> dx(p.size(), 0.0);
        const double g = dy[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          const double pr = p[r * k + targets[r]];
          if (pr > kProbFloor && pr < 1.0 - kProbFloor) dx[r * k + targets[r]] = -g / pr;
        }
        probs.accumulate_grad(dx);
      });
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets) {
  if (targets.size() != probs.size())
    throw DimensionError("binary_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for probs " + shape_string(probs.shape()));
  const auto p = probs.values();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = clamp_prob(p[i]);
    total -= targets[i] * std::log(q) + (1.0 - targets[i]) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(p.size());
  std::vector<double> t(targets.begin(), targets.end());
  return Tensor::make_result({1}, {total / n}, {probs},
                             [probs, t = std::move(t), n](std::span<const double> dy) {
                               const auto p = probs.values();
                               std::vector<double> dx(p.size(), 0.0);
                               for (std::size_t i = 0; i < p.size(); ++i) {
                                 if (p[i] <= kProbFloor || p[i] >= 1.0 - kProbFloor) continue;
                                 dx[i] = dy[0] / n * (-t[i] / p[i] + (1.0 - t[i]) / (1.0 - p[i]));
                               }
                               probs.accumulate_grad(dx);
                             });
}

Tensor gradient_reversal(const Tensor& x, double scale) {
  if (!(scale > 0.0)) throw ParameterError("gradient_reversal: scale must be positive");
  const auto v = x.values();
  return Tensor::make_result(x.shape(), std::vector<double>(v.begin(), v.end()), {x},
                             [x, scale](std::span<const double> dy) {
                               std::vector<double> dx(dy.size());
                               for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = -scale * dy[i];
                               x.accumulate_grad(dx);
                             });
}

Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode) {
  require_matrix(x, "batch_norm");
  const std::size_t batch = x.rows();
  const std::size_t channels = x.cols();
  if (state.channels() != channels)
    throw DimensionError("batch_norm: state has " + std::to_string(state.channels()) +
                         " channels, input " + shape_string(x.shape()));
  if (mode == Mode::train && batch < 2)
    throw BatchSizeError("batch_norm: train mode needs at least 2 rows, got " + std::to_string(batch));

  const auto v = x.values();
  std::vector<double> mean(channels, 0.0);
  std::vector<double> var(channels, 0.0);
  if (mode == Mode::train) {
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < channels; ++c) mean[c] += v[r * channels + c];
    for (auto& m : mean) m /= static_cast<double>(batch);
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t c = 0; c < channels; ++c) {
        const double d = v[r * channels + c] - mean[c];
        var[c] += d * d;
      }
    for (auto& s : var) s /= static_cast<double>(batch);
    const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
    for (std::size_t c = 0; c < channels; ++c) {
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c] * unbias;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
  std::vector<double> xhat(v.size());
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      xhat[r * channels + c] = (v[r * channels + c] - mean[c]) * inv_std[c];

  auto saved = xhat;
  return Tensor::make_result(
      x.shape(), std::move(xhat), {x},
      [x, mode, xhat = std::move(saved), inv_std = std::move(inv_std), batch,
       channels](std::span<const double> dy) {
        std::vector<double> dx(dy.size());
        if (mode == Mode::eval) {
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < channels; ++c)
              dx[r * channels + c] = dy[r * channels + c] * inv_std[c];
        } else {
          std::vector<double> sum_dy(channels, 0.0);
          std::vector<double> sum_dy_xhat(channels, 0.0);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
              sum_dy[c] += dy[r * channels + c];
              sum_dy_xhat[c] += dy[r * channels + c] * xhat[r * channels + c];
            }
          const double n = static_cast<double>(batch);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t i = r * channels + c;
              dx[i] = inv_std[c] / n * (n * dy[i] - sum_dy[c] - xhat[i] * sum_dy_xhat[c]);
            }
        }
        x.accumulate_grad(dx);
      });
}

Tensor scale_shift(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  require_matrix(x, "scale_shift");
  const std::size_t batch = x.rows();
  const std::size_t channels = x.cols();
  if (gamma.size() != channels || beta.size() != channels)
    throw DimensionError("scale_shift: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " incompatible with " + shape_string(x.shape()));
  const auto v = x.values();
  const auto g = gamma.values();
  const auto b = beta.values();
  std::vector<double> y(v.size());
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < channels; ++c) y[r * channels + c] = g[c] * v[r * channels + c] + b[c];
  return Tensor::make_result(
      x.shape(), std::move(y), {x, gamma, beta},
      [x, gamma, beta, batch, channels](std::span<const double> dy) {
        const auto v = x.values();
        const auto g = gamma.values();
        if (x.requires_grad()) {
          std::vector<double> dx(dy.size());
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < channels; ++c) dx[r * channels + c] = g[c] * dy[r * channels + c];
          x.accumulate_grad(dx);
        }
        if (gamma.requires_grad() || beta.requires_grad()) {
          std::vector<double> dg(channels, 0.0);
          std::vector<double> db(channels, 0.0);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t c = 0; c < channels; ++c) {
              dg[c] += dy[r * channels + c] * v[r * channels + c];
              db[c] += dy[r * channels + c];
            }
          if (gamma.requires_grad()) gamma.accumulate_grad(dg);
          if (beta.requires_grad()) beta.accumulate_grad(db);
        }
      });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::eval || rate == 0.0) return x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = unit(rng) < rate ? 0.0 : keep_scale;
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] * mask[i];
  return Tensor::make_result(x.shape(), std::move(y), {x},
                             [x, mask = std::move(mask)](std::span<const double> dy) {
                               std::vector<double> dx(dy.size());
                               for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
                               x.accumulate_grad(dx);
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> y(va.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[i] + vb[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [a, b](std::span<const double> dy) {
    if (a.requires_grad()) a.accumulate_grad(dy);
    if (b.requires_grad()) b.accumulate_grad(dy);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> y(va.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[i] - vb[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [a, b](std::span<const double> dy) {
    if (a.requires_grad()) a.accumulate_grad(dy);
    if (b.requires_grad()) {
      std::vector<double> neg(dy.begin(), dy.end());
      for (auto& g : neg) g = -g;
      b.accumulate_grad(neg);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> y(va.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = va[i] * vb[i];
  return Tensor::make_result(a.shape(), std::move(y), {a, b}, [a, b](std::span<const double> dy) {
    const auto va = a.values();
    const auto vb = b.values();
    std::vector<double> g(dy.size());
    if (a.requires_grad()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = dy[i] * vb[i];
      a.accumulate_grad(g);
    }
    if (b.requires_grad()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = dy[i] * va[i];
      b.accumulate_grad(g);
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * v[i];
  return Tensor::make_result(x.shape(), std::move(y), {x}, [x, factor](std::span<const double> dy) {
    std::vector<double> dx(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = factor * dy[i];
    x.accumulate_grad(dx);
  });
}

Tensor abs(const Tensor& x) {
  const auto v = x.values();
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::fabs(v[i]);
  return Tensor::make_result(x.shape(), std::move(y), {x}, [x](std::span<const double> dy) {
    const auto v = x.values();
    std::vector<double> dx(dy.size());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = v[i] > 0.0 ? dy[i] : (v[i] < 0.0 ? -dy[i] : 0.0);
    x.accumulate_grad(dx);
  });
}

Tensor sum(const Tensor& x) {
  const auto v = x.values();
  double s = 0.0;
  for (double e : v) s += e;
  const std::size_t n = v.size();
  return Tensor::make_result({1}, {s}, {x}, [x, n](std::span<const double> dy) {
    x.accumulate_grad(std::vector<double>(n, dy[0]));
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor weighted_sum(std::span<const Tensor> terms, std::span<const double> weights) {
  if (terms.size() != weights.size() || terms.empty())
    throw DimensionError("weighted_sum: " + std::to_string(terms.size()) + " terms vs " +
                         std::to_string(weights.size()) + " weights");
  double s = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) s += weights[i] * terms[i].item();
  std::vector<Tensor> parents(terms.begin(), terms.end());
  std::vector<double> w(weights.begin(), weights.end());
  auto captured = parents;
  return Tensor::make_result({1}, {s}, std::move(parents),
                             [terms = std::move(captured), w = std::move(w)](std::span<const double> dy) {
                               for (std::size_t i = 0; i < terms.size(); ++i)
                                 if (terms[i].requires_grad()) {
                                   const double g = w[i] * dy[0];
                                   terms[i].accumulate_grad(std::span<const double>(&g, 1));
                                 }
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  const auto v = x.values();
  return Tensor::make_result(std::move(shape), std::vector<double>(v.begin(), v.end()), {x},
                             [x](std::span<const double> dy) { x.accumulate_grad(dy); });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "select_rows");
  const std::size_t n = x.rows();
  const std::size_t c = x.cols();
  if (rows.empty()) throw DimensionError("select_rows: empty row selection");
  for (std::size_t r : rows)
    if (r >= n) throw IndexError("select_rows: row " + std::to_string(r) + " out of " + std::to_string(n));
  const auto v = x.values();
  std::vector<double> y(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                y.begin() + static_cast<std::ptrdiff_t>(i * c));
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::make_result({rows.size(), c}, std::move(y), {x},
                             [x, idx = std::move(idx), n, c](std::span<const double> dy) {
                               std::vector<double> dx(n * c, 0.0);
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < c; ++j) dx[idx[i] * c + j] += dy[i * c + j];
                               x.accumulate_grad(dx);
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t batch = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != batch)
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    total += p.cols();
  }
  std::vector<double> y(batch * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto v = p.values();
    for (std::size_t r = 0; r < batch; ++r)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * c), c,
                  y.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += c;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  auto captured = inputs;
  return Tensor::make_result({batch, total}, std::move(y), std::move(inputs),
                             [parts = std::move(captured), batch, total](std::span<const double> dy) {
                               std::size_t offset = 0;
                               for (auto& p : parts) {
                                 const std::size_t c = p.cols();
                                 if (p.requires_grad()) {
                                   std::vector<double> dx(batch * c);
                                   for (std::size_t r = 0; r < batch; ++r)
                                     std::copy_n(dy.begin() + static_cast<std::ptrdiff_t>(r * total + offset), c,
                                                 dx.begin() + static_cast<std::ptrdiff_t>(r * c));
                                   p.accumulate_grad(dx);
                                 }
                                 offset += c;
                               }
                             });
}

}  // namespace mmsada
