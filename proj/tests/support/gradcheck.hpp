#pragma once

// Central-difference gradient checking and random graph generation shared by
// the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "mmsada/ops.hpp"
#include "mmsada/tensor.hpp"

namespace mmsada::testing {

/// Sign pattern of every relu input seen while building one graph.
struct ReluTrace {
  std::vector<bool> signs;
  bool enabled = true;
};

inline Tensor traced_relu(const Tensor& x, ReluTrace* trace) {
  if (trace && trace->enabled)
    for (double v : x.values()) trace->signs.push_back(v > 0.0);
  return relu(x);
}

struct CoordinateCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  bool kink = false;  // a relu input changed sign under the perturbation

  double relative_error() const {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
  }
};

/// `build` must rebuild the scalar loss from the current leaf values.
/// `factors[i]` multiplies the numeric derivative of leaf i: the product of
/// -scale over every gradient reversal between that leaf and the loss.
inline std::vector<CoordinateCheck> check_gradients(std::vector<Tensor> leaves,
                                                    const std::function<Tensor(ReluTrace*)>& build,
                                                    double step = 1e-5, std::vector<double> factors = {}) {
  factors.resize(leaves.size(), 1.0);
  for (auto& l : leaves) l.zero_grad();
  ReluTrace base;
  const Tensor loss = build(&base);
  backward(loss);
  std::vector<CoordinateCheck> out;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    const std::vector<double> g(leaf.grad().begin(), leaf.grad().end());
    for (std::size_t i = 0; i < leaf.size(); ++i) {
      const double orig = leaf.values()[i];
      ReluTrace plus, minus;
      leaf.mutable_values()[i] = orig + step;
      const double fp = build(&plus).item();
      leaf.mutable_values()[i] = orig - step;
      const double fm = build(&minus).item();
      leaf.mutable_values()[i] = orig;
      CoordinateCheck c;
      c.analytic = g.empty() ? 0.0 : g[i];
      c.numeric = factors[li] * (fp - fm) / (2.0 * step);
      c.kink = plus.signs != base.signs || minus.signs != base.signs;
      out.push_back(c);
    }
  }
  return out;
}

struct GradcheckSummary {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t excluded = 0;
  double pass_fraction() const { return checked == 0 ? 1.0 : static_cast<double>(passed) / checked; }
};

inline GradcheckSummary summarize(const std::vector<CoordinateCheck>& checks, double tolerance = 1e-4) {
  GradcheckSummary s;
  for (const auto& c : checks) {
    if (c.kink) {
      ++s.excluded;
      continue;
    }
    ++s.checked;
    if (c.relative_error() <= tolerance) ++s.passed;
  }
  return s;
}

/// Random composition of linear / relu / batch_norm / gradient_reversal ending
/// in softmax + cross_entropy. Depth of the hidden stack is 1..6 and every
/// width is at most 16.
class RandomGraph {
 public:
  explicit RandomGraph(std::uint64_t seed) : rng_(seed) {
    std::uniform_int_distribution<std::size_t> batch(2, 6), width(2, 16), depth(1, 6), classes(2, 5);
    std::normal_distribution<double> g(0.0, 1.0);
    batch_ = batch(rng_);
    const std::size_t in = width(rng_);
    input_ = random_tensor({batch_, in}, g);
    std::size_t cur = in;
    const std::size_t layers = depth(rng_);
    std::uniform_int_distribution<int> pick(0, 3);
    for (std::size_t l = 0; l < layers; ++l) {
      Layer layer;
      layer.kind = pick(rng_);
      if (layer.kind == 0) {
        const std::size_t out = width(rng_);
        layer.weight = random_tensor({cur, out}, g, 1.0 / std::sqrt(static_cast<double>(cur)));
        layer.bias = random_tensor({out}, g, 0.1);
        cur = out;
      } else if (layer.kind == 3) {
        std::uniform_real_distribution<double> sc(0.25, 2.0);
        layer.grl_scale = sc(rng_);
      }
      layers_.push_back(layer);
    }
    k_ = classes(rng_);
    head_w_ = random_tensor({cur, k_}, g, 1.0 / std::sqrt(static_cast<double>(cur)));
    head_b_ = random_tensor({k_}, g, 0.1);
    std::uniform_int_distribution<std::size_t> lab(0, k_ - 1);
    for (std::size_t b = 0; b < batch_; ++b) labels_.push_back(lab(rng_));
  }

  std::vector<Tensor> leaves() const {
    std::vector<Tensor> out{input_, head_w_, head_b_};
    for (const auto& l : layers_)
      if (l.kind == 0) {
        out.push_back(l.weight);
        out.push_back(l.bias);
      }
    return out;
  }

  /// Gradient-reversal sign/scale factor per leaf, in leaves() order.
  std::vector<double> leaf_factors() const {
    std::vector<double> after(layers_.size() + 1, 1.0);  // product over layers >= i
    for (std::size_t i = layers_.size(); i-- > 0;)
      after[i] = after[i + 1] * (layers_[i].kind == 3 ? -layers_[i].grl_scale : 1.0);
    std::vector<double> out{after[0], 1.0, 1.0};
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].kind == 0) {
        out.push_back(after[i + 1]);
        out.push_back(after[i + 1]);
      }
    return out;
  }

  Tensor loss(ReluTrace* trace) const {
    Tensor h = input_;
    for (const auto& l : layers_) {
      switch (l.kind) {
        case 0: h = linear(h, l.weight, l.bias); break;
        case 1: h = traced_relu(h, trace); break;
        case 2: {
          BatchNormState st(h.cols());
          h = batch_norm(h, st, Mode::train);
          break;
        }
        default: h = gradient_reversal(h, l.grl_scale); break;
      }
    }
    return cross_entropy(softmax(linear(h, head_w_, head_b_)), labels_);
  }

 private:
  struct Layer {
    int kind = 0;
    Tensor weight, bias;
    double grl_scale = 1.0;
  };

  Tensor random_tensor(Shape shape, std::normal_distribution<double>& g, double s = 1.0) {
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = s * g(rng_);
    return Tensor::from_values(std::move(shape), std::move(v), true);
  }

  std::mt19937_64 rng_;
  std::size_t batch_ = 2, k_ = 2;
  Tensor input_, head_w_, head_b_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> labels_;
};

}  // namespace mmsada::testing
