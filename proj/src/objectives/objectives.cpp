#include "mmsada/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mmsada/errors.hpp"
#include "mmsada/ops.hpp"

namespace mmsada {
namespace {

Tensor summed_logits(std::span<const Tensor> modality_logits) {
  if (modality_logits.empty()) throw DimensionError("need logits from at least one modality");
  Tensor acc = modality_logits[0];
  for (std::size_t m = 1; m < modality_logits.size(); ++m) acc = add(acc, modality_logits[m]);
  return acc;
}

std::mt19937_64& require_rng(const ForwardContext& ctx) {
  if (ctx.rng == nullptr) throw ContractError("train-mode forward pass needs an rng");
  return *ctx.rng;
}

std::vector<Tensor> forward_features(ModelBundle& bundle, std::span<const LabeledExample> batch,
                                     const ForwardContext& ctx) {
  std::vector<WindowSample> windows;
  windows.reserve(batch.size());
  for (const auto& ex : batch) windows.push_back(ex.window);
  std::mt19937_64 unused(0);
  std::mt19937_64& rng = ctx.mode == Mode::train ? require_rng(ctx) : unused;
  std::vector<Tensor> feats;
  for (std::size_t m = 0; m < bundle.modalities(); ++m)
    feats.push_back(bundle.features(m, stack_windows(windows, m), ctx.mode, rng));
  return feats;
}

std::vector<Tensor> classifier_logits(const ModelBundle& bundle, std::span<const Tensor> feats) {
  std::vector<Tensor> logits;
  for (std::size_t m = 0; m < feats.size(); ++m) logits.push_back(bundle.classify(m, feats[m]));
  return logits;
}

}  // namespace

void LossWeights::validate() const {
  if (!(lambda_d >= 0.0) || !(lambda_c >= 0.0)) throw ConfigError("loss weights must be non-negative");
}

Tensor fused_probabilities(std::span<const Tensor> modality_logits) { return softmax(summed_logits(modality_logits)); }

Tensor fused_classification_loss(std::span<const Tensor> modality_logits, std::span<const std::size_t> labels) {
  return cross_entropy(fused_probabilities(modality_logits), labels);
}

Tensor domain_loss(const Tensor& domain_probs, std::span<const int> domain_bits) {
  if (domain_bits.empty()) throw ContractError("domain loss over an empty batch");
  std::vector<double> targets(domain_bits.begin(), domain_bits.end());
  return binary_cross_entropy(domain_probs, targets);
}

Tensor correspondence_loss(const Tensor& correspondence_probs, std::span<const int> correspondence_bits) {
  if (correspondence_bits.empty()) throw ContractError("correspondence loss over an empty batch");
  std::vector<std::size_t> labels(correspondence_bits.begin(), correspondence_bits.end());
  return cross_entropy(correspondence_probs, labels);
}

Tensor mcd_discrepancy(const Tensor& probs1, const Tensor& probs2) {
  if (probs1.shape() != probs2.shape() || probs1.rank() != 2)
    throw DimensionError("mcd_discrepancy: shape mismatch " + shape_string(probs1.shape()) + " vs " +
                         shape_string(probs2.shape()));
  return scale(sum(abs(sub(probs1, probs2))), 1.0 / static_cast<double>(probs1.rows()));
}

Tensor mmd_loss(const Tensor& source_features, const Tensor& target_features, const MmdOptions& options) {
  if (source_features.rank() != 2 || target_features.rank() != 2 ||
      source_features.cols() != target_features.cols())
    throw DimensionError("mmd_loss: feature sets " + shape_string(source_features.shape()) + " and " +
                         shape_string(target_features.shape()) + " are incompatible");
  const std::size_t n = source_features.rows();
  const std::size_t m = target_features.rows();
  const std::size_t dim = source_features.cols();
  const bool fixed = !options.fixed_variances.empty();
  if (!fixed && (n < 2 || m < 2))
    throw DataError("mmd_loss: need at least 2 samples per side, got " + std::to_string(n) + " and " +
                    std::to_string(m));
  if (options.unbiased && (n < 2 || m < 2)) throw DataError("mmd_loss: unbiased estimate needs 2 samples per side");

  // Pooled rows z = [source; target].
  const std::size_t total = n + m;
  std::vector<double> z(total * dim);
  std::copy(source_features.values().begin(), source_features.values().end(), z.begin());
  std::copy(target_features.values().begin(), target_features.values().end(),
            z.begin() + static_cast<std::ptrdiff_t>(n * dim));
  std::vector<double> sq(total * total, 0.0);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = z[i * dim + k] - z[j * dim + k];
        s += diff * diff;
      }
      sq[i * total + j] = sq[j * total + i] = s;
    }

  std::vector<double> variances = options.fixed_variances;
  if (!fixed) {
    std::vector<double> pairs;
    pairs.reserve(total * (total - 1) / 2);
    for (std::size_t i = 0; i < total; ++i)
      for (std::size_t j = i + 1; j < total; ++j) pairs.push_back(sq[i * total + j]);
    std::sort(pairs.begin(), pairs.end());
    const std::size_t h = pairs.size() / 2;
    double median = pairs.size() % 2 ? pairs[h] : 0.5 * (pairs[h - 1] + pairs[h]);
    if (!(median > 0.0)) median = 1.0;
    for (double mult : options.multipliers) variances.push_back(median * mult);
  }
  if (variances.empty()) throw ParameterError("mmd_loss: no kernel bandwidths");
  for (double v : variances)
    if (!(v > 0.0)) throw ParameterError("mmd_loss: kernel variances must be positive");

  // Pair weights: +1/n^2 within source, +1/m^2 within target, -1/(nm) across.
  const double ws = options.unbiased ? 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1))
                                     : 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  const double wt = options.unbiased ? 1.0 / (static_cast<double>(m) * static_cast<double>(m - 1))
                                     : 1.0 / (static_cast<double>(m) * static_cast<double>(m));
  const double wx = -1.0 / (static_cast<double>(n) * static_cast<double>(m));
  auto weight = [&](std::size_t i, std::size_t j) {
    if (i == j && options.unbiased) return 0.0;
    const bool si = i < n;
    const bool sj = j < n;
    return si && sj ? ws : (!si && !sj ? wt : wx);
  };

  const double inv_k = 1.0 / static_cast<double>(variances.size());
  // kernel_sum[i, j] = mean over kernels of k_s(z_i, z_j); grad_coef keeps
  // mean over kernels of k_s / s^2 for the backward pass.
  std::vector<double> grad_coef(total * total, 0.0);
  double value = 0.0;
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = 0; j < total; ++j) {
      double ksum = 0.0;
      double gsum = 0.0;
      for (double v : variances) {
        const double k = std::exp(-sq[i * total + j] / (2.0 * v));
        ksum += k;
        gsum += k / v;
      }
      const double w = weight(i, j);
      value += w * ksum * inv_k;
      grad_coef[i * total + j] = w * gsum * inv_k;
    }
  if (!options.unbiased) value = std::max(value, 0.0);

  return Tensor::make_result(
      {1}, {value}, {source_features, target_features},
      [source_features, target_features, z = std::move(z), grad_coef = std::move(grad_coef), n, m, dim,
       total](std::span<const double> dy) {
        // d/dz_a sum_{i,j} w_ij k(z_i, z_j) = sum_j 2 w_aj k_aj * (-(z_a - z_j) / s^2)
        std::vector<double> dz(total * dim, 0.0);
        for (std::size_t a = 0; a < total; ++a)
          for (std::size_t j = 0; j < total; ++j) {
            if (a == j) continue;
            const double c = -2.0 * grad_coef[a * total + j] * dy[0];
            for (std::size_t k = 0; k < dim; ++k) dz[a * dim + k] += c * (z[a * dim + k] - z[j * dim + k]);
          }
        if (source_features.requires_grad())
          source_features.accumulate_grad(std::span<const double>(dz.data(), n * dim));
        if (target_features.requires_grad())
          target_features.accumulate_grad(std::span<const double>(dz.data() + n * dim, m * dim));
      });
}

TotalLoss combine_losses(const Tensor& classification, std::span<const Tensor> domain, const Tensor& correspondence,
                         const LossWeights& weights) {
  weights.validate();
  std::vector<Tensor> terms{classification};
  std::vector<double> w{1.0};
  TotalLoss out;
  out.parts.classification = classification.item();
  for (const auto& d : domain) {
    out.parts.domain.push_back(d.defined() ? d.item() : 0.0);
    if (d.defined()) {
      terms.push_back(d);
      w.push_back(weights.lambda_d);
    }
  }
  if (correspondence.defined()) {
    out.parts.correspondence = correspondence.item();
    terms.push_back(correspondence);
    w.push_back(weights.lambda_c);
  }
  out.total = weighted_sum(terms, w);
  out.parts.total = out.total.item();
  return out;
}

Tensor classification_loss(ModelBundle& bundle, std::span<const LabeledExample> batch, ForwardContext ctx) {
  if (batch.empty()) throw ContractError("classification loss over an empty batch");
  std::vector<std::size_t> labels;
  for (const auto& ex : batch) {
    if (ex.d != 1 || ex.c != 1 || !ex.y)
      throw ContractError("classification loss accepts only labelled corresponding source examples");
    labels.push_back(*ex.y);
  }
  const auto feats = forward_features(bundle, batch, ctx);
  return fused_classification_loss(classifier_logits(bundle, feats), labels);
}

Tensor adversarial_domain_loss(ModelBundle& bundle, std::size_t m, std::span<const LabeledExample> batch,
                               ForwardContext ctx) {
  if (batch.empty()) throw ContractError("adversarial domain loss over an empty batch");
  if (m >= bundle.modalities()) throw IndexError("modality " + std::to_string(m) + " out of range");
  const auto feats = forward_features(bundle, batch, ctx);
  std::vector<int> bits;
  for (const auto& ex : batch) bits.push_back(ex.d);
  return domain_loss(bundle.discriminate(m, gradient_reversal(feats[m], 1.0)), bits);
}

Tensor correspondence_loss(ModelBundle& bundle, std::span<const LabeledExample> batch, ForwardContext ctx) {
  if (batch.empty()) throw ContractError("correspondence loss over an empty batch");
  const auto feats = forward_features(bundle, batch, ctx);
  std::vector<int> bits;
  for (const auto& ex : batch) bits.push_back(ex.c);
  return correspondence_loss(bundle.correspond(feats), bits);
}

TotalLoss total_loss(ModelBundle& bundle, std::span<const LabeledExample> batch, const LossWeights& weights,
                     ForwardContext ctx) {
  if (batch.empty()) throw ContractError("total loss over an empty batch");
  weights.validate();
  const auto feats = forward_features(bundle, batch, ctx);

  std::vector<std::size_t> eligible;
  std::vector<std::size_t> labels;
  std::vector<int> domain_bits;
  std::vector<int> corr_bits;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    if (ex.d == 1 && ex.c == 1) {
      if (!ex.y) throw ContractError("corresponding source example without a label");
      eligible.push_back(i);
      labels.push_back(*ex.y);
    }
    domain_bits.push_back(ex.d);
    corr_bits.push_back(ex.c);
  }
  if (eligible.empty()) throw ContractError("batch has no corresponding source examples");

  std::vector<Tensor> logits;
  for (std::size_t m = 0; m < feats.size(); ++m)
    logits.push_back(bundle.classify(m, select_rows(feats[m], eligible)));
  const Tensor l_y = fused_classification_loss(logits, labels);

  std::vector<Tensor> l_d(feats.size());
  if (weights.lambda_d > 0.0)
    for (std::size_t m = 0; m < feats.size(); ++m)
      l_d[m] = domain_loss(bundle.discriminate(m, gradient_reversal(feats[m], 1.0)), domain_bits);
  Tensor l_c;
  if (weights.lambda_c > 0.0) l_c = correspondence_loss(bundle.correspond(feats), corr_bits);
  return combine_losses(l_y, l_d, l_c, weights);
}

}  // namespace mmsada
