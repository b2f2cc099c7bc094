#pragma once

// The four network roles: per-modality feature extractors, per-modality
// classifiers, per-modality domain discriminators and the shared
// correspondence head.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmsada/ops.hpp"
#include "mmsada/sample.hpp"
#include "mmsada/tensor.hpp"

namespace mmsada {

struct NetDims {
  std::size_t modalities = 2;
  std::vector<std::size_t> input_dims{12, 12};
  std::size_t window_len = 16;
  std::size_t encoder_hidden = 128;
  // The I3D backbone in the original setting pools to 1024 features.
  std::size_t feat_dim = 64;
  std::size_t head_hidden = 100;
  std::size_t classes = 8;
  double dropout = 0.5;
  // Second classifier per modality, used by the classifier-discrepancy baseline.
  bool second_classifier = false;
  bool batch_norm = true;

  std::size_t window_width(std::size_t m) const { return window_len * input_dims.at(m); }
  void validate() const;
};

struct LinearLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
};

struct FeatureExtractor {
  LinearLayer input;
  Tensor bn_gamma;
  Tensor bn_beta;
  BatchNormState bn;
  LinearLayer output;
};

struct TwoLayerHead {
  LinearLayer hidden;
  LinearLayer output;
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

class ModelBundle {
 public:
  ModelBundle(NetDims dims, std::uint64_t seed);

  const NetDims& dims() const { return dims_; }
  std::size_t modalities() const { return dims_.modalities; }

  /// Batched F_m: windows [B x window_len*input_dim_m] -> features [B x feat_dim].
  /// Train mode updates batch-norm running statistics and applies dropout.
  Tensor features(std::size_t m, const Tensor& windows, Mode mode, std::mt19937_64& rng);
  /// Eval-mode features; never touches batch-norm state.
  Tensor features_eval(std::size_t m, const Tensor& windows) const;
  /// Encoder activations entering the batch-norm layer of F_m (no graph needed).
  Tensor pre_norm_activations(std::size_t m, const Tensor& windows) const;

  /// Raw logits of G_m (head 0) or G'_m (head 1): [B x K].
  Tensor classify(std::size_t m, const Tensor& features, std::size_t head = 0) const;
  /// D_m source probability: [B x 1].
  Tensor discriminate(std::size_t m, const Tensor& features) const;
  /// C over concatenated modality features: [B x 2], column 1 = "corresponds".
  Tensor correspond(std::span<const Tensor> features) const;

  /// Single-window forms.
  Tensor feature_extract(std::size_t m, const WindowSample& window, Mode mode, std::mt19937_64& rng);
  Tensor classify_one(std::size_t m, const Tensor& feature) const;
  double discriminate_one(std::size_t m, const Tensor& feature) const;
  Tensor correspond_one(std::span<const Tensor> features) const;

  std::vector<NamedParameter> parameters() const;
  std::vector<std::pair<std::string, BatchNormState*>> batch_norm_states();
  std::vector<std::pair<std::string, const BatchNormState*>> batch_norm_states() const;
  void zero_grad() const;

  /// Deep copy: fresh parameter tensors with identical values.
  ModelBundle clone() const;

  FeatureExtractor& extractor(std::size_t m) { return extractors_.at(m); }
  const FeatureExtractor& extractor(std::size_t m) const { return extractors_.at(m); }
  LinearLayer& classifier(std::size_t m, std::size_t head = 0);
  const LinearLayer& classifier(std::size_t m, std::size_t head = 0) const;
  TwoLayerHead& discriminator(std::size_t m) { return discriminators_.at(m); }
  const TwoLayerHead& discriminator(std::size_t m) const { return discriminators_.at(m); }
  TwoLayerHead& correspondence_head() { return correspondence_; }
  const TwoLayerHead& correspondence_head() const { return correspondence_; }

 private:
  ModelBundle() = default;
  void check_modality(std::size_t m) const;
  void check_features(const Tensor& features, const char* op) const;

  NetDims dims_;
  std::vector<FeatureExtractor> extractors_;
  std::vector<LinearLayer> classifiers_;
  std::vector<LinearLayer> second_classifiers_;
  std::vector<TwoLayerHead> discriminators_;
  TwoLayerHead correspondence_;

  friend ModelBundle load_checkpoint(const std::filesystem::path& path);
};

/// Stacks per-sample windows of modality m into a [B x window_len*input_dim] matrix.
Tensor stack_windows(std::span<const WindowSample> windows, std::size_t m);

// Checkpoint file (text, one record per line group):
//   mmsada-checkpoint 1
//   dims <modalities> <window_len> <encoder_hidden> <feat_dim> <head_hidden> <classes> <dropout>
//        <second_classifier> <batch_norm>
//   input_dims <d_1> ... <d_M>
//   param <name> <rank> <extent...>
//   <values, space separated, %.17g>
//   batchnorm <name> <channels> <momentum> <epsilon>
//   <running_mean values>
//   <running_var values>
//   end
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace mmsada
