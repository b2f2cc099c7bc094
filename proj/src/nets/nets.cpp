#include "mmsada/nets.hpp"

#include <cmath>
#include <string>

#include "mmsada/errors.hpp"

namespace mmsada {
namespace {

LinearLayer make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> init(-limit, limit);
  std::vector<double> w(in * out);
  for (auto& v : w) v = init(rng);
  return {Tensor::from_values({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

TwoLayerHead make_head(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  TwoLayerHead head;
  head.hidden = make_linear(in, hidden, rng);
  head.output = make_linear(hidden, out, rng);
  return head;
}

LinearLayer clone_linear(const LinearLayer& l) { return {l.weight.clone(), l.bias.clone()}; }

TwoLayerHead clone_head(const TwoLayerHead& h) { return {clone_linear(h.hidden), clone_linear(h.output)}; }

Tensor as_row(const Tensor& feature) {
  if (feature.rank() == 2) return feature;
  return reshape(feature, {1, feature.size()});
}

}  // namespace

void NetDims::validate() const {
  if (modalities == 0) throw ConfigError("model needs at least one modality");
  if (input_dims.size() != modalities)
    throw ConfigError("input_dims lists " + std::to_string(input_dims.size()) + " entries for " +
                      std::to_string(modalities) + " modalities");
  for (std::size_t d : input_dims)
    if (d == 0) throw ConfigError("input dimensions must be positive");
  if (window_len == 0 || encoder_hidden == 0 || feat_dim == 0 || head_hidden == 0)
    throw ConfigError("network widths must be positive");
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

ModelBundle::ModelBundle(NetDims dims, std::uint64_t seed) : dims_(std::move(dims)) {
  dims_.validate();
  std::mt19937_64 rng(seed);
  for (std::size_t m = 0; m < dims_.modalities; ++m) {
    FeatureExtractor f;
    f.input = make_linear(dims_.window_width(m), dims_.encoder_hidden, rng);
    f.bn_gamma = Tensor::full({dims_.encoder_hidden}, 1.0, true);
    f.bn_beta = Tensor::zeros({dims_.encoder_hidden}, true);
    if (dims_.batch_norm) f.bn = BatchNormState(dims_.encoder_hidden);
    f.output = make_linear(dims_.encoder_hidden, dims_.feat_dim, rng);
    extractors_.push_back(std::move(f));
  }
  for (std::size_t m = 0; m < dims_.modalities; ++m)
    classifiers_.push_back(make_linear(dims_.feat_dim, dims_.classes, rng));
  if (dims_.second_classifier)
    for (std::size_t m = 0; m < dims_.modalities; ++m)
      second_classifiers_.push_back(make_linear(dims_.feat_dim, dims_.classes, rng));
  for (std::size_t m = 0; m < dims_.modalities; ++m)
    discriminators_.push_back(make_head(dims_.feat_dim, dims_.head_hidden, 1, rng));
  correspondence_ = make_head(dims_.modalities * dims_.feat_dim, dims_.head_hidden, 2, rng);
}

void ModelBundle::check_modality(std::size_t m) const {
  if (m >= dims_.modalities)
    throw IndexError("modality " + std::to_string(m) + " out of range for " +
                     std::to_string(dims_.modalities) + " modalities");
}

void ModelBundle::check_features(const Tensor& features, const char* op) const {
  if (features.rank() != 2 || features.cols() != dims_.feat_dim)
    throw DimensionError(std::string(op) + ": expected features [B x " + std::to_string(dims_.feat_dim) +
                         "], got " + shape_string(features.shape()));
}

Tensor ModelBundle::features(std::size_t m, const Tensor& windows, Mode mode, std::mt19937_64& rng) {
  check_modality(m);
  if (windows.rank() != 2 || windows.cols() != dims_.window_width(m))
    throw DimensionError("feature_extract: modality " + std::to_string(m) + " expects windows [B x " +
                         std::to_string(dims_.window_width(m)) + "], got " + shape_string(windows.shape()));
  FeatureExtractor& f = extractors_[m];
  Tensor h = relu(f.input.forward(windows));
  if (dims_.batch_norm) h = scale_shift(batch_norm(h, f.bn, mode), f.bn_gamma, f.bn_beta);
  h = relu(f.output.forward(h));
  return dropout(h, dims_.dropout, mode, rng);
}

Tensor ModelBundle::features_eval(std::size_t m, const Tensor& windows) const {
  // Eval-mode batch norm and dropout read no mutable state.
  std::mt19937_64 unused(0);
  return const_cast<ModelBundle*>(this)->features(m, windows, Mode::eval, unused);
}

Tensor ModelBundle::pre_norm_activations(std::size_t m, const Tensor& windows) const {
  check_modality(m);
  const FeatureExtractor& f = extractors_[m];
  return relu(linear(windows.detach(), f.input.weight.detach(), f.input.bias.detach()));
}

LinearLayer& ModelBundle::classifier(std::size_t m, std::size_t head) {
  check_modality(m);
  if (head == 0) return classifiers_[m];
  if (head == 1 && !second_classifiers_.empty()) return second_classifiers_[m];
  throw IndexError("classifier head " + std::to_string(head) + " not present");
}

const LinearLayer& ModelBundle::classifier(std::size_t m, std::size_t head) const {
  return const_cast<ModelBundle*>(this)->classifier(m, head);
}

Tensor ModelBundle::classify(std::size_t m, const Tensor& features, std::size_t head) const {
  check_modality(m);
  check_features(features, "classify");
  return classifier(m, head).forward(features);
}

Tensor ModelBundle::discriminate(std::size_t m, const Tensor& features) const {
  check_modality(m);
  check_features(features, "discriminate");
  const TwoLayerHead& d = discriminators_[m];
  return sigmoid(d.output.forward(relu(d.hidden.forward(features))));
}

Tensor ModelBundle::correspond(std::span<const Tensor> features) const {
  if (features.size() != dims_.modalities)
    throw DimensionError("correspond: expected " + std::to_string(dims_.modalities) + " feature sets, got " +
                         std::to_string(features.size()));
  for (const auto& f : features) check_features(f, "correspond");
  const Tensor joint = concat_cols(features);
  return softmax(correspondence_.output.forward(relu(correspondence_.hidden.forward(joint))));
}

Tensor ModelBundle::feature_extract(std::size_t m, const WindowSample& window, Mode mode,
                                    std::mt19937_64& rng) {
  check_modality(m);
  if (window.modalities.size() != dims_.modalities || window.window_len != dims_.window_len)
    throw DimensionError("feature_extract: window does not match model dimensions");
  const auto single = std::span<const WindowSample>(&window, 1);
  return reshape(features(m, stack_windows(single, m), mode, rng), {dims_.feat_dim});
}

Tensor ModelBundle::classify_one(std::size_t m, const Tensor& feature) const {
  return reshape(classify(m, as_row(feature)), {dims_.classes});
}

double ModelBundle::discriminate_one(std::size_t m, const Tensor& feature) const {
  return discriminate(m, as_row(feature)).item();
}

Tensor ModelBundle::correspond_one(std::span<const Tensor> features) const {
  std::vector<Tensor> rows;
  for (const auto& f : features) rows.push_back(as_row(f));
  return reshape(correspond(rows), {2});
}

std::vector<NamedParameter> ModelBundle::parameters() const {
  std::vector<NamedParameter> out;
  auto add_linear = [&out](const std::string& prefix, const LinearLayer& l) {
    out.push_back({prefix + ".weight", l.weight});
    out.push_back({prefix + ".bias", l.bias});
  };
  for (std::size_t m = 0; m < extractors_.size(); ++m) {
    const std::string p = "F" + std::to_string(m);
    add_linear(p + ".input", extractors_[m].input);
    if (dims_.batch_norm) {
      out.push_back({p + ".bn.gamma", extractors_[m].bn_gamma});
      out.push_back({p + ".bn.beta", extractors_[m].bn_beta});
    }
    add_linear(p + ".output", extractors_[m].output);
  }
  for (std::size_t m = 0; m < classifiers_.size(); ++m) add_linear("G" + std::to_string(m), classifiers_[m]);
  for (std::size_t m = 0; m < second_classifiers_.size(); ++m)
    add_linear("G2_" + std::to_string(m), second_classifiers_[m]);
  for (std::size_t m = 0; m < discriminators_.size(); ++m) {
    add_linear("D" + std::to_string(m) + ".hidden", discriminators_[m].hidden);
    add_linear("D" + std::to_string(m) + ".output", discriminators_[m].output);
  }
  add_linear("C.hidden", correspondence_.hidden);
  add_linear("C.output", correspondence_.output);
  return out;
}

std::vector<std::pair<std::string, BatchNormState*>> ModelBundle::batch_norm_states() {
  std::vector<std::pair<std::string, BatchNormState*>> out;
  if (!dims_.batch_norm) return out;
  for (std::size_t m = 0; m < extractors_.size(); ++m)
    out.emplace_back("F" + std::to_string(m) + ".bn", &extractors_[m].bn);
  return out;
}

std::vector<std::pair<std::string, const BatchNormState*>> ModelBundle::batch_norm_states() const {
  std::vector<std::pair<std::string, const BatchNormState*>> out;
  if (!dims_.batch_norm) return out;
  for (std::size_t m = 0; m < extractors_.size(); ++m)
    out.emplace_back("F" + std::to_string(m) + ".bn", &extractors_[m].bn);
  return out;
}

void ModelBundle::zero_grad() const {
  for (const auto& p : parameters()) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

ModelBundle ModelBundle::clone() const {
  ModelBundle copy;
  copy.dims_ = dims_;
  for (const auto& f : extractors_)
    copy.extractors_.push_back(
        {clone_linear(f.input), f.bn_gamma.clone(), f.bn_beta.clone(), f.bn, clone_linear(f.output)});
  for (const auto& g : classifiers_) copy.classifiers_.push_back(clone_linear(g));
  for (const auto& g : second_classifiers_) copy.second_classifiers_.push_back(clone_linear(g));
  for (const auto& d : discriminators_) copy.discriminators_.push_back(clone_head(d));
  copy.correspondence_ = clone_head(correspondence_);
  return copy;
}

Tensor stack_windows(std::span<const WindowSample> windows, std::size_t m) {
  if (windows.empty()) throw DimensionError("stack_windows: no windows");
  const std::size_t width = windows[0].modalities.at(m).size();
  std::vector<double> flat;
  flat.reserve(windows.size() * width);
  for (const auto& w : windows) {
    const auto& v = w.modalities.at(m);
    if (v.size() != width) throw DimensionError("stack_windows: ragged windows for modality " + std::to_string(m));
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return Tensor::from_values({windows.size(), width}, std::move(flat));
}

}  // namespace mmsada
