#include "mmsada/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mmsada/errors.hpp"
#include "mmsada/rng.hpp"

namespace mmsada {
namespace {

struct ClassPrototype {
  std::vector<double> mean;                  // latent
  std::vector<std::vector<double>> sin_amp;  // [harmonic][latent]
  std::vector<std::vector<double>> cos_amp;
};

struct World {
  std::vector<ClassPrototype> classes;
  std::vector<double> appearance_mix;  // input_dims[0] x latent
  std::vector<double> motion_mix;      // input_dims[1] x latent
};

World make_world(std::size_t classes, std::uint64_t prototype_seed, const GeneratorParams& p) {
  auto rng = make_stream(prototype_seed, {kStreamPrototypes});
  std::normal_distribution<double> gauss(0.0, 1.0);
  World w;
  for (std::size_t k = 0; k < classes; ++k) {
    ClassPrototype c;
    c.mean.resize(p.latent_dim);
    for (auto& v : c.mean) v = p.class_mean_scale * gauss(rng);
    for (std::size_t h = 1; h <= p.harmonics; ++h) {
      std::vector<double> s(p.latent_dim), co(p.latent_dim);
      const double amp = p.class_motion_scale / static_cast<double>(h);
      for (auto& v : s) v = amp * gauss(rng);
      for (auto& v : co) v = amp * gauss(rng);
      c.sin_amp.push_back(std::move(s));
      c.cos_amp.push_back(std::move(co));
    }
    w.classes.push_back(std::move(c));
  }
  const double mix_scale = 1.0 / std::sqrt(static_cast<double>(p.latent_dim));
  w.appearance_mix.resize(p.input_dims[0] * p.latent_dim);
  for (auto& v : w.appearance_mix) v = mix_scale * gauss(rng);
  w.motion_mix.resize(p.input_dims[1] * p.latent_dim);
  for (auto& v : w.motion_mix) v = mix_scale * gauss(rng);
  if (p.disjoint_views) {
    const std::size_t half = p.latent_dim / 2;
    for (std::size_t i = 0; i < p.input_dims[0]; ++i)
      for (std::size_t l = half; l < p.latent_dim; ++l) w.appearance_mix[i * p.latent_dim + l] = 0.0;
    for (std::size_t i = 0; i < p.input_dims[1]; ++i)
      for (std::size_t l = 0; l < half; ++l) w.motion_mix[i * p.latent_dim + l] = 0.0;
  }
  return w;
}

// Latent state and its phase derivative at phase tau.
void trajectory(const ClassPrototype& c, double tau, std::vector<double>& z, std::vector<double>& dz) {
  const std::size_t L = c.mean.size();
  z = c.mean;
  dz.assign(L, 0.0);
  for (std::size_t h = 0; h < c.sin_amp.size(); ++h) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(h + 1);
    const double s = std::sin(w * tau);
    const double co = std::cos(w * tau);
    for (std::size_t l = 0; l < L; ++l) {
      z[l] += c.sin_amp[h][l] * s + c.cos_amp[h][l] * co;
      dz[l] += w * (c.sin_amp[h][l] * co - c.cos_amp[h][l] * s);
    }
  }
}

std::vector<double> resolve_prior(const SyntheticDomainSpec& spec) {
  if (!spec.class_prior.empty()) return spec.class_prior;
  auto rng = make_stream(spec.seed, {kStreamDomain, 1});
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<double> prior(spec.class_count);
  double total = 0.0;
  for (auto& p : prior) total += (p = gamma(rng));
  for (auto& p : prior) p /= total;
  return prior;
}

AppearanceShift resolve_appearance(const SyntheticDomainSpec& spec, std::size_t dim) {
  if (!spec.appearance.rotation.empty()) return spec.appearance;
  AppearanceShift shift;
  shift.rotation = random_orthogonal(dim, spec.appearance_strength, derive_seed(spec.seed, {kStreamDomain, 2}));
  auto rng = make_stream(spec.seed, {kStreamDomain, 3});
  std::normal_distribution<double> gauss(0.0, spec.appearance_bias);
  shift.bias.resize(dim);
  for (auto& b : shift.bias) b = spec.appearance_bias > 0.0 ? gauss(rng) : 0.0;
  return shift;
}

void validate_spec(const SyntheticDomainSpec& spec, const GeneratorParams& params) {
  if (spec.class_count < 2) throw ConfigError("domain " + spec.domain_id + ": need at least 2 classes");
  if (spec.train_segments == 0 || spec.test_segments == 0)
    throw ConfigError("domain " + spec.domain_id + ": segment counts must be positive");
  if (spec.min_length == 0 || spec.min_length > spec.max_length)
    throw ConfigError("domain " + spec.domain_id + ": invalid segment length range");
  if (!spec.class_prior.empty()) {
    if (spec.class_prior.size() != spec.class_count)
      throw ConfigError("domain " + spec.domain_id + ": class_prior has wrong length");
    double total = 0.0;
    for (double p : spec.class_prior) {
      if (p < 0.0) throw ConfigError("domain " + spec.domain_id + ": negative class prior");
      total += p;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ConfigError("domain " + spec.domain_id + ": class_prior must sum to 1");
  }
  if (spec.motion_noise_scale < 0.0 || spec.appearance_bias < 0.0 || spec.appearance_strength < 0.0)
    throw ConfigError("domain " + spec.domain_id + ": shift magnitudes must be non-negative");
  const std::size_t dim = params.input_dims[0];
  if (!spec.appearance.rotation.empty() &&
      (spec.appearance.rotation.size() != dim * dim || spec.appearance.bias.size() != dim))
    throw ConfigError("domain " + spec.domain_id + ": appearance transform has wrong size");
}

ActionSegment render_segment(std::size_t id, const World& world, const DomainDataset& ds,
                             const GeneratorParams& p, std::size_t label, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length_dist(ds.spec.min_length, ds.spec.max_length);
  std::uniform_real_distribution<double> pace_dist(-p.pace_jitter, p.pace_jitter);
  const std::size_t T = length_dist(rng);
  const double pace = pace_dist(rng);
  std::vector<double> style(p.latent_dim);
  for (auto& s : style) s = p.style_scale * gauss(rng);

  const std::size_t d0 = p.input_dims[0];
  const std::size_t d1 = p.input_dims[1];
  const std::size_t L = p.latent_dim;
  std::vector<double> rgb(T * d0), flow(T * d1);
  std::vector<double> z, dz, view(d0);
  const ClassPrototype& proto = world.classes[label];
  const double flow_noise = std::sqrt(p.frame_noise * p.frame_noise +
                                      ds.spec.motion_noise_scale * ds.spec.motion_noise_scale);
  for (std::size_t t = 0; t < T; ++t) {
    const double u = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
    // Monotone warp of the action's progress: tau' = 1 + pace * pi * cos(pi u) > 0.
    const double tau = u + pace * std::sin(std::numbers::pi * u);
    const double rate = 1.0 + pace * std::numbers::pi * std::cos(std::numbers::pi * u);
    trajectory(proto, tau, z, dz);
    for (std::size_t i = 0; i < d0; ++i) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += world.appearance_mix[i * L + l] * (z[l] + style[l]);
      view[i] = s;
    }
    for (std::size_t i = 0; i < d0; ++i) {
      double s = ds.appearance.bias[i];
      for (std::size_t j = 0; j < d0; ++j) s += ds.appearance.rotation[i * d0 + j] * view[j];
      rgb[t * d0 + i] = s + p.frame_noise * gauss(rng);
    }
    for (std::size_t i = 0; i < d1; ++i) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += world.motion_mix[i * L + l] * dz[l];
      flow[t * d1 + i] = p.motion_gain / (2.0 * std::numbers::pi) * rate * s + flow_noise * gauss(rng);
    }
  }
  return ActionSegment(id, ds.spec.domain_id, label, T, {std::move(rgb), std::move(flow)}, ds.audit);
}

}  // namespace

ActionSegment::ActionSegment(std::size_t id, std::string domain_id, std::size_t label, std::size_t length,
                             std::vector<std::vector<double>> streams, std::shared_ptr<LabelAudit> audit)
    : id_(id),
      domain_id_(std::move(domain_id)),
      label_(label),
      length_(length),
      streams_(std::move(streams)),
      audit_(std::move(audit)) {
  if (length_ == 0) throw DataError("segment with zero length");
  for (const auto& s : streams_)
    if (s.size() % length_ != 0) throw DataError("segment stream size is not a multiple of its length");
}

std::size_t ActionSegment::label(LabelUse use) const {
  if (audit_) {
    if (use == LabelUse::training)
      audit_->training_reads.fetch_add(1, std::memory_order_relaxed);
    else
      audit_->evaluation_reads.fetch_add(1, std::memory_order_relaxed);
  }
  return label_;
}

std::vector<double> random_orthogonal(std::size_t dim, double strength, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Columns of I + strength * G, orthonormalized by two passes of modified Gram-Schmidt.
  std::vector<std::vector<double>> cols(dim, std::vector<double>(dim));
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) cols[j][i] = (i == j ? 1.0 : 0.0) + strength * gauss(rng);
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t j = 0; j < dim; ++j) {
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < dim; ++i) d += cols[j][i] * cols[k][i];
        for (std::size_t i = 0; i < dim; ++i) cols[j][i] -= d * cols[k][i];
      }
      double n = 0.0;
      for (double v : cols[j]) n += v * v;
      n = std::sqrt(n);
      if (n < 1e-12) throw NumericError("random_orthogonal: degenerate column");
      for (auto& v : cols[j]) v /= n;
    }
  std::vector<double> q(dim * dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) q[i * dim + j] = cols[j][i];
  return q;
}

std::vector<SyntheticDomainSpec> default_domain_specs() {
  std::vector<SyntheticDomainSpec> specs(3);
  const char* ids[] = {"D1", "D2", "D3"};
  const double strength[] = {0.7, 0.7, 0.7};
  const double bias[] = {1.5, 1.5, 1.5};
  const double motion_noise[] = {0.1, 0.2, 0.15};
  for (std::size_t i = 0; i < 3; ++i) {
    specs[i].domain_id = ids[i];
    specs[i].appearance_strength = strength[i];
    specs[i].appearance_bias = bias[i];
    specs[i].motion_noise_scale = motion_noise[i];
    specs[i].seed = 1000 + 17 * i;
  }
  return specs;
}

std::vector<DomainDataset> generate_domains(std::span<const SyntheticDomainSpec> specs, std::uint64_t prototype_seed,
                                            const GeneratorParams& params) {
  if (specs.size() < 2) throw ConfigError("need at least 2 domain specs, got " + std::to_string(specs.size()));
  if (params.input_dims.size() != 2) throw ConfigError("the generator renders exactly 2 modalities");
  if (params.disjoint_views && params.latent_dim < 2) throw ConfigError("disjoint views need latent_dim >= 2");
  const std::size_t classes = specs[0].class_count;
  for (const auto& s : specs) {
    if (s.class_count != classes)
      throw ConfigError("domain " + s.domain_id + " has " + std::to_string(s.class_count) + " classes, expected " +
                        std::to_string(classes));
    validate_spec(s, params);
  }
  const World world = make_world(classes, prototype_seed, params);

  std::vector<DomainDataset> out;
  for (const auto& spec : specs) {
    DomainDataset ds;
    ds.spec = spec;
    ds.class_prior = resolve_prior(spec);
    ds.appearance = resolve_appearance(spec, params.input_dims[0]);
    ds.audit = std::make_shared<LabelAudit>();
    auto rng = make_stream(spec.seed, {kStreamSegments});
    std::discrete_distribution<std::size_t> class_dist(ds.class_prior.begin(), ds.class_prior.end());
    const std::size_t total = spec.train_segments + spec.test_segments;
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t y = class_dist(rng);
      auto seg = render_segment(i, world, ds, params, y, rng);
      (i < spec.train_segments ? ds.train : ds.test).push_back(std::move(seg));
    }
    out.push_back(std::move(ds));
  }
  return out;
}

std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len, Mode mode,
                                       std::size_t n_test_windows, std::mt19937_64& rng) {
  if (length < window_len)
    throw DataError("segment of length " + std::to_string(length) + " is shorter than the window (" +
                    std::to_string(window_len) + ")");
  const std::size_t span = length - window_len;
  if (mode == Mode::train) {
    std::uniform_int_distribution<std::size_t> pick(0, span);
    return {pick(rng)};
  }
  if (n_test_windows == 0) throw ParameterError("need at least one test window");
  if (n_test_windows == 1) return {static_cast<std::size_t>(std::lround(static_cast<double>(span) / 2.0))};
  std::vector<std::size_t> starts(n_test_windows);
  for (std::size_t i = 0; i < n_test_windows; ++i)
    starts[i] = static_cast<std::size_t>(
        std::lround(static_cast<double>(i) * static_cast<double>(span) / static_cast<double>(n_test_windows - 1)));
  return starts;
}

WindowSample extract_window(const ActionSegment& segment, std::span<const std::size_t> starts,
                            std::size_t window_len) {
  if (starts.size() != segment.modalities())
    throw DimensionError("extract_window: need one start per modality");
  WindowSample w;
  w.window_len = window_len;
  for (std::size_t m = 0; m < segment.modalities(); ++m) {
    if (starts[m] + window_len > segment.length())
      throw DataError("window [" + std::to_string(starts[m]) + ", " + std::to_string(starts[m] + window_len) +
                      ") exceeds segment length " + std::to_string(segment.length()));
    const std::size_t dim = segment.input_dim(m);
    const auto s = segment.stream(m);
    w.modalities.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(starts[m] * dim),
                              s.begin() + static_cast<std::ptrdiff_t>((starts[m] + window_len) * dim));
  }
  return w;
}

std::vector<WindowSample> sample_window(const ActionSegment& segment, Mode mode, std::size_t window_len,
                                        std::size_t n_test_windows, std::mt19937_64& rng) {
  std::vector<WindowSample> out;
  for (std::size_t start : window_starts(segment.length(), window_len, mode, n_test_windows, rng)) {
    const std::vector<std::size_t> starts(segment.modalities(), start);
    out.push_back(extract_window(segment, starts, window_len));
  }
  return out;
}

PairedSample make_pair(const DomainDataset& dataset, CorrespondencePolicy policy, int c, std::size_t window_len,
                       NegativeRule negatives, std::mt19937_64& rng) {
  const auto& segs = dataset.train;
  if (segs.empty()) throw DataError("domain " + dataset.spec.domain_id + " has no training segments");
  std::uniform_int_distribution<std::size_t> pick(0, segs.size() - 1);
  PairedSample out;
  out.c = c;
  const std::size_t modalities = segs[0].modalities();
  if (c == 1) {
    const std::size_t s = pick(rng);
    out.segment_index.assign(modalities, s);
    if (policy == CorrespondencePolicy::sync) {
      out.start.assign(modalities, window_starts(segs[s].length(), window_len, Mode::train, 1, rng)[0]);
    } else {
      for (std::size_t m = 0; m < modalities; ++m)
        out.start.push_back(window_starts(segs[s].length(), window_len, Mode::train, 1, rng)[0]);
    }
  } else {
    if (segs.size() < 2) throw DataError("negatives need at least 2 segments");
    const std::size_t first = pick(rng);
    std::size_t second = first;
    // Bounded rejection sampling; a domain with a single populated class cannot supply negatives.
    constexpr int kMaxTries = 10000;
    int tries = 0;
    const std::size_t first_label =
        negatives == NegativeRule::distinct_class ? segs[first].label(LabelUse::training) : 0;
    for (; tries < kMaxTries; ++tries) {
      second = pick(rng);
      if (second == first) continue;
      if (negatives == NegativeRule::distinct_segment || segs[second].label(LabelUse::training) != first_label) break;
    }
    if (tries == kMaxTries)
      throw DataError("domain " + dataset.spec.domain_id + ": cannot find a segment of a different class");
    out.segment_index.assign(modalities, second);
    out.segment_index[0] = first;
    for (std::size_t m = 0; m < modalities; ++m)
      out.start.push_back(window_starts(segs[out.segment_index[m]].length(), window_len, Mode::train, 1, rng)[0]);
  }
  out.window.window_len = window_len;
  for (std::size_t m = 0; m < modalities; ++m) {
    const auto& seg = segs[out.segment_index[m]];
    const std::size_t dim = seg.input_dim(m);
    const auto s = seg.stream(m);
    out.window.modalities.emplace_back(s.begin() + static_cast<std::ptrdiff_t>(out.start[m] * dim),
                                       s.begin() + static_cast<std::ptrdiff_t>((out.start[m] + window_len) * dim));
  }
  return out;
}

std::vector<std::size_t> TrainingBatch::classification_eligible() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (examples[i].d == 1 && examples[i].c == 1) idx.push_back(i);
  return idx;
}

TrainingBatch compose_batch(const DomainDataset& source, const DomainDataset& target, const BatchOptions& options,
                            std::mt19937_64& rng) {
  if (options.batch_size == 0 || options.batch_size % 4 != 0)
    throw ConfigError("batch size must be a positive multiple of 4, got " + std::to_string(options.batch_size));
  const std::size_t quarter = options.batch_size / 4;
  TrainingBatch batch;
  batch.examples.reserve(options.batch_size);

  auto fill = [&](const DomainDataset& ds, int d, bool labelled) {
    const NegativeRule negatives = labelled ? NegativeRule::distinct_class : NegativeRule::distinct_segment;
    for (int c : {1, 0})
      for (std::size_t i = 0; i < quarter; ++i) {
        PairedSample pair = make_pair(ds, options.policy, c, options.window_len, negatives, rng);
        LabeledExample ex;
        ex.window = std::move(pair.window);
        ex.d = d;
        ex.c = c;
        if (labelled) ex.y = ds.train[pair.segment_index[0]].label(LabelUse::training);
        batch.examples.push_back(std::move(ex));
      }
  };
  fill(source, 1, true);
  fill(target, 0, options.label_target);

  batch.composition = {2 * quarter, 2 * quarter, 2 * quarter, 2 * quarter};
  return batch;
}

std::string to_string(CorrespondencePolicy policy) {
  return policy == CorrespondencePolicy::sync ? "sync" : "seg_corr";
}

CorrespondencePolicy parse_policy(const std::string& text) {
  if (text == "sync") return CorrespondencePolicy::sync;
  if (text == "seg_corr" || text == "seg-corr") return CorrespondencePolicy::seg_corr;
  throw ConfigError("unknown correspondence policy '" + text + "' (expected sync or seg_corr)");
}

}  // namespace mmsada
