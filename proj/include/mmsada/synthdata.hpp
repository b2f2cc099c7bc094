#pragma once

// Synthetic multi-modal action segments with a controllable domain shift.
//
// Each class owns a latent trajectory shared by every domain. A segment walks
// that trajectory at a jittered pace, adds a per-segment style offset and
// renders two streams:
//   modality 0 ("rgb-like")  - linear view of the latent state, then the
//                              domain's orthogonal transform and bias;
//   modality 1 ("flow-like") - linear view of the latent velocity, which
//                              cancels the static style offset, plus a small
//                              domain-specific noise.
// With disjoint views the two streams read separate halves of the latent
// state, so one stream cannot be predicted from the other frame by frame.
// The shift therefore hits modality 0 hard and modality 1 only mildly.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmsada/sample.hpp"
#include "mmsada/tensor.hpp"

namespace mmsada {

/// Counts label reads by purpose. UDA training must never read a target label.
struct LabelAudit {
  std::atomic<std::size_t> training_reads{0};
  std::atomic<std::size_t> evaluation_reads{0};
};

enum class LabelUse { training, evaluation };

class ActionSegment {
 public:
  ActionSegment(std::size_t id, std::string domain_id, std::size_t label, std::size_t length,
                std::vector<std::vector<double>> streams, std::shared_ptr<LabelAudit> audit);

  std::size_t id() const { return id_; }
  const std::string& domain_id() const { return domain_id_; }
  std::size_t length() const { return length_; }
  std::size_t modalities() const { return streams_.size(); }
  std::size_t input_dim(std::size_t m) const { return streams_.at(m).size() / length_; }
  /// Row-major length x input_dim matrix of modality m.
  std::span<const double> stream(std::size_t m) const { return streams_.at(m); }

  /// Every label read goes through here and is counted on the domain's audit.
  std::size_t label(LabelUse use) const;

 private:
  std::size_t id_;
  std::string domain_id_;
  std::size_t label_;
  std::size_t length_;
  std::vector<std::vector<double>> streams_;
  std::shared_ptr<LabelAudit> audit_;
};

struct AppearanceShift {
  std::vector<double> rotation;  // dim x dim, orthogonal
  std::vector<double> bias;      // dim
};

struct SyntheticDomainSpec {
  std::string domain_id;
  std::size_t class_count = 8;
  // Empty: drawn from a symmetric Dirichlet (concentration 1) with `seed`.
  std::vector<double> class_prior;
  // Rotation strength in [0, 1] and bias scale of the modality-0 transform.
  double appearance_strength = 0.0;
  double appearance_bias = 0.0;
  // Explicit transform; overrides the two knobs above when non-empty.
  AppearanceShift appearance;
  double motion_noise_scale = 0.0;
  std::size_t train_segments = 600;
  std::size_t test_segments = 150;
  std::size_t min_length = 40;
  std::size_t max_length = 120;
  std::uint64_t seed = 1;
};

/// Parameters of the latent world shared by all domains.
struct GeneratorParams {
  std::vector<std::size_t> input_dims{12, 12};
  std::size_t latent_dim = 6;
  std::size_t harmonics = 2;
  double class_mean_scale = 1.0;
  double class_motion_scale = 1.0;
  double style_scale = 0.6;
  double pace_jitter = 0.25;
  double frame_noise = 0.35;
  double motion_gain = 6.0;
  // Appearance reads only the first half of the latent state, motion only the second.
  bool disjoint_views = true;
};

struct DomainDataset {
  SyntheticDomainSpec spec;
  std::vector<double> class_prior;  // resolved prior
  AppearanceShift appearance;       // resolved transform
  std::vector<ActionSegment> train;
  std::vector<ActionSegment> test;
  std::shared_ptr<LabelAudit> audit;

  std::size_t classes() const { return spec.class_count; }
};

/// Default three-domain benchmark (D1, D2, D3).
std::vector<SyntheticDomainSpec> default_domain_specs();

/// Orthonormalized (I + strength * G) for a seeded Gaussian G; identity at 0.
std::vector<double> random_orthogonal(std::size_t dim, double strength, std::uint64_t seed);

std::vector<DomainDataset> generate_domains(std::span<const SyntheticDomainSpec> specs,
                                            std::uint64_t prototype_seed, const GeneratorParams& params = {});

// ---- windows ----

/// Window start positions: one uniform draw in train mode; in test mode
/// `n_test_windows` equidistant starts round(i (T - w) / (n - 1)).
std::vector<std::size_t> window_starts(std::size_t length, std::size_t window_len, Mode mode,
                                       std::size_t n_test_windows, std::mt19937_64& rng);

/// Copies one window; `starts` gives the start frame per modality.
WindowSample extract_window(const ActionSegment& segment, std::span<const std::size_t> starts,
                            std::size_t window_len);

std::vector<WindowSample> sample_window(const ActionSegment& segment, Mode mode, std::size_t window_len,
                                        std::size_t n_test_windows, std::mt19937_64& rng);

// ---- correspondence pairs and batches ----

enum class CorrespondencePolicy { sync, seg_corr };

/// How negatives pick their second segment. distinct_class reads training
/// labels and is only usable on labelled data; distinct_segment is label-blind.
enum class NegativeRule { distinct_class, distinct_segment };

struct PairedSample {
  WindowSample window;
  int c = 1;
  std::vector<std::size_t> segment_index;  // into the dataset's train split, per modality
  std::vector<std::size_t> start;          // per modality
};

PairedSample make_pair(const DomainDataset& dataset, CorrespondencePolicy policy, int c, std::size_t window_len,
                       NegativeRule negatives, std::mt19937_64& rng);

struct BatchComposition {
  std::size_t n_source = 0;
  std::size_t n_target = 0;
  std::size_t n_corresponding = 0;
  std::size_t n_noncorresponding = 0;
};

struct TrainingBatch {
  std::vector<LabeledExample> examples;
  BatchComposition composition;

  std::vector<std::size_t> classification_eligible() const;
};

struct BatchOptions {
  std::size_t batch_size = 128;
  std::size_t window_len = 16;
  CorrespondencePolicy policy = CorrespondencePolicy::seg_corr;
  // Target labels are only readable for the supervised-target upper bound.
  bool label_target = false;
};

/// B/2 source then B/2 target; each half is B/4 corresponding followed by B/4
/// non-corresponding. Only corresponding source examples carry class labels
/// used for classification (non-corresponding source examples carry the
/// modality-0 segment's class).
TrainingBatch compose_batch(const DomainDataset& source, const DomainDataset& target, const BatchOptions& options,
                            std::mt19937_64& rng);

std::string to_string(CorrespondencePolicy policy);
CorrespondencePolicy parse_policy(const std::string& text);

// ---- dataset files ----
//   mmsada-dataset 1
//   domain <id>
//   classes <K>
//   dims <d_0> ... <d_{M-1}>
//   counts <n_train> <n_test>
//   segment <id> <train|test> <label> <length>
//   <length * d_m values per modality line, %.17g>
//   ...
//   end
void save_dataset(const DomainDataset& dataset, const std::filesystem::path& path);
DomainDataset load_dataset(const std::filesystem::path& path);

}  // namespace mmsada
