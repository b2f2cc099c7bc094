#pragma once

// Test-time protocol: every test segment is scored on equidistant windows,
// the per-window softmax outputs are averaged and the argmax is compared to
// the label. Also: last-k averaging of per-epoch metrics, feature export and
// the per-epoch metrics CSV.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmsada/nets.hpp"
#include "mmsada/synthdata.hpp"

namespace mmsada {

inline constexpr std::size_t kDefaultTestWindows = 5;

/// Averages window probability vectors and returns the argmax (lowest index on ties).
std::size_t predict_from_windows(std::span<const std::vector<double>> window_probs);

/// Probability vectors, one per window of `segment`.
using SegmentPredictor =
    std::function<std::vector<std::vector<double>>(const ActionSegment& segment,
                                                   std::span<const WindowSample> windows)>;

struct Top1Counts {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

/// Generic form over any predictor; throws DataError on an empty split.
Top1Counts evaluate_top1(std::span<const ActionSegment> segments, const SegmentPredictor& predictor,
                         std::size_t window_len, std::size_t n_windows = kDefaultTestWindows);

struct EvaluationResult {
  Top1Counts fused;
  std::vector<Top1Counts> per_modality;
};

/// Scores a bundle in eval mode: fused softmax(sum_m logits_m) and each
/// modality's softmax(logits_m) alone.
EvaluationResult evaluate_bundle(const ModelBundle& bundle, std::span<const ActionSegment> segments,
                                 std::size_t n_windows = kDefaultTestWindows);

/// Top-1 accuracy in [0, 1]; `modality` empty means fused.
double evaluate_top1(const ModelBundle& bundle, std::span<const ActionSegment> segments,
                     std::optional<std::size_t> modality = std::nullopt, std::size_t n_windows = kDefaultTestWindows);

// ---- per-epoch metrics ----

struct MetricsRecord {
  std::string method;
  std::string source_domain;
  std::string target_domain;
  std::uint64_t seed = 0;
  double lambda_d = 0.0;
  double lambda_c = 0.0;
  std::string policy;
  std::size_t epoch = 0;
  double source_top1 = 0.0;
  double target_top1 = 0.0;
  double rgblike_top1 = 0.0;
  double flowlike_top1 = 0.0;
  double loss_y = 0.0;
  double loss_d1 = 0.0;
  double loss_d2 = 0.0;
  double loss_c = 0.0;
};

enum class MetricField { source_top1, target_top1, rgblike_top1, flowlike_top1, loss_y, loss_d1, loss_d2, loss_c };

double metric_value(const MetricsRecord& record, MetricField field);
MetricField parse_metric_field(const std::string& name);

/// Mean of `field` over the last k records; DataError when fewer exist, ParameterError when k is 0.
double average_last_k(std::span<const MetricsRecord> records, std::size_t k, MetricField field);

/// Columns: method, source_domain, target_domain, seed, lambda_d, lambda_c,
/// policy, epoch, source_top1, target_top1, rgblike_top1, flowlike_top1,
/// loss_y, loss_d1, loss_d2, loss_c.
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& record);
void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

// ---- feature export ----

/// One row per (segment, modality) of every split of every dataset: modality,
/// domain, split, class, then the eval-mode feature of the segment's first
/// test window. Tab separated with a header line.
void export_embeddings(const ModelBundle& bundle, std::span<const DomainDataset* const> datasets,
                       const std::filesystem::path& path);

}  // namespace mmsada
