#include "mmsada/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmsada/atomic_file.hpp"
#include "mmsada/errors.hpp"
#include "mmsada/ops.hpp"

namespace mmsada {

namespace {

constexpr std::size_t kEvalChunk = 512;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<WindowSample> test_windows(const ActionSegment& segment, std::size_t window_len, std::size_t n_windows) {
  std::mt19937_64 unused(0);
  return sample_window(segment, Mode::eval, window_len, n_windows, unused);
}

std::vector<double> row_softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

}  // namespace

std::size_t predict_from_windows(std::span<const std::vector<double>> window_probs) {
  if (window_probs.empty()) throw DataError("no window predictions to average");
  const std::size_t k = window_probs[0].size();
  if (k == 0) throw DimensionError("empty probability vector");
  std::vector<double> mean(k, 0.0);
  for (const auto& p : window_probs) {
    if (p.size() != k) throw DimensionError("window predictions disagree on class count");
    for (std::size_t i = 0; i < k; ++i) mean[i] += p[i];
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (mean[i] > mean[best]) best = i;
  return best;
}

Top1Counts evaluate_top1(std::span<const ActionSegment> segments, const SegmentPredictor& predictor,
                         std::size_t window_len, std::size_t n_windows) {
  if (segments.empty()) throw DataError("evaluation over an empty split");
  Top1Counts counts;
  for (const auto& seg : segments) {
    const auto windows = test_windows(seg, window_len, n_windows);
    const auto probs = predictor(seg, windows);
    if (probs.size() != windows.size()) throw ContractError("predictor returned the wrong number of windows");
    counts.correct += predict_from_windows(probs) == seg.label(LabelUse::evaluation) ? 1 : 0;
    ++counts.total;
  }
  return counts;
}

EvaluationResult evaluate_bundle(const ModelBundle& bundle, std::span<const ActionSegment> segments,
                                 std::size_t n_windows) {
  if (segments.empty()) throw DataError("evaluation over an empty split");
  const std::size_t M = bundle.modalities();
  const std::size_t K = bundle.dims().classes;
  const std::size_t w = bundle.dims().window_len;

  // Flatten all windows, remembering which segment each belongs to.
  std::vector<WindowSample> windows;
  std::vector<std::size_t> owner;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (auto& win : test_windows(segments[s], w, n_windows)) {
      windows.push_back(std::move(win));
      owner.push_back(s);
    }
  }

  // probs[h][window] for h = 0 (fused), 1..M (single modality).
  std::vector<std::vector<std::vector<double>>> probs(M + 1, std::vector<std::vector<double>>(windows.size()));
  for (std::size_t begin = 0; begin < windows.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(windows.size(), begin + kEvalChunk);
    const std::span<const WindowSample> chunk(windows.data() + begin, end - begin);
    std::vector<Tensor> logits;
    for (std::size_t m = 0; m < M; ++m)
      logits.push_back(bundle.classify(m, bundle.features_eval(m, stack_windows(chunk, m))).detach());
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      std::vector<double> summed(K, 0.0);
      for (std::size_t m = 0; m < M; ++m) {
        const auto row = logits[m].values().subspan(r * K, K);
        for (std::size_t k = 0; k < K; ++k) summed[k] += row[k];
        probs[m + 1][begin + r] = row_softmax(row);
      }
      probs[0][begin + r] = row_softmax(summed);
    }
  }

  EvaluationResult result;
  result.per_modality.resize(M);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    std::size_t n = 0;
    while (cursor + n < owner.size() && owner[cursor + n] == s) ++n;
    const std::size_t label = segments[s].label(LabelUse::evaluation);
    for (std::size_t h = 0; h <= M; ++h) {
      const std::span<const std::vector<double>> group(probs[h].data() + cursor, n);
      Top1Counts& c = h == 0 ? result.fused : result.per_modality[h - 1];
      c.correct += predict_from_windows(group) == label ? 1 : 0;
      ++c.total;
    }
    cursor += n;
  }
  return result;
}

double evaluate_top1(const ModelBundle& bundle, std::span<const ActionSegment> segments,
                     std::optional<std::size_t> modality, std::size_t n_windows) {
  const auto r = evaluate_bundle(bundle, segments, n_windows);
  if (!modality) return r.fused.accuracy();
  if (*modality >= r.per_modality.size()) throw IndexError("modality index out of range");
  return r.per_modality[*modality].accuracy();
}

// ---- metrics ----

double metric_value(const MetricsRecord& r, MetricField field) {
  switch (field) {
    case MetricField::source_top1: return r.source_top1;
    case MetricField::target_top1: return r.target_top1;
    case MetricField::rgblike_top1: return r.rgblike_top1;
    case MetricField::flowlike_top1: return r.flowlike_top1;
    case MetricField::loss_y: return r.loss_y;
    case MetricField::loss_d1: return r.loss_d1;
    case MetricField::loss_d2: return r.loss_d2;
    case MetricField::loss_c: return r.loss_c;
  }
  return 0.0;
}

MetricField parse_metric_field(const std::string& name) {
  static const std::pair<const char*, MetricField> table[] = {
      {"source_top1", MetricField::source_top1},     {"target_top1", MetricField::target_top1},
      {"rgblike_top1", MetricField::rgblike_top1},   {"flowlike_top1", MetricField::flowlike_top1},
      {"loss_y", MetricField::loss_y},               {"loss_d1", MetricField::loss_d1},
      {"loss_d2", MetricField::loss_d2},             {"loss_c", MetricField::loss_c},
  };
  for (const auto& [n, f] : table)
    if (name == n) return f;
  throw ConfigError("unknown metric field: " + name);
}

double average_last_k(std::span<const MetricsRecord> records, std::size_t k, MetricField field) {
  if (k == 0) throw ParameterError("average_last_k: k must be positive");
  if (records.size() < k)
    throw DataError("average_last_k: need " + std::to_string(k) + " records, have " + std::to_string(records.size()));
  double sum = 0.0;
  for (std::size_t i = records.size() - k; i < records.size(); ++i) sum += metric_value(records[i], field);
  return sum / static_cast<double>(k);
}

std::string metrics_csv_header() {
  return "method,source_domain,target_domain,seed,lambda_d,lambda_c,policy,epoch,source_top1,target_top1,"
         "rgblike_top1,flowlike_top1,loss_y,loss_d1,loss_d2,loss_c";
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.method << ',' << r.source_domain << ',' << r.target_domain << ',' << r.seed << ',' << fmt(r.lambda_d) << ','
     << fmt(r.lambda_c) << ',' << r.policy << ',' << r.epoch << ',' << fmt(r.source_top1) << ','
     << fmt(r.target_top1) << ',' << fmt(r.rgblike_top1) << ',' << fmt(r.flowlike_top1) << ',' << fmt(r.loss_y)
     << ',' << fmt(r.loss_d1) << ',' << fmt(r.loss_d2) << ',' << fmt(r.loss_c);
  return os.str();
}

void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path) {
  std::string text = metrics_csv_header() + "\n";
  for (const auto& r : records) text += metrics_csv_row(r) + "\n";
  write_file_atomically(path, text);
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_csv_header())
    throw IoError("unexpected metrics header in " + path.string());
  std::vector<MetricsRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 16)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 16 columns, got " +
                    std::to_string(cells.size()));
    try {
      MetricsRecord r;
      r.method = cells[0];
      r.source_domain = cells[1];
      r.target_domain = cells[2];
      r.seed = std::stoull(cells[3]);
      r.lambda_d = std::stod(cells[4]);
      r.lambda_c = std::stod(cells[5]);
      r.policy = cells[6];
      r.epoch = std::stoull(cells[7]);
      r.source_top1 = std::stod(cells[8]);
      r.target_top1 = std::stod(cells[9]);
      r.rgblike_top1 = std::stod(cells[10]);
      r.flowlike_top1 = std::stod(cells[11]);
      r.loss_y = std::stod(cells[12]);
      r.loss_d1 = std::stod(cells[13]);
      r.loss_d2 = std::stod(cells[14]);
      r.loss_c = std::stod(cells[15]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

// ---- embeddings ----

void export_embeddings(const ModelBundle& bundle, std::span<const DomainDataset* const> datasets,
                       const std::filesystem::path& path) {
  const std::size_t M = bundle.modalities();
  const std::size_t w = bundle.dims().window_len;
  std::ostringstream os;
  os << "modality\tdomain\tsplit\tclass";
  for (std::size_t j = 0; j < bundle.dims().feat_dim; ++j) os << "\tf" << j;
  os << '\n';
  for (const DomainDataset* ds : datasets) {
    const std::pair<const char*, const std::vector<ActionSegment>*> splits[] = {{"train", &ds->train},
                                                                                 {"test", &ds->test}};
    for (const auto& [split, segs] : splits) {
      if (segs->empty()) continue;
      std::vector<WindowSample> first;
      for (const auto& seg : *segs) first.push_back(test_windows(seg, w, kDefaultTestWindows).front());
      for (std::size_t m = 0; m < M; ++m) {
        const Tensor f = bundle.features_eval(m, stack_windows(first, m));
        const std::size_t D = f.cols();
        for (std::size_t i = 0; i < segs->size(); ++i) {
          os << m << '\t' << ds->spec.domain_id << '\t' << split << '\t' << (*segs)[i].label(LabelUse::evaluation);
          for (std::size_t j = 0; j < D; ++j) os << '\t' << fmt(f.values()[i * D + j]);
          os << '\n';
        }
      }
    }
  }
  write_file_atomically(path, os.str());
}

}  // namespace mmsada
