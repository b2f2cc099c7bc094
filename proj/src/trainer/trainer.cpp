#include "mmsada/trainer.hpp"

#include <array>
#include <cmath>
#include <utility>

#include "mmsada/errors.hpp"
#include "mmsada/ops.hpp"
#include "mmsada/rng.hpp"

namespace mmsada {

namespace {

constexpr std::array<std::pair<Method, const char*>, 8> kMethodNames{{
    {Method::source_only, "source-only"},
    {Method::adabn, "adabn"},
    {Method::mmd, "mmd"},
    {Method::mcd, "mcd"},
    {Method::self_supervised, "self-sup-only"},
    {Method::adversarial, "adversarial-only"},
    {Method::mm_sada, "mm-sada"},
    {Method::supervised_target, "supervised-target"},
}};

constexpr std::array<Method, 8> kAllMethods{Method::source_only,     Method::adabn,       Method::mmd,
                                            Method::mcd,             Method::self_supervised, Method::adversarial,
                                            Method::mm_sada,         Method::supervised_target};

constexpr double kDivergenceFactor = 10.0;
constexpr std::size_t kDivergencePatience = 100;

bool trains_on_labelled_only(Method m) {
  return m == Method::source_only || m == Method::adabn || m == Method::supervised_target;
}

std::vector<WindowSample> protocol_windows(std::span<const ActionSegment> segments, std::size_t window_len,
                                           std::size_t n_windows) {
  std::mt19937_64 unused(0);
  std::vector<WindowSample> out;
  for (const auto& seg : segments)
    for (auto& w : sample_window(seg, Mode::eval, window_len, n_windows, unused)) out.push_back(std::move(w));
  return out;
}

std::vector<WindowSample> rows_of(const TrainingBatch& batch, std::span<const std::size_t> rows) {
  std::vector<WindowSample> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(batch.examples[r].window);
  return out;
}

}  // namespace

std::string to_string(Method method) {
  for (const auto& [m, name] : kMethodNames)
    if (m == method) return name;
  return "unknown";
}

Method parse_method(const std::string& text) {
  std::string t = text;
  for (char& ch : t)
    if (ch == '_') ch = '-';
  for (const auto& [m, name] : kMethodNames)
    if (t == name) return m;
  if (t == "self-supervised") return Method::self_supervised;
  if (t == "adversarial") return Method::adversarial;
  throw ConfigError("unknown method: " + text);
}

std::span<const Method> all_methods() { return kAllMethods; }

void ExperimentConfig::validate() const {
  if (!(stage1_lr > 0.0) || !(stage2_lr > 0.0) || !std::isfinite(stage1_lr) || !std::isfinite(stage2_lr))
    throw ConfigError("learning rates must be positive and finite");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(lambda_d >= 0.0) || !(lambda_c >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (batch_size < 8 || batch_size % 4 != 0) throw ConfigError("batch_size must be a multiple of 4 and at least 8");
  if (window_len == 0 || feat_dim == 0 || encoder_hidden == 0 || head_hidden == 0)
    throw ConfigError("network sizes must be positive");
  if (steps_per_epoch == 0) throw ConfigError("steps_per_epoch must be positive");
  if (test_windows == 0) throw ConfigError("test_windows must be positive");
  if (source_domain.empty() || target_domain.empty()) throw ConfigError("source and target domains are required");
}

LossWeights ExperimentConfig::effective_weights() const {
  switch (method) {
    case Method::source_only:
    case Method::adabn:
    case Method::supervised_target: return {0.0, 0.0};
    case Method::self_supervised: return {0.0, lambda_c};
    case Method::adversarial:
    case Method::mmd:
    case Method::mcd: return {lambda_d, 0.0};
    case Method::mm_sada: return {lambda_d, lambda_c};
  }
  throw ConfigError("unknown method");
}

bool ExperimentConfig::adapts_batch_norm() const {
  if (adapt_batch_norm) return *adapt_batch_norm;
  return method != Method::source_only && method != Method::supervised_target;
}

void ExperimentConfig::scale_steps(double factor) {
  if (!(factor > 0.0)) throw ConfigError("steps scale must be positive");
  auto scale = [factor](std::size_t n) -> std::size_t {
    if (n == 0) return 0;
    const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(n) * factor));
    return s == 0 ? 1 : s;
  };
  stage1_steps = scale(stage1_steps);
  stage2_steps = scale(stage2_steps);
}

NetDims net_dims_for(const ExperimentConfig& config, const DomainDataset& data) {
  if (data.train.empty()) throw DataError("dataset " + data.spec.domain_id + " has no training segments");
  NetDims d;
  const ActionSegment& s = data.train.front();
  d.modalities = s.modalities();
  d.input_dims.clear();
  for (std::size_t m = 0; m < d.modalities; ++m) d.input_dims.push_back(s.input_dim(m));
  d.window_len = config.window_len;
  d.encoder_hidden = config.encoder_hidden;
  d.feat_dim = config.feat_dim;
  d.head_hidden = config.head_hidden;
  d.classes = data.classes();
  d.dropout = config.dropout;
  d.second_classifier = config.method == Method::mcd;
  d.validate();
  return d;
}

ModelBundle adabn_adapt(const ModelBundle& bundle, const DomainDataset& target, std::size_t n_windows) {
  if (target.train.empty()) throw DataError("batch-norm adaptation needs target training segments");
  ModelBundle out = bundle.clone();
  auto states = out.batch_norm_states();
  if (states.empty()) return out;
  const auto windows = protocol_windows(target.train, bundle.dims().window_len, n_windows);
  constexpr std::size_t kChunk = 1024;
  for (std::size_t m = 0; m < out.modalities(); ++m) {
    BatchNormState& bn = *states[m].second;
    const std::size_t C = bn.channels();
    std::vector<Tensor> acts;
    for (std::size_t b = 0; b < windows.size(); b += kChunk) {
      const std::span<const WindowSample> chunk(windows.data() + b, std::min(kChunk, windows.size() - b));
      acts.push_back(out.pre_norm_activations(m, stack_windows(chunk, m)));
    }
    const auto n = static_cast<double>(windows.size());
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    for (const auto& a : acts)
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < C; ++c) mean[c] += a.values()[r * C + c];
    for (double& v : mean) v /= n;
    for (const auto& a : acts)
      for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const double d = a.values()[r * C + c] - mean[c];
          var[c] += d * d;
        }
    for (double& v : var) v /= n;
    bn.running_mean = std::move(mean);
    bn.running_var = std::move(var);
  }
  return out;
}

TrainResult train(const ExperimentConfig& config, const DomainDataset& source, const DomainDataset& target,
                  const EpochCallback& on_epoch) {
  config.validate();
  const LossWeights weights = config.effective_weights();
  const Method method = config.method;
  const bool supervised_target = method == Method::supervised_target;
  const DomainDataset& labelled = supervised_target ? target : source;
  if (labelled.classes() != target.classes() || source.classes() != target.classes())
    throw DataError("source and target disagree on the class count");

  TrainResult result{ModelBundle(net_dims_for(config, labelled), derive_seed(config.seed, {kStreamInit})), {}, {}};
  ModelBundle& bundle = result.bundle;
  const std::size_t M = bundle.modalities();
  const auto params = bundle.parameters();

  OptimizerState opt;
  opt.weight_decay = config.weight_decay;
  auto batch_rng = make_stream(config.seed, {kStreamBatches});
  auto dropout_rng = make_stream(config.seed, {kStreamDropout});
  const BatchOptions batch_options{config.batch_size, config.window_len, config.policy, supervised_target};

  const std::size_t total_steps = config.stage1_steps + config.stage2_steps;
  double initial_loss = 0.0;
  std::size_t over_count = 0;
  LossBreakdown epoch_sum;
  epoch_sum.domain.assign(M, 0.0);
  std::size_t epoch_steps = 0;

  for (std::size_t step = 0; step < total_steps; ++step) {
    try {
      const int stage = step < config.stage1_steps ? 1 : 2;
      const bool domain_active = stage == 2 && weights.lambda_d > 0.0;
      const bool corr_active = weights.lambda_c > 0.0;
      const bool full_batch = !trains_on_labelled_only(method) && (domain_active || corr_active);

      const TrainingBatch batch = supervised_target ? compose_batch(target, target, batch_options, batch_rng)
                                                    : compose_batch(source, target, batch_options, batch_rng);
      std::vector<std::size_t> rows;
      if (full_batch) {
        for (std::size_t i = 0; i < batch.examples.size(); ++i) rows.push_back(i);
      } else {
        rows = batch.classification_eligible();
      }
      const auto windows = rows_of(batch, rows);

      std::vector<std::size_t> eligible, labels, src_rows, tgt_rows;
      std::vector<int> domain_bits, corr_bits;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const LabeledExample& ex = batch.examples[rows[i]];
        if (ex.d == 1 && ex.c == 1) {
          eligible.push_back(i);
          labels.push_back(*ex.y);
        }
        (ex.d == 1 ? src_rows : tgt_rows).push_back(i);
        domain_bits.push_back(ex.d);
        corr_bits.push_back(ex.c);
      }

      bundle.zero_grad();
      std::vector<Tensor> feats;
      for (std::size_t m = 0; m < M; ++m)
        feats.push_back(bundle.features(m, stack_windows(windows, m), Mode::train, dropout_rng));

      auto head_logits = [&](std::size_t head, std::span<const std::size_t> subset) {
        std::vector<Tensor> out;
        for (std::size_t m = 0; m < M; ++m) {
          const Tensor f = subset.size() == rows.size() ? feats[m] : select_rows(feats[m], subset);
          out.push_back(bundle.classify(m, f, head));
        }
        return out;
      };
      Tensor l_y = fused_classification_loss(head_logits(0, eligible), labels);
      if (method == Method::mcd) l_y = add(l_y, fused_classification_loss(head_logits(1, eligible), labels));

      std::vector<Tensor> l_d(M);
      Tensor discrepancy;
      if (domain_active) {
        switch (method) {
          case Method::adversarial:
          case Method::mm_sada:
            for (std::size_t m = 0; m < M; ++m)
              l_d[m] = domain_loss(bundle.discriminate(m, gradient_reversal(feats[m])), domain_bits);
            break;
          case Method::mmd:
            for (std::size_t m = 0; m < M; ++m)
              l_d[m] = mmd_loss(select_rows(feats[m], src_rows), select_rows(feats[m], tgt_rows));
            break;
          case Method::mcd: {
            std::vector<Tensor> first, second;
            for (std::size_t m = 0; m < M; ++m) {
              const Tensor r = gradient_reversal(select_rows(feats[m], tgt_rows));
              first.push_back(bundle.classify(m, r, 0));
              second.push_back(bundle.classify(m, r, 1));
            }
            discrepancy = mcd_discrepancy(fused_probabilities(first), fused_probabilities(second));
            break;
          }
          default: break;
        }
      }
      Tensor l_c;
      if (corr_active) l_c = correspondence_loss(bundle.correspond(feats), corr_bits);

      StepLog log;
      log.step = step;
      log.stage = stage;
      log.lambda_c = weights.lambda_c;
      Tensor total;
      if (method == Method::mcd) {
        log.domain_weight = domain_active ? -weights.lambda_d : 0.0;
        log.parts.classification = l_y.item();
        log.parts.domain.assign(M, 0.0);
        if (discrepancy.defined()) {
          log.parts.domain[0] = discrepancy.item();
          const std::vector<Tensor> terms{l_y, discrepancy};
          const std::vector<double> w{1.0, -weights.lambda_d};
          total = weighted_sum(terms, w);
        } else {
          total = l_y;
        }
        log.parts.total = total.item();
      } else {
        log.domain_weight = domain_active ? weights.lambda_d : 0.0;
        TotalLoss tl = combine_losses(l_y, l_d, l_c, weights);
        total = tl.total;
        log.parts = tl.parts;
      }

      const double value = log.parts.total;
      if (!std::isfinite(value)) throw DivergenceError("loss became non-finite at step " + std::to_string(step), step);
      if (step == 0) initial_loss = std::abs(value);
      over_count = value > kDivergenceFactor * initial_loss ? over_count + 1 : 0;
      if (over_count >= kDivergencePatience)
        throw DivergenceError("loss exceeded 10x its initial value for 100 steps, at step " + std::to_string(step),
                              step);

      backward(total);
      std::vector<NamedParameter> active;
      for (const auto& p : params)
        if (p.tensor.has_grad()) active.push_back(p);
      adam_step(active, opt, stage == 1 ? config.stage1_lr : config.stage2_lr);

      epoch_sum.classification += log.parts.classification;
      for (std::size_t m = 0; m < M; ++m) epoch_sum.domain[m] += log.parts.domain[m];
      epoch_sum.correspondence += log.parts.correspondence;
      ++epoch_steps;
      result.steps.push_back(std::move(log));

      if ((step + 1) % config.steps_per_epoch == 0 || step + 1 == total_steps) {
        MetricsRecord rec;
        rec.method = to_string(method);
        rec.source_domain = config.source_domain;
        rec.target_domain = config.target_domain;
        rec.seed = config.seed;
        rec.lambda_d = weights.lambda_d;
        rec.lambda_c = weights.lambda_c;
        rec.policy = to_string(config.policy);
        rec.epoch = result.records.size() + 1;
        rec.source_top1 = evaluate_bundle(bundle, source.test, config.test_windows).fused.accuracy();
        const ModelBundle evaluated =
            config.adapts_batch_norm() ? adabn_adapt(bundle, target, config.test_windows) : bundle.clone();
        const EvaluationResult tr = evaluate_bundle(evaluated, target.test, config.test_windows);
        rec.target_top1 = tr.fused.accuracy();
        rec.rgblike_top1 = tr.per_modality.at(0).accuracy();
        rec.flowlike_top1 = M > 1 ? tr.per_modality.at(1).accuracy() : 0.0;
        const auto n = static_cast<double>(epoch_steps);
        rec.loss_y = epoch_sum.classification / n;
        rec.loss_d1 = epoch_sum.domain.at(0) / n;
        rec.loss_d2 = M > 1 ? epoch_sum.domain.at(1) / n : 0.0;
        rec.loss_c = epoch_sum.correspondence / n;
        epoch_sum = LossBreakdown{};
        epoch_sum.domain.assign(M, 0.0);
        epoch_steps = 0;
        if (on_epoch) on_epoch(rec);
        result.records.push_back(std::move(rec));
      }
    } catch (const NumericError& e) {
      throw DivergenceError(std::string(e.what()) + ", at step " + std::to_string(step), step);
    }
  }

  // Replace the moving averages by the exact statistics of the training domain.
  if (total_steps > 0) bundle = adabn_adapt(bundle, labelled, config.test_windows);
  return result;
}

}  // namespace mmsada
