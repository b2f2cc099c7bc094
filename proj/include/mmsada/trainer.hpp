#pragma once

// Two-stage training schedule, method selector, Adam and test-time batch-norm
// adaptation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmsada/evaluator.hpp"
#include "mmsada/nets.hpp"
#include "mmsada/objectives.hpp"
#include "mmsada/synthdata.hpp"

namespace mmsada {

// ---- optimizer ----

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t steps = 0;
};

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  std::map<std::string, AdamMoments> moments;  // keyed by parameter name
};

/// One bias-corrected Adam update of every listed parameter from its
/// accumulated gradient (weight decay folded into the gradient first).
/// Throws ContractError if any parameter has no gradient.
void adam_step(std::span<const NamedParameter> params, OptimizerState& state, double lr);

// ---- configuration ----

enum class Method { source_only, adabn, mmd, mcd, self_supervised, adversarial, mm_sada, supervised_target };

std::string to_string(Method method);
Method parse_method(const std::string& text);
std::span<const Method> all_methods();

struct ExperimentConfig {
  Method method = Method::mm_sada;
  double lambda_d = 1.0;
  double lambda_c = 5.0;
  double stage1_lr = 1e-2;
  std::size_t stage1_steps = 600;
  double stage2_lr = 2e-4;
  std::size_t stage2_steps = 1200;
  std::size_t batch_size = 128;
  double weight_decay = 1e-7;
  double dropout = 0.5;
  std::size_t window_len = 16;
  std::size_t feat_dim = 64;
  std::size_t encoder_hidden = 128;
  std::size_t head_hidden = 100;
  CorrespondencePolicy policy = CorrespondencePolicy::seg_corr;
  std::uint64_t seed = 1;
  std::string source_domain = "D1";
  std::string target_domain = "D2";
  std::size_t steps_per_epoch = 50;
  std::size_t test_windows = kDefaultTestWindows;
  // Empty: adapt for every alignment method and AdaBN, not for source-only
  // and supervised-target.
  std::optional<bool> adapt_batch_norm;

  void validate() const;
  /// Loss weights after the method selector has zeroed inactive terms.
  LossWeights effective_weights() const;
  bool adapts_batch_norm() const;
  /// Scales both stage step counts (rounded, at least one step if non-zero before).
  void scale_steps(double factor);
};

// ---- training ----

struct StepLog {
  std::size_t step = 0;
  int stage = 1;
  LossBreakdown parts;
  // total == classification + domain_weight * sum(domain) + lambda_c * correspondence
  double domain_weight = 0.0;
  double lambda_c = 0.0;
};

struct TrainResult {
  ModelBundle bundle;
  std::vector<MetricsRecord> records;
  std::vector<StepLog> steps;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

/// Runs both stages. Source-only, AdaBN and supervised-target forward only the
/// labelled quarter of each batch; alignment methods forward the whole batch.
/// After the last step batch-norm statistics are set to the exact aggregate
/// statistics of the training domain's test-protocol windows.
TrainResult train(const ExperimentConfig& config, const DomainDataset& source, const DomainDataset& target,
                  const EpochCallback& on_epoch = {});

/// Copy of `bundle` whose batch-norm running statistics are the mean and biased
/// variance of the target train split's test-protocol windows.
ModelBundle adabn_adapt(const ModelBundle& bundle, const DomainDataset& target,
                        std::size_t n_windows = kDefaultTestWindows);

NetDims net_dims_for(const ExperimentConfig& config, const DomainDataset& data);

}  // namespace mmsada
