// mmsada: run single experiments, suites and dataset generation from config files.
//
//   mmsada run <config> [--out DIR] [--seed N] [--steps-scale F]
//   mmsada suite <spec> [--out DIR] [--seed N] [--steps-scale F] [--jobs N]
//   mmsada aggregate <dir> [--sweep none|lambda_d|policy] [--last-epochs K]
//   mmsada generate <config> [--out DIR]
//
// Exit codes: 0 success, 1 config error, 2 runtime or divergence error,
// 3 partial suite failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "mmsada/atomic_file.hpp"
#include "mmsada/errors.hpp"
#include "mmsada/expcli.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitPartial = 3;

void apply_overrides(mmsada::ExperimentConfig& x, const std::optional<std::uint64_t>& seed,
                     const std::optional<double>& scale) {
  if (seed) x.seed = *seed;
  if (scale) x.scale_steps(*scale);
  x.validate();
}

void print_summary(const std::vector<mmsada::MetricsRecord>& records, std::size_t last) {
  if (records.empty()) {
    std::cout << "no epochs recorded\n";
    return;
  }
  const std::size_t k = std::min(last, records.size());
  auto pct = [&](mmsada::MetricField f) { return 100.0 * mmsada::average_last_k(records, k, f); };
  std::printf("epochs %zu, last-%zu mean top-1 %%: source %.2f  target %.2f  rgb-like %.2f  flow-like %.2f\n",
              records.size(), k, pct(mmsada::MetricField::source_top1), pct(mmsada::MetricField::target_top1),
              pct(mmsada::MetricField::rgblike_top1), pct(mmsada::MetricField::flowlike_top1));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal domain adaptation lab"};
  app.require_subcommand(1);

  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<double> steps_scale;

  std::string run_config;
  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  run->add_option("config", run_config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--seed", seed, "Override the training seed");
  run->add_option("--steps-scale", steps_scale, "Scale both stage step counts");

  std::string suite_path;
  std::optional<std::size_t> jobs;
  auto* suite = app.add_subcommand("suite", "Run methods x domain pairs x seeds");
  suite->add_option("spec", suite_path, "Suite spec file")->required()->check(CLI::ExistingFile);
  suite->add_option("--out", out_dir, "Output directory");
  suite->add_option("--seed", seed, "Run a single seed instead of the spec's list");
  suite->add_option("--steps-scale", steps_scale, "Scale both stage step counts");
  suite->add_option("--jobs", jobs, "Concurrent runs");

  std::string agg_dir;
  std::string sweep = "none";
  std::size_t last_epochs = 9;
  auto* aggregate = app.add_subcommand("aggregate", "Rebuild suite.csv from child metrics files");
  aggregate->add_option("dir", agg_dir, "Suite output directory")->required()->check(CLI::ExistingDirectory);
  aggregate->add_option("--sweep", sweep, "Sweep axis used by the suite");
  aggregate->add_option("--last-epochs", last_epochs, "Epochs averaged per run");

  std::string gen_config;
  auto* generate = app.add_subcommand("generate", "Write the synthetic domains of a config");
  generate->add_option("config", gen_config, "Config file")->required()->check(CLI::ExistingFile);
  generate->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      auto cfg = mmsada::run_config_from(mmsada::parse_config_file(run_config));
      apply_overrides(cfg.experiment, seed, steps_scale);
      const auto outcome = mmsada::run_single(cfg, out_dir);
      print_summary(outcome.records, cfg.report_last_epochs);
      std::cout << "wrote " << outcome.directory.string() << "/{metrics.csv,checkpoint.txt"
                << (cfg.write_embeddings ? ",embeddings.tsv}" : "}") << "\n";
      return 0;
    }
    if (*suite) {
      auto spec = mmsada::suite_spec_from(mmsada::parse_config_file(suite_path));
      if (seed) spec.seeds = {*seed};
      if (steps_scale) spec.base.experiment.scale_steps(*steps_scale);
      if (jobs) spec.jobs = *jobs;
      spec.validate();
      const auto result = mmsada::run_suite(spec, out_dir);
      std::cout << mmsada::suite_csv(result);
      if (!result.failures.empty()) {
        std::cerr << result.failures.size() << " run(s) failed:\n";
        for (const auto& f : result.failures) std::cerr << "  " << f << "\n";
        return kExitPartial;
      }
      return 0;
    }
    if (*aggregate) {
      const auto result = mmsada::aggregate_suite(agg_dir, mmsada::parse_sweep_axis(sweep), last_epochs);
      const std::string text = mmsada::suite_csv(result);
      mmsada::write_file_atomically(std::filesystem::path(agg_dir) / "suite.csv", text);
      std::cout << text;
      return 0;
    }
    if (*generate) {
      const auto cfg = mmsada::run_config_from(mmsada::parse_config_file(gen_config));
      const auto domains = mmsada::generate_domains(cfg.data.domains, cfg.data.prototype_seed, cfg.data.generator);
      for (const auto& d : domains) {
        const auto path = std::filesystem::path(out_dir) / (d.spec.domain_id + ".dataset");
        mmsada::save_dataset(d, path);
        std::cout << "wrote " << path.string() << " (" << d.train.size() << " train, " << d.test.size()
                  << " test)\n";
      }
      return 0;
    }
  } catch (const mmsada::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mmsada::DivergenceError& e) {
    std::cerr << "diverged at step " << e.step() << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
