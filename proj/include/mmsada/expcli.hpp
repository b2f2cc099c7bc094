#pragma once

// Config files, single runs and multi-run suites.
//
// Config format: one `key = value` per line, `#` starts a comment, and
// `[domain <id>]` / `[generator]` sections override synthetic-data settings.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmsada/evaluator.hpp"
#include "mmsada/synthdata.hpp"
#include "mmsada/trainer.hpp"

namespace mmsada {

struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

struct ConfigSection {
  std::string name;  // "" for the top level, "domain D1", "generator"
  std::size_t line = 0;
  std::map<std::string, ConfigEntry> entries;
};

struct ConfigDocument {
  std::string origin;
  std::vector<ConfigSection> sections;  // sections[0] is the top level

  const ConfigSection& top() const { return sections.front(); }
};

/// Throws ConfigError naming origin and line on malformed input.
ConfigDocument parse_config_text(const std::string& text, const std::string& origin = "<config>");
ConfigDocument parse_config_file(const std::filesystem::path& path);

struct DataConfig {
  std::vector<SyntheticDomainSpec> domains = default_domain_specs();
  GeneratorParams generator;
  std::uint64_t prototype_seed = 7;
};

struct RunConfig {
  ExperimentConfig experiment;
  DataConfig data;
  std::size_t report_last_epochs = 9;
  bool write_embeddings = true;
};

/// Requires `method`, `source_domain` and `target_domain`.
RunConfig run_config_from(const ConfigDocument& doc);

enum class SweepAxis { none, lambda_d, policy };

struct SuiteSpec {
  std::vector<Method> methods;
  std::vector<std::pair<std::string, std::string>> pairs;  // default: all ordered pairs
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SweepAxis sweep = SweepAxis::none;
  std::vector<std::string> sweep_values;
  std::size_t jobs = 1;
  RunConfig base;

  void validate() const;
};

/// Same key set as a run config minus `method`, plus methods, pairs, seeds,
/// sweep, sweep_values and jobs.
SuiteSpec suite_spec_from(const ConfigDocument& doc);

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& text);

// ---- execution ----

struct RunOutcome {
  std::vector<MetricsRecord> records;
  std::filesystem::path directory;
};

/// Writes metrics.csv, checkpoint.txt and (optionally) embeddings.tsv under `out_dir`.
RunOutcome run_single(const RunConfig& config, const std::filesystem::path& out_dir);

/// Same, reusing already generated domains.
RunOutcome run_single(const RunConfig& config, const std::vector<DomainDataset>& domains,
                      const std::filesystem::path& out_dir);

const DomainDataset& find_domain(const std::vector<DomainDataset>& domains, const std::string& id);

struct SuiteRow {
  std::string method;
  std::string sweep_value;
  std::string source_domain;
  std::string target_domain;
  std::string seed;  // "mean" on aggregate rows
  double source_top1 = 0.0;
  double target_top1 = 0.0;
  double rgblike_top1 = 0.0;
  double flowlike_top1 = 0.0;
};

struct SuiteResult {
  std::vector<SuiteRow> rows;  // per run, then one mean row per (method, sweep value)
  std::vector<std::string> failures;
};

/// Runs every (method, sweep value, pair, seed) under out_dir/runs, then
/// aggregates the child metrics files into out_dir/suite.csv.
SuiteResult run_suite(const SuiteSpec& spec, const std::filesystem::path& out_dir);

/// Rebuilds the suite table purely from out_dir/runs/**/metrics.csv.
SuiteResult aggregate_suite(const std::filesystem::path& out_dir, SweepAxis axis, std::size_t last_epochs = 9);

std::string suite_csv(const SuiteResult& result);

}  // namespace mmsada
