#include <algorithm>
#include <atomic>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "mmsada/atomic_file.hpp"
#include "mmsada/errors.hpp"
#include "mmsada/expcli.hpp"

namespace mmsada {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RunKey {
  Method method;
  std::string sweep_value;
  std::string source;
  std::string target;
  std::uint64_t seed;
};

fs::path run_directory(const fs::path& out_dir, const RunKey& k) {
  return out_dir / "runs" / to_string(k.method) / (k.sweep_value.empty() ? "-" : k.sweep_value) /
         (k.source + "_to_" + k.target) / ("seed" + std::to_string(k.seed));
}

}  // namespace

const DomainDataset& find_domain(const std::vector<DomainDataset>& domains, const std::string& id) {
  for (const auto& d : domains)
    if (d.spec.domain_id == id) return d;
  throw ConfigError("unknown domain '" + id + "'");
}

RunOutcome run_single(const RunConfig& config, const fs::path& out_dir) {
  const auto domains = generate_domains(config.data.domains, config.data.prototype_seed, config.data.generator);
  return run_single(config, domains, out_dir);
}

RunOutcome run_single(const RunConfig& config, const std::vector<DomainDataset>& domains, const fs::path& out_dir) {
  const DomainDataset& source = find_domain(domains, config.experiment.source_domain);
  const DomainDataset& target = find_domain(domains, config.experiment.target_domain);
  TrainResult result = train(config.experiment, source, target);
  fs::create_directories(out_dir);
  write_metrics_csv(result.records, out_dir / "metrics.csv");
  save_checkpoint(result.bundle, out_dir / "checkpoint.txt");
  if (config.write_embeddings) {
    const DomainDataset* sets[] = {&source, &target};
    const std::size_t n_sets = source.spec.domain_id == target.spec.domain_id ? 1 : 2;
    export_embeddings(result.bundle, std::span<const DomainDataset* const>(sets, n_sets), out_dir / "embeddings.tsv");
  }
  return {std::move(result.records), out_dir};
}

SuiteResult run_suite(const SuiteSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const auto domains =
      generate_domains(spec.base.data.domains, spec.base.data.prototype_seed, spec.base.data.generator);

  std::vector<std::string> sweep_values = spec.sweep_values;
  if (spec.sweep == SweepAxis::none) sweep_values = {""};
  std::vector<RunKey> keys;
  for (Method m : spec.methods)
    for (const auto& sv : sweep_values)
      for (const auto& [s, t] : spec.pairs)
        for (std::uint64_t seed : spec.seeds) keys.push_back({m, sv, s, t, seed});

  fs::create_directories(out_dir / "runs");
  std::vector<std::string> failures;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      const RunKey& k = keys[i];
      RunConfig rc = spec.base;
      rc.experiment.method = k.method;
      rc.experiment.source_domain = k.source;
      rc.experiment.target_domain = k.target;
      rc.experiment.seed = k.seed;
      const std::string label = to_string(k.method) + (k.sweep_value.empty() ? "" : "[" + k.sweep_value + "]") +
                                " " + k.source + "->" + k.target + " seed " + std::to_string(k.seed);
      try {
        if (spec.sweep == SweepAxis::lambda_d) rc.experiment.lambda_d = std::stod(k.sweep_value);
        if (spec.sweep == SweepAxis::policy) rc.experiment.policy = parse_policy(k.sweep_value);
        run_single(rc, domains, run_directory(out_dir, k));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failures.push_back(label + ": " + e.what());
      }
    }
  };
  const std::size_t n_threads = std::min(spec.jobs, keys.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::sort(failures.begin(), failures.end());
  write_file_atomically(out_dir / "suite_manifest.txt", "sweep = " + to_string(spec.sweep) + "\nlast_epochs = " +
                                                             std::to_string(spec.base.report_last_epochs) + "\n");
  SuiteResult result = aggregate_suite(out_dir, spec.sweep, spec.base.report_last_epochs);
  result.failures = std::move(failures);
  write_file_atomically(out_dir / "suite.csv", suite_csv(result));
  if (!result.failures.empty()) {
    std::string text;
    for (const auto& f : result.failures) text += f + "\n";
    write_file_atomically(out_dir / "failures.txt", text);
  }
  return result;
}

SuiteResult aggregate_suite(const fs::path& out_dir, SweepAxis axis, std::size_t last_epochs) {
  const fs::path runs = out_dir / "runs";
  if (!fs::exists(runs)) throw IoError("no runs directory under " + out_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(runs))
    if (entry.is_regular_file() && entry.path().filename() == "metrics.csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  struct Keyed {
    SuiteRow row;
    std::uint64_t seed;
  };
  std::vector<Keyed> rows;
  for (const auto& f : files) {
    const auto records = read_metrics_csv(f);
    if (records.empty()) continue;
    const std::size_t k = std::min(last_epochs, records.size());
    const MetricsRecord& last = records.back();
    SuiteRow row;
    row.method = last.method;
    // runs/<method>/<sweep value>/<pair>/<seed>/metrics.csv
    const std::string sweep_dir = f.parent_path().parent_path().parent_path().filename().string();
    row.sweep_value = axis == SweepAxis::none || sweep_dir == "-" ? "" : sweep_dir;
    row.source_domain = last.source_domain;
    row.target_domain = last.target_domain;
    row.seed = std::to_string(last.seed);
    row.source_top1 = average_last_k(records, k, MetricField::source_top1);
    row.target_top1 = average_last_k(records, k, MetricField::target_top1);
    row.rgblike_top1 = average_last_k(records, k, MetricField::rgblike_top1);
    row.flowlike_top1 = average_last_k(records, k, MetricField::flowlike_top1);
    rows.push_back({std::move(row), last.seed});
  }
  std::sort(rows.begin(), rows.end(), [](const Keyed& a, const Keyed& b) {
    return std::tie(a.row.method, a.row.sweep_value, a.row.source_domain, a.row.target_domain, a.seed) <
           std::tie(b.row.method, b.row.sweep_value, b.row.source_domain, b.row.target_domain, b.seed);
  });

  SuiteResult result;
  for (const auto& r : rows) result.rows.push_back(r.row);

  // Seeds are averaged within each pair first, then pairs are averaged.
  using Group = std::pair<std::string, std::string>;
  std::map<Group, std::map<Group, std::vector<const SuiteRow*>>> groups;
  for (const auto& r : result.rows)
    groups[{r.method, r.sweep_value}][{r.source_domain, r.target_domain}].push_back(&r);
  std::vector<SuiteRow> means;
  for (const auto& [g, pairs] : groups) {
    SuiteRow mean;
    mean.method = g.first;
    mean.sweep_value = g.second;
    mean.source_domain = "MEAN";
    mean.target_domain = "MEAN";
    mean.seed = "mean";
    for (const auto& [pair, members] : pairs) {
      SuiteRow avg;
      for (const SuiteRow* m : members) {
        avg.source_top1 += m->source_top1;
        avg.target_top1 += m->target_top1;
        avg.rgblike_top1 += m->rgblike_top1;
        avg.flowlike_top1 += m->flowlike_top1;
      }
      const auto n = static_cast<double>(members.size());
      mean.source_top1 += avg.source_top1 / n;
      mean.target_top1 += avg.target_top1 / n;
      mean.rgblike_top1 += avg.rgblike_top1 / n;
      mean.flowlike_top1 += avg.flowlike_top1 / n;
    }
    const auto p = static_cast<double>(pairs.size());
    mean.source_top1 /= p;
    mean.target_top1 /= p;
    mean.rgblike_top1 /= p;
    mean.flowlike_top1 /= p;
    means.push_back(std::move(mean));
  }
  result.rows.insert(result.rows.end(), means.begin(), means.end());
  return result;
}

std::string suite_csv(const SuiteResult& result) {
  std::ostringstream os;
  os << "method,sweep_value,source_domain,target_domain,seed,source_top1,target_top1,rgblike_top1,flowlike_top1\n";
  for (const auto& r : result.rows)
    os << r.method << ',' << r.sweep_value << ',' << r.source_domain << ',' << r.target_domain << ',' << r.seed << ','
       << fmt(r.source_top1) << ',' << fmt(r.target_top1) << ',' << fmt(r.rgblike_top1) << ','
       << fmt(r.flowlike_top1) << '\n';
  return os.str();
}

}  // namespace mmsada
