#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "mmsada/errors.hpp"
#include "mmsada/expcli.hpp"

namespace mmsada {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  Reader(const ConfigDocument& doc, const ConfigSection& section) : doc_(doc), section_(section) {}

  [[noreturn]] void fail(const ConfigEntry& e, const std::string& key, const std::string& why) const {
    throw ConfigError(doc_.origin + ":" + std::to_string(e.line) + ": " + key + ": " + why);
  }

  const ConfigEntry* find(const std::string& key) {
    used_.insert(key);
    auto it = section_.entries.find(key);
    return it == section_.entries.end() ? nullptr : &it->second;
  }

  const ConfigEntry& require(const std::string& key) {
    const ConfigEntry* e = find(key);
    if (!e) throw ConfigError(doc_.origin + ": missing required key '" + key + "'");
    return *e;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (const ConfigEntry* e = find(key)) out = convert<T>(*e, key);
  }

  template <class T>
  T convert(const ConfigEntry& e, const std::string& key) const {
    try {
      std::size_t pos = 0;
      T v{};
      if constexpr (std::is_same_v<T, double>) {
        v = std::stod(e.value, &pos);
      } else if constexpr (std::is_same_v<T, bool>) {
        if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
        if (e.value == "false" || e.value == "0" || e.value == "no") return false;
        fail(e, key, "expected a boolean, got '" + e.value + "'");
      } else if constexpr (std::is_same_v<T, std::string>) {
        return e.value;
      } else {
        if (!e.value.empty() && e.value[0] == '-') fail(e, key, "expected a non-negative integer");
        v = static_cast<T>(std::stoull(e.value, &pos));
      }
      if (pos != e.value.size()) fail(e, key, "trailing characters in '" + e.value + "'");
      return v;
    } catch (const std::logic_error&) {
      fail(e, key, "cannot parse '" + e.value + "'");
    }
  }

  void reject_unknown() const {
    for (const auto& [k, e] : section_.entries)
      if (!used_.count(k)) fail(e, k, "unknown key");
  }

 private:
  const ConfigDocument& doc_;
  const ConfigSection& section_;
  std::set<std::string> used_;
};

void read_experiment(Reader& r, ExperimentConfig& x, std::size_t& last_epochs, bool& embeddings) {
  r.get("lambda_d", x.lambda_d);
  r.get("lambda_c", x.lambda_c);
  r.get("stage1_lr", x.stage1_lr);
  r.get("stage1_steps", x.stage1_steps);
  r.get("stage2_lr", x.stage2_lr);
  r.get("stage2_steps", x.stage2_steps);
  r.get("batch_size", x.batch_size);
  r.get("weight_decay", x.weight_decay);
  r.get("dropout", x.dropout);
  r.get("window_len", x.window_len);
  r.get("feat_dim", x.feat_dim);
  r.get("encoder_hidden", x.encoder_hidden);
  r.get("head_hidden", x.head_hidden);
  r.get("seed", x.seed);
  r.get("steps_per_epoch", x.steps_per_epoch);
  r.get("test_windows", x.test_windows);
  if (const ConfigEntry* e = r.find("policy")) {
    try {
      x.policy = parse_policy(e->value);
    } catch (const Error& err) {
      r.fail(*e, "policy", err.what());
    }
  }
  if (const ConfigEntry* e = r.find("adapt_batch_norm")) x.adapt_batch_norm = r.convert<bool>(*e, "adapt_batch_norm");
  if (const ConfigEntry* e = r.find("steps_scale")) x.scale_steps(r.convert<double>(*e, "steps_scale"));
  r.get("report_last_epochs", last_epochs);
  r.get("write_embeddings", embeddings);
}

void read_data(const ConfigDocument& doc, Reader& top, DataConfig& data) {
  top.get("data_seed", data.prototype_seed);
  for (std::size_t i = 1; i < doc.sections.size(); ++i) {
    const ConfigSection& sec = doc.sections[i];
    Reader r(doc, sec);
    if (sec.name == "generator") {
      GeneratorParams& g = data.generator;
      r.get("latent_dim", g.latent_dim);
      r.get("harmonics", g.harmonics);
      r.get("class_mean_scale", g.class_mean_scale);
      r.get("class_motion_scale", g.class_motion_scale);
      r.get("style_scale", g.style_scale);
      r.get("pace_jitter", g.pace_jitter);
      r.get("frame_noise", g.frame_noise);
      r.get("motion_gain", g.motion_gain);
      r.get("disjoint_views", g.disjoint_views);
      if (const ConfigEntry* e = r.find("input_dims")) {
        g.input_dims.clear();
        for (const auto& item : split_list(e->value))
          g.input_dims.push_back(r.convert<std::size_t>({item, e->line}, "input_dims"));
      }
    } else if (sec.name.rfind("domain ", 0) == 0) {
      const std::string id = trim(sec.name.substr(7));
      auto it = std::find_if(data.domains.begin(), data.domains.end(),
                             [&](const SyntheticDomainSpec& s) { return s.domain_id == id; });
      if (it == data.domains.end()) {
        SyntheticDomainSpec s;
        s.domain_id = id;
        s.seed = 1000 + 17 * data.domains.size();
        data.domains.push_back(s);
        it = std::prev(data.domains.end());
      }
      SyntheticDomainSpec& s = *it;
      r.get("class_count", s.class_count);
      r.get("appearance_strength", s.appearance_strength);
      r.get("appearance_bias", s.appearance_bias);
      r.get("motion_noise_scale", s.motion_noise_scale);
      r.get("train_segments", s.train_segments);
      r.get("test_segments", s.test_segments);
      r.get("min_length", s.min_length);
      r.get("max_length", s.max_length);
      r.get("seed", s.seed);
      if (const ConfigEntry* e = r.find("class_prior")) {
        s.class_prior.clear();
        for (const auto& item : split_list(e->value))
          s.class_prior.push_back(r.convert<double>({item, e->line}, "class_prior"));
      }
    } else {
      throw ConfigError(doc.origin + ":" + std::to_string(sec.line) + ": unknown section [" + sec.name + "]");
    }
    r.reject_unknown();
  }
}

void check_domain(const DataConfig& data, const std::string& id, const std::string& key) {
  for (const auto& s : data.domains)
    if (s.domain_id == id) return;
  throw ConfigError(key + " names unknown domain '" + id + "'");
}

}  // namespace

ConfigDocument parse_config_text(const std::string& text, const std::string& origin) {
  ConfigDocument doc;
  doc.origin = origin;
  doc.sections.push_back({"", 0, {}});
  std::stringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
      for (const auto& s : doc.sections)
        if (s.name == name)
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate section [" + name + "]");
      doc.sections.push_back({std::move(name), lineno, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    auto& entries = doc.sections.back().entries;
    if (entries.count(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    entries[key] = {value, lineno};
  }
  return doc;
}

ConfigDocument parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

RunConfig run_config_from(const ConfigDocument& doc) {
  RunConfig rc;
  Reader r(doc, doc.top());
  const ConfigEntry& method = r.require("method");
  try {
    rc.experiment.method = parse_method(method.value);
  } catch (const Error& e) {
    r.fail(method, "method", e.what());
  }
  rc.experiment.source_domain = r.require("source_domain").value;
  rc.experiment.target_domain = r.require("target_domain").value;
  read_experiment(r, rc.experiment, rc.report_last_epochs, rc.write_embeddings);
  read_data(doc, r, rc.data);
  r.reject_unknown();
  check_domain(rc.data, rc.experiment.source_domain, "source_domain");
  check_domain(rc.data, rc.experiment.target_domain, "target_domain");
  rc.experiment.validate();
  return rc;
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::none: return "none";
    case SweepAxis::lambda_d: return "lambda_d";
    case SweepAxis::policy: return "policy";
  }
  return "none";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "none") return SweepAxis::none;
  if (text == "lambda_d") return SweepAxis::lambda_d;
  if (text == "policy") return SweepAxis::policy;
  throw ConfigError("unknown sweep axis: " + text);
}

void SuiteSpec::validate() const {
  if (methods.empty()) throw ConfigError("suite needs at least one method");
  if (pairs.empty()) throw ConfigError("suite needs at least one domain pair");
  if (seeds.empty()) throw ConfigError("suite needs at least one seed");
  if (sweep != SweepAxis::none && sweep_values.empty()) throw ConfigError("sweep axis set but sweep_values is empty");
  if (jobs == 0) throw ConfigError("jobs must be positive");
  for (const auto& [s, t] : pairs) {
    check_domain(base.data, s, "pairs");
    check_domain(base.data, t, "pairs");
    if (s == t) throw ConfigError("pair " + s + ">" + t + " adapts a domain to itself");
  }
}

SuiteSpec suite_spec_from(const ConfigDocument& doc) {
  SuiteSpec spec;
  Reader r(doc, doc.top());
  const ConfigEntry& methods = r.require("methods");
  for (const auto& m : split_list(methods.value)) {
    try {
      spec.methods.push_back(parse_method(m));
    } catch (const Error& e) {
      r.fail(methods, "methods", e.what());
    }
  }
  read_experiment(r, spec.base.experiment, spec.base.report_last_epochs, spec.base.write_embeddings);
  read_data(doc, r, spec.base.data);
  if (const ConfigEntry* e = r.find("pairs")) {
    for (const auto& p : split_list(e->value)) {
      const auto arrow = p.find('>');
      if (arrow == std::string::npos) r.fail(*e, "pairs", "expected SRC>TGT, got '" + p + "'");
      spec.pairs.emplace_back(trim(p.substr(0, arrow)), trim(p.substr(arrow + 1)));
    }
  } else {
    for (const auto& s : spec.base.data.domains)
      for (const auto& t : spec.base.data.domains)
        if (s.domain_id != t.domain_id) spec.pairs.emplace_back(s.domain_id, t.domain_id);
  }
  if (const ConfigEntry* e = r.find("seeds")) {
    spec.seeds.clear();
    for (const auto& s : split_list(e->value)) spec.seeds.push_back(r.convert<std::uint64_t>({s, e->line}, "seeds"));
  }
  if (const ConfigEntry* e = r.find("sweep")) {
    try {
      spec.sweep = parse_sweep_axis(e->value);
    } catch (const Error& err) {
      r.fail(*e, "sweep", err.what());
    }
  }
  if (const ConfigEntry* e = r.find("sweep_values")) {
    spec.sweep_values = split_list(e->value);
    for (const auto& v : spec.sweep_values) {
      if (spec.sweep == SweepAxis::lambda_d) r.convert<double>({v, e->line}, "sweep_values");
      if (spec.sweep == SweepAxis::policy) {
        try {
          parse_policy(v);
        } catch (const Error& err) {
          r.fail(*e, "sweep_values", err.what());
        }
      }
    }
  }
  r.get("jobs", spec.jobs);
  r.reject_unknown();
  spec.validate();
  return spec;
}

}  // namespace mmsada
