#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "mmsada/atomic_file.hpp"
#include "mmsada/errors.hpp"
#include "mmsada/nets.hpp"

namespace mmsada {
namespace {

constexpr const char* kMagic = "mmsada-checkpoint";
constexpr int kVersion = 1;

void write_values(std::ostringstream& os, std::span<const double> values) {
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    os << (i ? " " : "") << buf;
  }
  os << '\n';
}

std::vector<double> read_values(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<double> out(n);
  for (auto& v : out)
    if (!(in >> v)) throw IoError("checkpoint: truncated values for " + what);
  return out;
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token)
    throw IoError("checkpoint: expected '" + token + "', found '" + got + "'");
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  const NetDims& d = bundle.dims();
  std::ostringstream os;
  os << kMagic << ' ' << kVersion << '\n';
  char dropout[32];
  std::snprintf(dropout, sizeof dropout, "%.17g", d.dropout);
  os << "dims " << d.modalities << ' ' << d.window_len << ' ' << d.encoder_hidden << ' ' << d.feat_dim << ' '
     << d.head_hidden << ' ' << d.classes << ' ' << dropout << ' ' << (d.second_classifier ? 1 : 0) << ' '
     << (d.batch_norm ? 1 : 0) << '\n';
  os << "input_dims";
  for (std::size_t v : d.input_dims) os << ' ' << v;
  os << '\n';
  for (const auto& p : bundle.parameters()) {
    os << "param " << p.name << ' ' << p.tensor.rank();
    for (std::size_t e : p.tensor.shape()) os << ' ' << e;
    os << '\n';
    write_values(os, p.tensor.values());
  }
  for (const auto& [name, state] : bundle.batch_norm_states()) {
    char mom[32], eps[32];
    std::snprintf(mom, sizeof mom, "%.17g", state->momentum);
    std::snprintf(eps, sizeof eps, "%.17g", state->epsilon);
    os << "batchnorm " << name << ' ' << state->channels() << ' ' << mom << ' ' << eps << '\n';
    write_values(os, state->running_mean);
    write_values(os, state->running_var);
  }
  os << "end\n";
  write_file_atomically(path, os.str());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic)
    throw IoError(path.string() + " is not a checkpoint file");
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));

  NetDims d;
  int second = 0;
  int norm = 1;
  expect_token(in, "dims");
  if (!(in >> d.modalities >> d.window_len >> d.encoder_hidden >> d.feat_dim >> d.head_hidden >> d.classes >>
        d.dropout >> second >> norm))
    throw IoError("checkpoint: malformed dims record");
  d.second_classifier = second != 0;
  d.batch_norm = norm != 0;
  expect_token(in, "input_dims");
  d.input_dims.resize(d.modalities);
  for (auto& v : d.input_dims)
    if (!(in >> v)) throw IoError("checkpoint: malformed input_dims record");

  ModelBundle bundle(d, 0);
  for (auto& p : bundle.parameters()) {
    std::string name;
    std::size_t rank = 0;
    expect_token(in, "param");
    if (!(in >> name >> rank) || name != p.name)
      throw IoError("checkpoint: expected parameter " + p.name + ", found " + name);
    Shape shape(rank);
    for (auto& e : shape) in >> e;
    if (shape != p.tensor.shape())
      throw IoError("checkpoint: parameter " + name + " has shape " + shape_string(shape) + ", model expects " +
                    shape_string(p.tensor.shape()));
    const auto values = read_values(in, p.tensor.size(), name);
    auto dst = p.tensor.mutable_values();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  for (auto& [name, state] : bundle.batch_norm_states()) {
    std::string got;
    std::size_t channels = 0;
    expect_token(in, "batchnorm");
    if (!(in >> got >> channels >> state->momentum >> state->epsilon) || got != name ||
        channels != state->channels())
      throw IoError("checkpoint: malformed batch-norm record for " + name);
    state->running_mean = read_values(in, channels, name + ".mean");
    state->running_var = read_values(in, channels, name + ".var");
  }
  expect_token(in, "end");
  return bundle;
}

}  // namespace mmsada
