#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "mmsada/atomic_file.hpp"
#include "mmsada/errors.hpp"
#include "mmsada/synthdata.hpp"

namespace mmsada {
namespace {

constexpr const char* kMagic = "mmsada-dataset";
constexpr int kVersion = 1;

void write_row(std::ostringstream& os, std::span<const double> values) {
  char buf[32];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    os << (i ? " " : "") << buf;
  }
  os << '\n';
}

std::vector<double> read_row(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<double> v(n);
  for (auto& x : v)
    if (!(in >> x)) throw IoError("dataset: truncated " + what);
  return v;
}

void expect(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) throw IoError("dataset: expected '" + token + "', found '" + got + "'");
}

}  // namespace

void save_dataset(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kMagic << ' ' << kVersion << '\n';
  os << "domain " << ds.spec.domain_id << '\n';
  os << "classes " << ds.classes() << '\n';
  const ActionSegment& first = ds.train.empty() ? ds.test.at(0) : ds.train.front();
  os << "dims";
  for (std::size_t m = 0; m < first.modalities(); ++m) os << ' ' << first.input_dim(m);
  os << '\n';
  os << "counts " << ds.train.size() << ' ' << ds.test.size() << '\n';
  os << "prior ";
  write_row(os, ds.class_prior);
  os << "rotation " << ds.appearance.bias.size() << '\n';
  write_row(os, ds.appearance.rotation);
  write_row(os, ds.appearance.bias);
  auto dump = [&](const std::vector<ActionSegment>& segs, const char* split) {
    for (const auto& s : segs) {
      os << "segment " << s.id() << ' ' << split << ' ' << s.label(LabelUse::evaluation) << ' ' << s.length() << '\n';
      for (std::size_t m = 0; m < s.modalities(); ++m) write_row(os, s.stream(m));
    }
  };
  dump(ds.train, "train");
  dump(ds.test, "test");
  os << "end\n";
  write_file_atomically(path, os.str());
}

DomainDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw IoError(path.string() + " is not a dataset file");
  if (version != kVersion) throw IoError("unsupported dataset version " + std::to_string(version));

  DomainDataset ds;
  ds.audit = std::make_shared<LabelAudit>();
  expect(in, "domain");
  in >> ds.spec.domain_id;
  expect(in, "classes");
  in >> ds.spec.class_count;
  expect(in, "dims");
  std::vector<std::size_t> dims;
  std::string line;
  std::getline(in, line);
  {
    std::istringstream ls(line);
    std::size_t d;
    while (ls >> d) dims.push_back(d);
  }
  if (dims.empty()) throw IoError("dataset: empty dims record");
  std::size_t n_train = 0, n_test = 0;
  expect(in, "counts");
  if (!(in >> n_train >> n_test)) throw IoError("dataset: malformed counts");
  ds.spec.train_segments = n_train;
  ds.spec.test_segments = n_test;
  expect(in, "prior");
  ds.class_prior = read_row(in, ds.spec.class_count, "prior");
  ds.spec.class_prior = ds.class_prior;
  std::size_t rot_dim = 0;
  expect(in, "rotation");
  in >> rot_dim;
  ds.appearance.rotation = read_row(in, rot_dim * rot_dim, "rotation");
  ds.appearance.bias = read_row(in, rot_dim, "bias");
  ds.spec.appearance = ds.appearance;

  for (std::size_t i = 0; i < n_train + n_test; ++i) {
    std::size_t id = 0, label = 0, length = 0;
    std::string split;
    expect(in, "segment");
    if (!(in >> id >> split >> label >> length) || (split != "train" && split != "test") || length == 0)
      throw IoError("dataset: malformed segment header");
    if (label >= ds.spec.class_count) throw IoError("dataset: segment label out of range");
    std::vector<std::vector<double>> streams;
    for (std::size_t d : dims) streams.push_back(read_row(in, length * d, "segment stream"));
    ActionSegment seg(id, ds.spec.domain_id, label, length, std::move(streams), ds.audit);
    (split == "train" ? ds.train : ds.test).push_back(std::move(seg));
  }
  expect(in, "end");
  if (ds.train.size() != n_train || ds.test.size() != n_test) throw IoError("dataset: split counts do not match");
  return ds;
}

}  // namespace mmsada
