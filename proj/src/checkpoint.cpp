// SPDX-License-Identifier: Apache-2.0
#include "dualfield/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace dualfield {

namespace {

constexpr char kMagic[8] = {'D', 'F', 'C', 'K', 'P', 'T', '\n', '\0'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <class T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 28)) fail("string too long");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ull << 34)) fail("tensor too large");
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }
  [[noreturn]] void fail(const std::string& what) {
    throw std::runtime_error("checkpoint " + path_ + ": " + what);
  }

 private:
  void check() {
    if (!in_) fail("truncated file");
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

const TensorRecord& Checkpoint::tensor(const std::string& name) const {
  if (const auto* t = find(name)) return *t;
  throw std::runtime_error("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    Writer w(out);
    out.write(kMagic, sizeof kMagic);
    w.pod<std::uint32_t>(Checkpoint::kVersion);
    w.str(ckpt.config_text);
    w.pod<std::int64_t>(ckpt.iteration);
    for (int a = 0; a < 3; ++a) w.pod<double>(ckpt.bounds.min[a]);
    for (int a = 0; a < 3; ++a) w.pod<double>(ckpt.bounds.max[a]);
    w.pod<std::uint64_t>(ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
      if (t.value.size() != t.shape.rows * t.shape.cols)
        throw std::logic_error("checkpoint tensor '" + t.name + "' has inconsistent shape");
      w.str(t.name);
      w.pod<std::uint8_t>(static_cast<std::uint8_t>(t.group));
      w.pod<std::uint64_t>(t.shape.rows);
      w.pod<std::uint64_t>(t.shape.cols);
      w.doubles(t.value);
      w.doubles(t.m);
      w.doubles(t.v);
      w.pod<std::int64_t>(t.step);
    }
    if (!out) throw std::runtime_error("error writing " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  Reader r(in, path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != Checkpoint::kVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint c;
  c.config_text = r.str();
  c.iteration = r.pod<std::int64_t>();
  for (int a = 0; a < 3; ++a) c.bounds.min[a] = r.pod<double>();
  for (int a = 0; a < 3; ++a) c.bounds.max[a] = r.pod<double>();
  const auto n = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    TensorRecord t;
    t.name = r.str();
    const auto g = r.pod<std::uint8_t>();
    if (g > 2) r.fail("bad group tag for '" + t.name + "'");
    t.group = static_cast<ad::Group>(g);
    t.shape.rows = r.pod<std::uint64_t>();
    t.shape.cols = r.pod<std::uint64_t>();
    t.value = r.doubles();
    t.m = r.doubles();
    t.v = r.doubles();
    t.step = r.pod<std::int64_t>();
    if (t.value.size() != t.shape.rows * t.shape.cols) r.fail("shape mismatch for '" + t.name + "'");
    if (!t.m.empty() && (t.m.size() != t.value.size() || t.v.size() != t.value.size()))
      r.fail("optimizer state size mismatch for '" + t.name + "'");
    c.tensors.push_back(std::move(t));
  }
  return c;
}

}  // namespace dualfield
