#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "dtsda/error.hpp"
#include "dtsda/io.hpp"
#include "dtsda/networks.hpp"

// Layout (little-endian):
//   "DTSDAMDL" u32 version u32 kind u64 arch_hash
//   u64 classes u64 states u64 channels u64 window_len u64 seed
//   u64 n  f64[n] norm mean  f64[n] norm std
//   u64 tensor_count, then per tensor: u64 name_len, name, u64 rank, u64 dims[rank], f64 data[]
//   u32 crc32 over every preceding byte

namespace dtsda::nn {

namespace {

constexpr char kMagic[8] = {'D', 'T', 'S', 'D', 'A', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  Reader(std::span<const unsigned char> b, std::string src) : bytes_(b), source_(std::move(src)) {}
  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const unsigned char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw DataError(source_ + ": model file ends unexpectedly");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
  std::string source_;
};

struct Header {
  ModelConfig config;
  std::uint64_t arch_hash = 0;
  data::NormStats norm;
  std::map<std::string, Tensor> tensors;
};

Header read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + ": not a model file");
  }
  const std::span<const unsigned char> body(bytes.data(), bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (io::crc32(body) != stored) throw DataError(path.string() + ": model checksum mismatch (truncated or corrupt file)");

  Reader r(body, path.string());
  r.take(sizeof(kMagic));
  if (const auto version = r.get<std::uint32_t>(); version != kVersion) {
    throw DataError(path.string() + ": unsupported model version " + std::to_string(version));
  }
  Header h;
  const auto kind = r.get<std::uint32_t>();
  if (kind > 2) throw DataError(path.string() + ": unknown model kind");
  h.config.kind = static_cast<ModelKind>(kind);
  h.arch_hash = r.get<std::uint64_t>();
  h.config.classes = r.get<std::uint64_t>();
  h.config.states = r.get<std::uint64_t>();
  h.config.channels = r.get<std::uint64_t>();
  h.config.window_len = r.get<std::uint64_t>();
  h.config.seed = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  if (n > 1u << 20) throw DataError(path.string() + ": implausible channel count");
  h.norm.mean.resize(n);
  h.norm.stddev.resize(n);
  for (auto& v : h.norm.mean) v = r.get<double>();
  for (auto& v : h.norm.stddev) v = r.get<double>();
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = r.get<std::uint64_t>();
    std::string name(reinterpret_cast<const char*>(r.take(len)), len);
    const auto rank = r.get<std::uint64_t>();
    if (rank > 8) throw DataError(path.string() + ": implausible rank for " + name);
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    Tensor t(shape);
    for (auto& v : t.data) v = r.get<double>();
    if (!h.tensors.emplace(name, std::move(t)).second) throw DataError(path.string() + ": duplicate tensor " + name);
  }
  if (!r.done()) throw DataError(path.string() + ": trailing bytes in model file");
  return h;
}

}  // namespace

std::uint64_t architecture_hash(Model& model) {
  std::string desc;
  model.visit([&](const std::string& name, Tensor& t) { desc += name + ad::shape_str(t.shape) + ";"; });
  const std::span<const unsigned char> bytes(reinterpret_cast<const unsigned char*>(desc.data()), desc.size());
  return (static_cast<std::uint64_t>(io::crc32(bytes)) << 32) | io::crc32(bytes, 0x9e3779b9u);
}

void save_model(Model& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(c.kind));
  w.put(architecture_hash(model));
  for (std::uint64_t v : {std::uint64_t{c.classes}, std::uint64_t{c.states}, std::uint64_t{c.channels},
                          std::uint64_t{c.window_len}, c.seed}) {
    w.put(v);
  }
  if (model.norm.mean.size() != model.norm.stddev.size()) throw ShapeError("save_model: inconsistent normalisation stats");
  w.put(static_cast<std::uint64_t>(model.norm.mean.size()));
  for (double v : model.norm.mean) w.put(v);
  for (double v : model.norm.stddev) w.put(v);
  std::uint64_t count = 0;
  model.visit([&](const std::string&, Tensor&) { ++count; });
  w.put(count);
  model.visit([&](const std::string& name, Tensor& t) {
    w.put(static_cast<std::uint64_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put(static_cast<std::uint64_t>(t.rank()));
    for (auto d : t.shape) w.put(static_cast<std::uint64_t>(d));
    w.put_bytes(t.data.data(), t.data.size() * sizeof(double));
  });
  w.put(io::crc32(w.bytes));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write model file " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw DataError("failed writing model file " + path.string());
}

namespace {

void install(Model& model, Header& h, const std::filesystem::path& path) {
  std::set<std::string> expected;
  model.visit([&](const std::string& name, Tensor& t) {
    expected.insert(name);
    const auto it = h.tensors.find(name);
    if (it == h.tensors.end()) throw DataError(path.string() + ": missing tensor " + name);
    if (it->second.shape != t.shape) {
      throw ShapeError(path.string() + ": tensor " + name + " has shape " + ad::shape_str(it->second.shape) +
                       ", model expects " + ad::shape_str(t.shape));
    }
  });
  for (const auto& [name, t] : h.tensors)
    if (!expected.count(name)) throw DataError(path.string() + ": unexpected tensor " + name);
  model.visit([&](const std::string& name, Tensor& t) { t = h.tensors.at(name); });
  for (auto* p : model.parameters()) p->zero_grad();
  model.norm = h.norm;
  model.trained = true;
}

}  // namespace

void load_model_into(Model& model, const std::filesystem::path& path) {
  auto h = read_file(path);
  install(model, h, path);
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
  auto h = read_file(path);
  auto model = make_model(h.config);
  if (architecture_hash(*model) != h.arch_hash) throw DataError(path.string() + ": architecture hash mismatch");
  install(*model, h, path);
  return model;
}

}  // namespace dtsda::nn
