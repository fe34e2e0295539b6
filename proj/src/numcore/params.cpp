#include "msamil/numcore/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "msamil/errors.hpp"

namespace msamil::numcore {

Tensor& ParamStore::add(std::string name, Tensor t) {
  if (contains(name)) throw Error(ErrorKind::Config, "duplicate parameter " + name);
  t.set_requires_grad(true);
  entries_.push_back({std::move(name), std::move(t)});
  return entries_.back().tensor;
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw Error(ErrorKind::MissingInput, "no parameter named " + name);
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw Error(ErrorKind::MissingInput, "no parameter named " + name);
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::clear_grads() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

void ParamStore::assign_from(const ParamStore& other) {
  for (auto& e : entries_) {
    const Tensor& src = other.get(e.name);
    if (src.shape() != e.tensor.shape()) {
      throw Error(ErrorKind::Format, "shape mismatch for " + e.name + ": " + shape_str(src.shape()) +
                                         " vs " + shape_str(e.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), e.tensor.mutable_data().begin());
  }
}

ParamStore ParamStore::deep_copy() const {
  ParamStore out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.detach());
  return out;
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform_tensor({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  return uniform_tensor(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

namespace {

constexpr char kMagic[4] = {'M', 'S', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error(ErrorKind::Format, "truncated parameter file " + path.string());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorKind::Format, "truncated parameter file " + path.string());
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_params(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto ext : e.tensor.shape()) put_u32(os, static_cast<std::uint32_t>(ext));
  }
  for (const auto& e : store.entries())
    for (double v : e.tensor.data()) put_f64(os, v);
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::Format, "bad magic in parameter file " + path.string());
  }
  const auto version = get_u32(is, path);
  if (version != kVersion) throw Error(ErrorKind::Format, "unsupported parameter file version " + std::to_string(version));
  const auto count = get_u32(is, path);
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_u32(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw Error(ErrorKind::Format, "truncated name table in " + path.string());
    const auto rank = get_u32(is, path);
    Shape shape(rank);
    for (auto& ext : shape) ext = get_u32(is, path);
    table.emplace_back(std::move(name), std::move(shape));
  }
  ParamStore store;
  for (auto& [name, shape] : table) {
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = get_f64(is, path);
    store.add(name, Tensor(shape, std::move(values)));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::Format, "trailing bytes in parameter file " + path.string());
  }
  return store;
}

void load_params_into(ParamStore& store, const std::filesystem::path& path) {
  const ParamStore loaded = load_params(path);
  if (loaded.entries().size() != store.entries().size()) {
    throw Error(ErrorKind::Format, "parameter count mismatch in " + path.string());
  }
  store.assign_from(loaded);
}

std::uint64_t params_hash(const ParamStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : store.entries()) {
    feed(e.name.data(), e.name.size());
    for (auto ext : e.tensor.shape()) {
      const auto x = static_cast<std::uint64_t>(ext);
      feed(&x, sizeof x);
    }
    feed(e.tensor.data().data(), e.tensor.size() * sizeof(double));
  }
  return h;
}

double l2_norm(const ParamStore& store) {
  double s = 0.0;
  for (const auto& e : store.entries())
    for (double v : e.tensor.data()) s += v * v;
  return std::sqrt(s);
}

double l2_distance(const ParamStore& a, const ParamStore& b) {
  double s = 0.0;
  for (const auto& e : a.entries()) {
    const auto other = b.get(e.name).data();
    const auto mine = e.tensor.data();
    if (other.size() != mine.size()) throw Error(ErrorKind::Dimension, "l2_distance: size mismatch for " + e.name);
    for (std::size_t i = 0; i < mine.size(); ++i) {
      const double d = mine[i] - other[i];
      s += d * d;
    }
  }
  return std::sqrt(s);
}

}  // namespace msamil::numcore
