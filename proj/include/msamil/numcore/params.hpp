#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msamil/numcore/tensor.hpp"
#include "msamil/rng.hpp"

namespace msamil::numcore {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered collection of named learnable tensors. Insertion order is the
/// serialization order and the optimizer order.
class ParamStore {
 public:
  Tensor& add(std::string name, Tensor t);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<Tensor> tensors() const;
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t scalar_count() const;

  void zero_grads();
  void clear_grads();
  // Copies values from other (same names and shapes) into this store's tensors.
  void assign_from(const ParamStore& other);
  ParamStore deep_copy() const;

 private:
  std::vector<NamedTensor> entries_;
};

// Glorot-uniform for fan_in x fan_out weights.
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
// He-uniform on fan_in, for conv kernels feeding a SiLU.
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);
Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

/// Parameter file: "MSMP", u32 version=1, u32 count, then a name table of
/// (u32 name length, name bytes, u32 rank, u32 extents...) and finally every
/// tensor's values as little-endian float64 in table order.
void save_params(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);
// Loads into an existing store; names and shapes must match exactly.
void load_params_into(ParamStore& store, const std::filesystem::path& path);

// FNV-1a over names, shapes and value bytes.
std::uint64_t params_hash(const ParamStore& store);

// Sum of squared values over the store, and over the elementwise difference of two stores.
double l2_norm(const ParamStore& store);
double l2_distance(const ParamStore& a, const ParamStore& b);

}  // namespace msamil::numcore
