#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparselock/error.hpp"

namespace sparselock {

using Value = std::int32_t;

// Dense row-major tensor of 32-bit signed values (quantized activations or
// weights), rank 1..3.
struct Tensor {
  std::vector<int> dims;
  std::vector<Value> values;

  Tensor() = default;
  Tensor(std::vector<int> d, std::vector<Value> v);

  static Tensor zeros(std::vector<int> d);

  int rank() const { return static_cast<int>(dims.size()); }
  std::size_t size() const { return values.size(); }

  Value& at(int i) { return values[static_cast<std::size_t>(i)]; }
  Value at(int i) const { return values[static_cast<std::size_t>(i)]; }
  Value& at(int r, int c) { return values[static_cast<std::size_t>(r) * dims[1] + c]; }
  Value at(int r, int c) const { return values[static_cast<std::size_t>(r) * dims[1] + c]; }

  bool operator==(const Tensor&) const = default;
};

std::size_t dims_product(const std::vector<int>& dims);

Tensor make_impulse(const std::vector<int>& dims, const std::vector<int>& pos, Value v = 1);

std::size_t nnz(const Tensor& t);
double sparsity_of(const Tensor& t);

std::vector<std::uint8_t> tensor_bytes(const Tensor& t);  // values as little-endian i32

// Binary tensor file: magic "SLTN", u8 version, u8 rank, u32le extents, i32le values.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// JSON-lines exchange format, one {"name":..., "dims":[...], "values":[...]}
// object per line; import path for externally pruned layers.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};
std::vector<NamedTensor> read_tensor_jsonl(const std::string& path);
void write_tensor_jsonl(const std::string& path, const std::vector<NamedTensor>& tensors);

}  // namespace sparselock
