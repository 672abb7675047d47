#include "sparselock/tensor.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace sparselock {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'T', 'N'};
constexpr std::uint8_t kVersion = 1;

void check_dims(const std::vector<int>& dims) {
  if (dims.empty() || dims.size() > 3) {
    throw ShapeError("tensor rank must be 1..3");
  }
  for (int d : dims) {
    if (d <= 0) throw ShapeError("tensor extents must be positive");
  }
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
               static_cast<char>(v >> 24)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("truncated tensor file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Tensor::Tensor(std::vector<int> d, std::vector<Value> v) : dims(std::move(d)), values(std::move(v)) {
  check_dims(dims);
  if (dims_product(dims) != values.size()) {
    throw ShapeError("value count does not match extents");
  }
}

Tensor Tensor::zeros(std::vector<int> d) {
  check_dims(d);
  std::size_t n = dims_product(d);
  return Tensor(std::move(d), std::vector<Value>(n, 0));
}

std::size_t dims_product(const std::vector<int>& dims) {
  std::size_t n = 1;
  for (int d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

Tensor make_impulse(const std::vector<int>& dims, const std::vector<int>& pos, Value v) {
  Tensor t = Tensor::zeros(dims);
  if (pos.size() != dims.size()) throw ShapeError("impulse position rank mismatch");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (pos[i] < 0 || pos[i] >= dims[i]) throw DomainError("impulse position out of range");
    idx = idx * static_cast<std::size_t>(dims[i]) + static_cast<std::size_t>(pos[i]);
  }
  t.values[idx] = v;
  return t;
}

std::size_t nnz(const Tensor& t) {
  std::size_t n = 0;
  for (Value v : t.values) n += (v != 0);
  return n;
}

double sparsity_of(const Tensor& t) {
  if (t.values.empty()) return 0.0;
  return 1.0 - static_cast<double>(nnz(t)) / static_cast<double>(t.values.size());
}

std::vector<std::uint8_t> tensor_bytes(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(t.values.size() * 4);
  for (Value v : t.values) {
    auto u = static_cast<std::uint32_t>(v);
    out.push_back(static_cast<std::uint8_t>(u));
    out.push_back(static_cast<std::uint8_t>(u >> 8));
    out.push_back(static_cast<std::uint8_t>(u >> 16));
    out.push_back(static_cast<std::uint8_t>(u >> 24));
  }
  return out;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  check_dims(t.dims);
  os.write(kMagic, 4);
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(t.dims.size()));
  for (int d : t.dims) put_u32(os, static_cast<std::uint32_t>(d));
  for (Value v : t.values) put_u32(os, static_cast<std::uint32_t>(v));
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw IoError("bad tensor magic");
  }
  int version = is.get();
  if (version != kVersion) throw IoError("unsupported tensor version");
  int rank = is.get();
  if (rank < 1 || rank > 3) throw IoError("bad tensor rank");
  std::vector<int> dims(static_cast<std::size_t>(rank));
  for (int& d : dims) d = static_cast<int>(get_u32(is));
  std::size_t n = dims_product(dims);
  std::vector<Value> values(n);
  for (Value& v : values) v = static_cast<Value>(get_u32(is));
  return Tensor(std::move(dims), std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_tensor(is);
}

std::vector<NamedTensor> read_tensor_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<NamedTensor> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("bad JSON line in " + path);
    NamedTensor nt;
    nt.name = j.value("name", "");
    std::vector<int> dims = j.at("dims").get<std::vector<int>>();
    std::vector<Value> values = j.at("values").get<std::vector<Value>>();
    nt.tensor = Tensor(std::move(dims), std::move(values));
    out.push_back(std::move(nt));
  }
  return out;
}

void write_tensor_jsonl(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  for (const auto& nt : tensors) {
    nlohmann::ordered_json j;
    j["name"] = nt.name;
    j["dims"] = nt.tensor.dims;
    j["values"] = nt.tensor.values;
    os << j.dump() << '\n';
  }
}

}  // namespace sparselock
