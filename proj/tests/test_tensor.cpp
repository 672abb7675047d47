#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sparselock/rng.hpp"
#include "sparselock/tensor.hpp"

using namespace sparselock;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* stem) {
  return fs::temp_directory_path() / (std::string("sl_test_") + stem);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction validates rank, extents and value count") {
    CHECK_NOTHROW(Tensor({2, 3}, std::vector<Value>(6, 1)));
    CHECK_THROWS_AS(Tensor({}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<Value>(5, 1)), ShapeError);
    CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, -3}, std::vector<Value>(6, 1)), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2, 2, 2}, std::vector<Value>(16, 1)), ShapeError);
  }

  TEST_CASE("zeros, accessors and dims_product") {
    Tensor t = Tensor::zeros({3, 4});
    CHECK(t.rank() == 2);
    CHECK(t.size() == 12);
    CHECK(dims_product(t.dims) == 12);
    t.at(2, 3) = -7;
    CHECK(t.at(2, 3) == -7);
    CHECK(t.values[11] == -7);  // row-major
    Tensor v = Tensor::zeros({5});
    v.at(4) = 9;
    CHECK(v.at(4) == 9);
  }

  TEST_CASE("make_impulse places a single value") {
    Tensor t = make_impulse({4, 6}, {1, 2}, 5);
    CHECK(nnz(t) == 1);
    CHECK(t.at(1, 2) == 5);
    CHECK_THROWS_AS(make_impulse({4, 6}, {1}, 1), ShapeError);
    CHECK_THROWS_AS(make_impulse({4, 6}, {4, 0}, 1), DomainError);
    CHECK_THROWS_AS(make_impulse({4, 6}, {0, -1}, 1), DomainError);
  }

  TEST_CASE("nnz and sparsity_of") {
    Tensor t({2, 2}, {0, 3, 0, -1});
    CHECK(nnz(t) == 2);
    CHECK(sparsity_of(t) == doctest::Approx(0.5));
    CHECK(sparsity_of(Tensor::zeros({8})) == doctest::Approx(1.0));
  }

  TEST_CASE("tensor_bytes is little-endian i32") {
    Tensor t({2}, {0x01020304, -2});
    std::vector<std::uint8_t> b = tensor_bytes(t);
    REQUIRE(b.size() == 8);
    CHECK(b[0] == 0x04);
    CHECK(b[1] == 0x03);
    CHECK(b[2] == 0x02);
    CHECK(b[3] == 0x01);
    // -2 = 0xFFFFFFFE
    CHECK(b[4] == 0xFE);
    CHECK(b[5] == 0xFF);
    CHECK(b[6] == 0xFF);
    CHECK(b[7] == 0xFF);
  }

  TEST_CASE("binary file round-trip") {
    Rng rng(101);
    Tensor t = Tensor::zeros({5, 7});
    for (Value& v : t.values) v = static_cast<Value>(rng.int_in(-100000, 100000));
    fs::path p = temp_file("sltn_rt");
    save_tensor(p.string(), t);
    CHECK(load_tensor(p.string()) == t);
    fs::remove(p);
  }

  TEST_CASE("binary file rejects bad magic and truncation") {
    fs::path p = temp_file("sltn_bad");
    save_tensor(p.string(), Tensor({2}, {1, 2}));
    {
      std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
      f.put('X');
    }
    CHECK_THROWS_AS(load_tensor(p.string()), IoError);

    save_tensor(p.string(), Tensor({4}, {1, 2, 3, 4}));
    fs::resize_file(p, fs::file_size(p) - 6);
    CHECK_THROWS_AS(load_tensor(p.string()), IoError);
    fs::remove(p);
    CHECK_THROWS_AS(load_tensor(p.string()), IoError);  // missing file
  }

  TEST_CASE("jsonl round-trip preserves names and order") {
    std::vector<NamedTensor> in;
    in.push_back({"conv1", Tensor({2, 2}, {1, -2, 3, 0})});
    in.push_back({"conv2", Tensor({3}, {7, 0, -9})});
    fs::path p = temp_file("jsonl_rt");
    write_tensor_jsonl(p.string(), in);
    std::vector<NamedTensor> out = read_tensor_jsonl(p.string());
    REQUIRE(out.size() == 2);
    CHECK(out[0].name == "conv1");
    CHECK(out[0].tensor == in[0].tensor);
    CHECK(out[1].name == "conv2");
    CHECK(out[1].tensor == in[1].tensor);

    std::ofstream(p) << "{not json\n";
    CHECK_THROWS_AS(read_tensor_jsonl(p.string()), IoError);
    fs::remove(p);
  }
}
