#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sparselock/tensor.hpp"

namespace sparselock::compress {

enum class Codec : std::uint8_t {
  Bdi = 0,
  Fpc = 1,
  Rle = 2,
  Huffman = 3,
  HybridSparse = 4,
  HybridDense = 5,
};

struct CompressedBlock {
  Codec algorithm{};
  std::uint32_t original_size = 0;
  std::vector<std::uint8_t> payload;
};

// original_size / payload size; payload includes all per-granule headers.
double compression_ratio(const CompressedBlock& b);

// Wire format: tag byte, u32le original size, payload.
std::vector<std::uint8_t> serialize_block(const CompressedBlock& b);
CompressedBlock deserialize_block(std::span<const std::uint8_t> bytes);

inline constexpr std::size_t kBdiGranule = 32;

// Base-delta-immediate over 32-byte granules. Per granule: one encoding byte
// then the encoding payload. Input length must be a granule multiple.
CompressedBlock bdi_compress(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> bdi_decompress(const CompressedBlock& b);

// Frequent-pattern compression over 32-bit words, 3-bit prefix per token.
// Input length must be a word multiple. Zero runs cap at 8 words.
CompressedBlock fpc_compress(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> fpc_decompress(const CompressedBlock& b);

// Byte run-length pairs with a raw escape so the payload never exceeds the
// input by more than the 1-byte mode header. Input must be nonempty.
CompressedBlock rle_compress(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> rle_decompress(const CompressedBlock& b);

// Canonical Huffman over byte symbols (characterization baseline).
CompressedBlock huffman_compress(std::span<const std::uint8_t> data);
std::vector<std::uint8_t> huffman_decompress(const CompressedBlock& b);
// code length per symbol value (0 for absent symbols); exposed for tests
std::vector<int> huffman_code_lengths(std::span<const std::uint8_t> data);

struct CscEncoding {
  std::vector<Value> nnz_values;         // column-major nonzeros
  std::vector<std::int32_t> row_ids;     // row of each nonzero
  std::vector<std::int32_t> col_counts;  // nonzeros per column
};

CscEncoding csc_encode(const Tensor& m);  // rank 2
Tensor csc_decode(const CscEncoding& e, const std::vector<int>& dims);

enum class HybridMode : std::uint8_t { Sparse = 0, Dense = 1 };

// Two-level scheme. Sparse: CSC, then BDI over nnz values, BDI over row ids,
// FPC over col counts (as 32-bit words); the three level-2 segments are
// independently decodable. Dense: BDI over the raw tile bytes. Payload:
// mode byte, three u32le segment lengths, segments.
CompressedBlock hybrid_compress(const Tensor& tile, HybridMode mode);
Tensor hybrid_decompress(const CompressedBlock& b, const std::vector<int>& dims);
CompressedBlock hybrid_auto(const Tensor& tile);  // smaller of the two modes

// Content-independent upper bound on the serialized size of hybrid_auto for
// a tile with this many elements (used to size worst-case bin counts).
std::size_t hybrid_worst_size(std::size_t tile_elems);

}  // namespace sparselock::compress
