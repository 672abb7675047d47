#include "sparselock/compress.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <numeric>
#include <queue>

namespace sparselock::compress {

namespace {

std::uint64_t get_le(const std::uint8_t* p, int width) {
  std::uint64_t v = 0;
  for (int i = width - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) { put_le(out, v, 4); }

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t off) {
  if (off + 4 > bytes.size()) throw CodecError("truncated block");
  return static_cast<std::uint32_t>(get_le(bytes.data() + off, 4));
}

bool fits_signed(std::int64_t v, int bytes) {
  std::int64_t lim = std::int64_t{1} << (8 * bytes - 1);
  return v >= -lim && v < lim;
}

// ---- BDI -------------------------------------------------------------------

enum BdiEnc : std::uint8_t {
  kZero = 0,
  kRep8 = 1,
  kB8D1 = 2,
  kB8D2 = 3,
  kB8D4 = 4,
  kB4D1 = 5,
  kB4D2 = 6,
  kB2D1 = 7,
  kRaw = 8,
};

struct BdiPlan {
  BdiEnc enc;
  int unit;    // base width in bytes (0 for zero/raw)
  int delta;   // delta width in bytes
  int payload; // bytes after the header byte
};

constexpr BdiPlan kBdiPlans[] = {
    {kZero, 0, 0, 0},  {kRep8, 8, 0, 8},  {kB8D1, 8, 1, 12}, {kB8D2, 8, 2, 16}, {kB8D4, 8, 4, 24},
    {kB4D1, 4, 1, 12}, {kB4D2, 4, 2, 20}, {kB2D1, 2, 1, 18}, {kRaw, 0, 0, 32},
};

bool bdi_granule_matches(const std::uint8_t* g, const BdiPlan& plan) {
  switch (plan.enc) {
    case kZero:
      for (int i = 0; i < 32; ++i)
        if (g[i] != 0) return false;
      return true;
    case kRep8: {
      std::uint64_t first = get_le(g, 8);
      for (int u = 1; u < 4; ++u)
        if (get_le(g + 8 * u, 8) != first) return false;
      return true;
    }
    case kRaw:
      return true;
    default: {
      int n_units = 32 / plan.unit;
      std::uint64_t base = get_le(g, plan.unit);
      for (int u = 0; u < n_units; ++u) {
        std::uint64_t w = get_le(g + plan.unit * u, plan.unit);
        auto d = static_cast<std::int64_t>(w - base);
        // wrap differences at the unit width before range-checking
        if (plan.unit < 8) {
          std::uint64_t mask = (std::uint64_t{1} << (8 * plan.unit)) - 1;
          std::uint64_t wrapped = (w - base) & mask;
          std::int64_t half = std::int64_t{1} << (8 * plan.unit - 1);
          d = static_cast<std::int64_t>(wrapped);
          if (d >= half) d -= std::int64_t{1} << (8 * plan.unit);
        }
        if (!fits_signed(d, plan.delta)) return false;
      }
      return true;
    }
  }
}

void bdi_granule_encode(const std::uint8_t* g, const BdiPlan& plan, std::vector<std::uint8_t>& out) {
  out.push_back(plan.enc);
  switch (plan.enc) {
    case kZero:
      return;
    case kRep8:
      out.insert(out.end(), g, g + 8);
      return;
    case kRaw:
      out.insert(out.end(), g, g + 32);
      return;
    default: {
      int n_units = 32 / plan.unit;
      std::uint64_t base = get_le(g, plan.unit);
      put_le(out, base, plan.unit);
      for (int u = 0; u < n_units; ++u) {
        std::uint64_t w = get_le(g + plan.unit * u, plan.unit);
        put_le(out, w - base, plan.delta);
      }
      return;
    }
  }
}

// ---- bitstream (MSB-first) -------------------------------------------------

struct BitWriter {
  std::vector<std::uint8_t> bytes;
  int used = 0;  // bits filled in the trailing byte

  void put(std::uint64_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) {
      if (used == 0) bytes.push_back(0);
      int bit = static_cast<int>((value >> i) & 1);
      bytes.back() = static_cast<std::uint8_t>(bytes.back() | (bit << (7 - used)));
      used = (used + 1) % 8;
    }
  }
};

struct BitReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;  // bit cursor

  std::uint64_t get(int nbits) {
    std::uint64_t v = 0;
    for (int i = 0; i < nbits; ++i) {
      std::size_t byte = pos / 8;
      if (byte >= bytes.size()) throw CodecError("bitstream underrun");
      int bit = (bytes[byte] >> (7 - pos % 8)) & 1;
      v = (v << 1) | static_cast<std::uint64_t>(bit);
      ++pos;
    }
    return v;
  }
};

// ---- FPC token classification ----------------------------------------------

std::int32_t sext(std::uint32_t v, int bits) {
  int sh = 32 - bits;
  return static_cast<std::int32_t>(v << sh) >> sh;
}

bool word_fits_se(std::uint32_t w, int bits) {
  return static_cast<std::uint32_t>(sext(w & ((bits == 32) ? ~0u : ((1u << bits) - 1)), bits)) == w;
}

// ---- canonical Huffman -----------------------------------------------------

struct CanonCode {
  std::uint8_t symbol;
  int length;
  std::uint32_t code;
};

std::vector<CanonCode> canonical_codes(const std::vector<std::pair<std::uint8_t, int>>& sym_lens) {
  std::vector<CanonCode> codes;
  codes.reserve(sym_lens.size());
  for (auto [s, l] : sym_lens) codes.push_back({s, l, 0});
  std::sort(codes.begin(), codes.end(), [](const CanonCode& a, const CanonCode& b) {
    return a.length != b.length ? a.length < b.length : a.symbol < b.symbol;
  });
  std::uint32_t code = 0;
  int prev_len = codes.empty() ? 0 : codes.front().length;
  for (auto& c : codes) {
    code <<= (c.length - prev_len);
    prev_len = c.length;
    c.code = code++;
  }
  return codes;
}

std::vector<int> lengths_from_counts(const std::array<std::uint64_t, 256>& counts) {
  struct Node {
    std::uint64_t freq;
    int order;
    int left = -1, right = -1;
    int symbol = -1;
  };
  std::vector<Node> nodes;
  for (int s = 0; s < 256; ++s) {
    if (counts[static_cast<std::size_t>(s)] > 0) {
      nodes.push_back({counts[static_cast<std::size_t>(s)], static_cast<int>(nodes.size()), -1, -1, s});
    }
  }
  std::vector<int> lengths(256, 0);
  if (nodes.empty()) return lengths;
  if (nodes.size() == 1) {
    lengths[static_cast<std::size_t>(nodes[0].symbol)] = 1;
    return lengths;
  }
  auto cmp = [&](int a, int b) {
    if (nodes[static_cast<std::size_t>(a)].freq != nodes[static_cast<std::size_t>(b)].freq)
      return nodes[static_cast<std::size_t>(a)].freq > nodes[static_cast<std::size_t>(b)].freq;
    return nodes[static_cast<std::size_t>(a)].order > nodes[static_cast<std::size_t>(b)].order;
  };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) heap.push(i);
  while (heap.size() > 1) {
    int a = heap.top();
    heap.pop();
    int b = heap.top();
    heap.pop();
    Node parent;
    parent.freq = nodes[static_cast<std::size_t>(a)].freq + nodes[static_cast<std::size_t>(b)].freq;
    parent.order = static_cast<int>(nodes.size());
    parent.left = a;
    parent.right = b;
    nodes.push_back(parent);
    heap.push(static_cast<int>(nodes.size()) - 1);
  }
  // depth-first walk assigns code lengths
  std::vector<std::pair<int, int>> stack{{heap.top(), 0}};
  while (!stack.empty()) {
    auto [idx, depth] = stack.back();
    stack.pop_back();
    const Node& nd = nodes[static_cast<std::size_t>(idx)];
    if (nd.symbol >= 0) {
      lengths[static_cast<std::size_t>(nd.symbol)] = depth;
      continue;
    }
    stack.push_back({nd.left, depth + 1});
    stack.push_back({nd.right, depth + 1});
  }
  return lengths;
}

std::vector<std::uint8_t> pad_to(std::span<const std::uint8_t> data, std::size_t granule) {
  std::vector<std::uint8_t> out(data.begin(), data.end());
  while (out.size() % granule != 0) out.push_back(0);
  return out;
}

std::vector<std::uint8_t> i32_bytes(std::span<const std::int32_t> vals) {
  std::vector<std::uint8_t> out;
  out.reserve(vals.size() * 4);
  for (std::int32_t v : vals) put_u32(out, static_cast<std::uint32_t>(v));
  return out;
}

std::vector<std::int32_t> bytes_i32(std::span<const std::uint8_t> bytes, std::size_t count) {
  if (bytes.size() < count * 4) throw CodecError("segment too short");
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = static_cast<std::int32_t>(get_le(bytes.data() + 4 * i, 4));
  }
  return out;
}

}  // namespace

double compression_ratio(const CompressedBlock& b) {
  if (b.payload.empty()) throw DomainError("empty payload has no ratio");
  return static_cast<double>(b.original_size) / static_cast<double>(b.payload.size());
}

std::vector<std::uint8_t> serialize_block(const CompressedBlock& b) {
  std::vector<std::uint8_t> out;
  out.reserve(5 + b.payload.size());
  out.push_back(static_cast<std::uint8_t>(b.algorithm));
  put_u32(out, b.original_size);
  out.insert(out.end(), b.payload.begin(), b.payload.end());
  return out;
}

CompressedBlock deserialize_block(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5) throw CodecError("block shorter than header");
  if (bytes[0] > static_cast<std::uint8_t>(Codec::HybridDense)) throw CodecError("unknown codec tag");
  CompressedBlock b;
  b.algorithm = static_cast<Codec>(bytes[0]);
  b.original_size = get_u32(bytes, 1);
  b.payload.assign(bytes.begin() + 5, bytes.end());
  return b;
}

CompressedBlock bdi_compress(std::span<const std::uint8_t> data) {
  if (data.size() % kBdiGranule != 0) throw CodecError("bdi input must be 32-byte granules");
  CompressedBlock b;
  b.algorithm = Codec::Bdi;
  b.original_size = static_cast<std::uint32_t>(data.size());
  for (std::size_t off = 0; off < data.size(); off += kBdiGranule) {
    const std::uint8_t* g = data.data() + off;
    const BdiPlan* best = nullptr;
    for (const BdiPlan& plan : kBdiPlans) {
      if ((best == nullptr || plan.payload < best->payload) && bdi_granule_matches(g, plan)) {
        best = &plan;
      }
    }
    bdi_granule_encode(g, *best, b.payload);
  }
  return b;
}

std::vector<std::uint8_t> bdi_decompress(const CompressedBlock& b) {
  if (b.algorithm != Codec::Bdi) throw CodecError("not a bdi block");
  std::vector<std::uint8_t> out;
  out.reserve(b.original_size);
  std::size_t pos = 0;
  const auto& p = b.payload;
  while (out.size() < b.original_size) {
    if (pos >= p.size()) throw CodecError("bdi payload underrun");
    auto enc = static_cast<BdiEnc>(p[pos++]);
    if (enc > kRaw) throw CodecError("bad bdi encoding byte");
    const BdiPlan& plan = kBdiPlans[enc];
    switch (enc) {
      case kZero:
        out.insert(out.end(), kBdiGranule, 0);
        break;
      case kRep8: {
        if (pos + 8 > p.size()) throw CodecError("bdi payload underrun");
        for (int u = 0; u < 4; ++u) out.insert(out.end(), p.begin() + pos, p.begin() + pos + 8);
        pos += 8;
        break;
      }
      case kRaw:
        if (pos + 32 > p.size()) throw CodecError("bdi payload underrun");
        out.insert(out.end(), p.begin() + pos, p.begin() + pos + 32);
        pos += 32;
        break;
      default: {
        if (pos + static_cast<std::size_t>(plan.payload) > p.size())
          throw CodecError("bdi payload underrun");
        std::uint64_t base = get_le(p.data() + pos, plan.unit);
        pos += static_cast<std::size_t>(plan.unit);
        int n_units = 32 / plan.unit;
        for (int u = 0; u < n_units; ++u) {
          std::uint64_t d = get_le(p.data() + pos, plan.delta);
          pos += static_cast<std::size_t>(plan.delta);
          // sign-extend the stored delta
          std::uint64_t half = std::uint64_t{1} << (8 * plan.delta - 1);
          if (d & half) d |= ~((std::uint64_t{1} << (8 * plan.delta)) - 1);
          put_le(out, base + d, plan.unit);
        }
        break;
      }
    }
  }
  if (out.size() != b.original_size) throw CodecError("bdi size mismatch");
  return out;
}

CompressedBlock fpc_compress(std::span<const std::uint8_t> data) {
  if (data.size() % 4 != 0) throw CodecError("fpc input must be 32-bit words");
  std::size_t n_words = data.size() / 4;
  BitWriter bw;
  std::size_t i = 0;
  while (i < n_words) {
    auto w = static_cast<std::uint32_t>(get_le(data.data() + 4 * i, 4));
    if (w == 0) {
      std::size_t run = 1;
      while (run < 8 && i + run < n_words && get_le(data.data() + 4 * (i + run), 4) == 0) ++run;
      bw.put(0b000, 3);
      bw.put(run - 1, 3);
      i += run;
      continue;
    }
    if (word_fits_se(w, 4)) {
      bw.put(0b001, 3);
      bw.put(w & 0xF, 4);
    } else if (word_fits_se(w, 8)) {
      bw.put(0b010, 3);
      bw.put(w & 0xFF, 8);
    } else if (word_fits_se(w, 16)) {
      bw.put(0b011, 3);
      bw.put(w & 0xFFFF, 16);
    } else if ((w & 0xFFFF) == 0) {
      bw.put(0b100, 3);
      bw.put(w >> 16, 16);
    } else {
      std::uint32_t lo = w & 0xFFFF, hi = w >> 16;
      bool halves = static_cast<std::uint16_t>(sext(lo & 0xFF, 8)) == lo &&
                    static_cast<std::uint16_t>(sext(hi & 0xFF, 8)) == hi;
      std::uint8_t b0 = static_cast<std::uint8_t>(w), b1 = static_cast<std::uint8_t>(w >> 8),
                   b2 = static_cast<std::uint8_t>(w >> 16), b3 = static_cast<std::uint8_t>(w >> 24);
      if (halves) {
        bw.put(0b101, 3);
        bw.put(lo & 0xFF, 8);
        bw.put(hi & 0xFF, 8);
      } else if (b0 == b1 && b1 == b2 && b2 == b3) {
        bw.put(0b110, 3);
        bw.put(b0, 8);
      } else {
        bw.put(0b111, 3);
        bw.put(w, 32);
      }
    }
    ++i;
  }
  CompressedBlock b;
  b.algorithm = Codec::Fpc;
  b.original_size = static_cast<std::uint32_t>(data.size());
  b.payload = std::move(bw.bytes);
  return b;
}

std::vector<std::uint8_t> fpc_decompress(const CompressedBlock& b) {
  if (b.algorithm != Codec::Fpc) throw CodecError("not an fpc block");
  if (b.original_size % 4 != 0) throw CodecError("bad fpc original size");
  std::size_t n_words = b.original_size / 4;
  BitReader br{b.payload};
  std::vector<std::uint8_t> out;
  out.reserve(b.original_size);
  std::size_t emitted = 0;
  while (emitted < n_words) {
    auto prefix = br.get(3);
    std::uint32_t w = 0;
    switch (prefix) {
      case 0b000: {
        auto run = br.get(3) + 1;
        if (emitted + run > n_words) throw CodecError("fpc zero run overflow");
        for (std::uint64_t r = 0; r < run; ++r) put_u32(out, 0);
        emitted += run;
        continue;
      }
      case 0b001:
        w = static_cast<std::uint32_t>(sext(static_cast<std::uint32_t>(br.get(4)), 4));
        break;
      case 0b010:
        w = static_cast<std::uint32_t>(sext(static_cast<std::uint32_t>(br.get(8)), 8));
        break;
      case 0b011:
        w = static_cast<std::uint32_t>(sext(static_cast<std::uint32_t>(br.get(16)), 16));
        break;
      case 0b100:
        w = static_cast<std::uint32_t>(br.get(16)) << 16;
        break;
      case 0b101: {
        auto lo = static_cast<std::uint32_t>(sext(static_cast<std::uint32_t>(br.get(8)), 8)) & 0xFFFF;
        auto hi = static_cast<std::uint32_t>(sext(static_cast<std::uint32_t>(br.get(8)), 8)) & 0xFFFF;
        w = (hi << 16) | lo;
        break;
      }
      case 0b110: {
        auto byte = static_cast<std::uint32_t>(br.get(8));
        w = byte | (byte << 8) | (byte << 16) | (byte << 24);
        break;
      }
      default:
        w = static_cast<std::uint32_t>(br.get(32));
        break;
    }
    put_u32(out, w);
    ++emitted;
  }
  return out;
}

CompressedBlock rle_compress(std::span<const std::uint8_t> data) {
  if (data.empty()) throw CodecError("rle input must be nonempty");
  std::vector<std::uint8_t> pairs;
  std::size_t i = 0;
  while (i < data.size()) {
    std::size_t run = 1;
    while (run < 255 && i + run < data.size() && data[i + run] == data[i]) ++run;
    pairs.push_back(static_cast<std::uint8_t>(run));
    pairs.push_back(data[i]);
    i += run;
  }
  CompressedBlock b;
  b.algorithm = Codec::Rle;
  b.original_size = static_cast<std::uint32_t>(data.size());
  if (pairs.size() >= data.size()) {
    b.payload.push_back(1);  // raw escape
    b.payload.insert(b.payload.end(), data.begin(), data.end());
  } else {
    b.payload.push_back(0);
    b.payload.insert(b.payload.end(), pairs.begin(), pairs.end());
  }
  return b;
}

std::vector<std::uint8_t> rle_decompress(const CompressedBlock& b) {
  if (b.algorithm != Codec::Rle) throw CodecError("not an rle block");
  if (b.payload.empty()) throw CodecError("rle payload missing mode byte");
  std::vector<std::uint8_t> out;
  out.reserve(b.original_size);
  if (b.payload[0] == 1) {
    out.assign(b.payload.begin() + 1, b.payload.end());
  } else if (b.payload[0] == 0) {
    if ((b.payload.size() - 1) % 2 != 0) throw CodecError("odd rle pair bytes");
    for (std::size_t i = 1; i + 1 < b.payload.size(); i += 2) {
      out.insert(out.end(), b.payload[i], b.payload[i + 1]);
    }
  } else {
    throw CodecError("bad rle mode byte");
  }
  if (out.size() != b.original_size) throw CodecError("rle size mismatch");
  return out;
}

std::vector<int> huffman_code_lengths(std::span<const std::uint8_t> data) {
  std::array<std::uint64_t, 256> counts{};
  for (std::uint8_t byte : data) ++counts[byte];
  return lengths_from_counts(counts);
}

CompressedBlock huffman_compress(std::span<const std::uint8_t> data) {
  std::vector<int> lengths = huffman_code_lengths(data);
  std::vector<std::pair<std::uint8_t, int>> sym_lens;
  for (int s = 0; s < 256; ++s) {
    if (lengths[static_cast<std::size_t>(s)] > 0) {
      sym_lens.push_back({static_cast<std::uint8_t>(s), lengths[static_cast<std::size_t>(s)]});
    }
  }
  std::vector<CanonCode> codes = canonical_codes(sym_lens);
  std::array<CanonCode, 256> by_symbol{};
  for (const CanonCode& c : codes) by_symbol[c.symbol] = c;

  CompressedBlock b;
  b.algorithm = Codec::Huffman;
  b.original_size = static_cast<std::uint32_t>(data.size());
  put_le(b.payload, codes.size(), 2);
  for (const CanonCode& c : codes) {
    b.payload.push_back(c.symbol);
    b.payload.push_back(static_cast<std::uint8_t>(c.length));
  }
  BitWriter bw;
  for (std::uint8_t byte : data) {
    const CanonCode& c = by_symbol[byte];
    bw.put(c.code, c.length);
  }
  b.payload.insert(b.payload.end(), bw.bytes.begin(), bw.bytes.end());
  return b;
}

std::vector<std::uint8_t> huffman_decompress(const CompressedBlock& b) {
  if (b.algorithm != Codec::Huffman) throw CodecError("not a huffman block");
  if (b.payload.size() < 2) throw CodecError("huffman payload underrun");
  std::size_t n_syms = get_le(b.payload.data(), 2);
  if (b.payload.size() < 2 + 2 * n_syms) throw CodecError("huffman table underrun");
  if (n_syms == 0) {
    if (b.original_size != 0) throw CodecError("huffman table empty");
    return {};
  }
  std::vector<std::pair<std::uint8_t, int>> sym_lens;
  sym_lens.reserve(n_syms);
  for (std::size_t i = 0; i < n_syms; ++i) {
    sym_lens.push_back({b.payload[2 + 2 * i], b.payload[3 + 2 * i]});
  }
  std::vector<CanonCode> codes = canonical_codes(sym_lens);

  // first code and symbol offset per length for canonical decoding
  int max_len = codes.back().length;
  std::vector<std::uint32_t> first_code(static_cast<std::size_t>(max_len) + 1, 0);
  std::vector<std::size_t> first_index(static_cast<std::size_t>(max_len) + 1, 0);
  std::vector<std::size_t> count(static_cast<std::size_t>(max_len) + 1, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto l = static_cast<std::size_t>(codes[i].length);
    if (count[l] == 0) {
      first_code[l] = codes[i].code;
      first_index[l] = i;
    }
    ++count[l];
  }

  BitReader br{std::span<const std::uint8_t>(b.payload).subspan(2 + 2 * n_syms)};
  std::vector<std::uint8_t> out;
  out.reserve(b.original_size);
  while (out.size() < b.original_size) {
    std::uint32_t code = 0;
    int len = 0;
    while (true) {
      code = (code << 1) | static_cast<std::uint32_t>(br.get(1));
      ++len;
      if (len > max_len) throw CodecError("bad huffman code");
      auto l = static_cast<std::size_t>(len);
      if (count[l] > 0 && code >= first_code[l] && code < first_code[l] + count[l]) {
        out.push_back(codes[first_index[l] + (code - first_code[l])].symbol);
        break;
      }
    }
  }
  return out;
}

CscEncoding csc_encode(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("csc wants a rank-2 tensor");
  CscEncoding e;
  int rows = m.dims[0], cols = m.dims[1];
  e.col_counts.assign(static_cast<std::size_t>(cols), 0);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      Value v = m.at(r, c);
      if (v != 0) {
        e.nnz_values.push_back(v);
        e.row_ids.push_back(r);
        ++e.col_counts[static_cast<std::size_t>(c)];
      }
    }
  }
  return e;
}

Tensor csc_decode(const CscEncoding& e, const std::vector<int>& dims) {
  if (dims.size() != 2) throw ShapeError("csc wants rank-2 dims");
  int rows = dims[0], cols = dims[1];
  if (e.col_counts.size() != static_cast<std::size_t>(cols)) throw CodecError("csc column mismatch");
  std::size_t total = 0;
  for (std::int32_t c : e.col_counts) {
    if (c < 0) throw CodecError("negative csc column count");
    total += static_cast<std::size_t>(c);
  }
  if (total != e.nnz_values.size() || total != e.row_ids.size())
    throw CodecError("csc length mismatch");
  Tensor out = Tensor::zeros(dims);
  std::size_t k = 0;
  for (int c = 0; c < cols; ++c) {
    for (std::int32_t j = 0; j < e.col_counts[static_cast<std::size_t>(c)]; ++j, ++k) {
      std::int32_t r = e.row_ids[k];
      if (r < 0 || r >= rows) throw CodecError("csc row out of range");
      out.at(r, c) = e.nnz_values[k];
    }
  }
  return out;
}

CompressedBlock hybrid_compress(const Tensor& tile, HybridMode mode) {
  auto elems = tile.values.size();
  CompressedBlock b;
  b.original_size = static_cast<std::uint32_t>(elems * 4);
  std::vector<std::uint8_t> seg1, seg2, seg3;
  if (mode == HybridMode::Dense) {
    b.algorithm = Codec::HybridDense;
    seg1 = serialize_block(bdi_compress(pad_to(tensor_bytes(tile), kBdiGranule)));
  } else {
    b.algorithm = Codec::HybridSparse;
    Tensor view = tile;
    if (view.rank() == 1) view.dims = {view.dims[0], 1};
    if (view.rank() == 3) view.dims = {view.dims[0] * view.dims[1], view.dims[2]};
    CscEncoding e = csc_encode(view);
    seg1 = serialize_block(bdi_compress(pad_to(i32_bytes(e.nnz_values), kBdiGranule)));
    seg2 = serialize_block(bdi_compress(pad_to(i32_bytes(e.row_ids), kBdiGranule)));
    seg3 = serialize_block(fpc_compress(i32_bytes(e.col_counts)));
  }
  b.payload.push_back(static_cast<std::uint8_t>(mode));
  put_u32(b.payload, static_cast<std::uint32_t>(seg1.size()));
  put_u32(b.payload, static_cast<std::uint32_t>(seg2.size()));
  put_u32(b.payload, static_cast<std::uint32_t>(seg3.size()));
  b.payload.insert(b.payload.end(), seg1.begin(), seg1.end());
  b.payload.insert(b.payload.end(), seg2.begin(), seg2.end());
  b.payload.insert(b.payload.end(), seg3.begin(), seg3.end());
  return b;
}

Tensor hybrid_decompress(const CompressedBlock& b, const std::vector<int>& dims) {
  if (b.algorithm != Codec::HybridSparse && b.algorithm != Codec::HybridDense)
    throw CodecError("not a hybrid block");
  if (b.payload.size() < 13) throw CodecError("hybrid payload underrun");
  auto mode = static_cast<HybridMode>(b.payload[0]);
  std::size_t len1 = get_u32(b.payload, 1);
  std::size_t len2 = get_u32(b.payload, 5);
  std::size_t len3 = get_u32(b.payload, 9);
  if (13 + len1 + len2 + len3 != b.payload.size()) throw CodecError("hybrid segment lengths");
  std::span<const std::uint8_t> rest = std::span<const std::uint8_t>(b.payload).subspan(13);
  std::size_t elems = dims_product(dims);

  if (mode == HybridMode::Dense) {
    if (b.algorithm != Codec::HybridDense) throw CodecError("hybrid mode tag mismatch");
    std::vector<std::uint8_t> raw = bdi_decompress(deserialize_block(rest.subspan(0, len1)));
    if (raw.size() < elems * 4) throw CodecError("hybrid dense underrun");
    return Tensor(dims, bytes_i32(raw, elems));
  }
  if (b.algorithm != Codec::HybridSparse) throw CodecError("hybrid mode tag mismatch");
  int rows = dims[0];
  int cols = dims.size() >= 2 ? dims[1] : 1;
  if (dims.size() == 3) {
    rows = dims[0] * dims[1];
    cols = dims[2];
  }
  // column counts come first: they bound how much of the padded value and
  // row-id segments is real
  std::vector<std::uint8_t> ccb = fpc_decompress(deserialize_block(rest.subspan(len1 + len2, len3)));
  CscEncoding e;
  e.col_counts = bytes_i32(ccb, static_cast<std::size_t>(cols));
  std::size_t nz = 0;
  for (std::int32_t c : e.col_counts) {
    if (c < 0) throw CodecError("negative csc column count");
    nz += static_cast<std::size_t>(c);
  }
  std::vector<std::uint8_t> vb = bdi_decompress(deserialize_block(rest.subspan(0, len1)));
  std::vector<std::uint8_t> rb = bdi_decompress(deserialize_block(rest.subspan(len1, len2)));
  e.nnz_values = bytes_i32(vb, nz);
  e.row_ids = bytes_i32(rb, nz);
  Tensor grid = csc_decode(e, {rows, cols});
  return Tensor(dims, std::move(grid.values));
}

CompressedBlock hybrid_auto(const Tensor& tile) {
  CompressedBlock sparse = hybrid_compress(tile, HybridMode::Sparse);
  CompressedBlock dense = hybrid_compress(tile, HybridMode::Dense);
  return sparse.payload.size() <= dense.payload.size() ? sparse : dense;
}

std::size_t hybrid_worst_size(std::size_t tile_elems) {
  std::size_t bytes = tile_elems * 4;
  std::size_t granules = (bytes + kBdiGranule - 1) / kBdiGranule;
  // outer block header + mode/lengths + dense segment header + raw granules
  return 5 + 13 + 5 + granules * 33;
}

}  // namespace sparselock::compress
