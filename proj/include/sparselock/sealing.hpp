#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparselock/convnet.hpp"
#include "sparselock/error.hpp"
#include "sparselock/rng.hpp"

namespace sparselock::sealing {

using convnet::Role;

struct SealKey {
  std::array<std::uint8_t, 32> key{};
  static SealKey derive(std::uint64_t seed);
};

// Length-preserving keyed stream transform in counter mode. Pluggable so a
// real block cipher can be substituted; the default generates the keystream
// from a 64-bit PRF over (key, nonce, counter). Never reuse a (key, nonce)
// pair across different plaintexts.
class Sealer {
 public:
  virtual ~Sealer() = default;
  virtual void keystream(const SealKey& key, std::uint64_t nonce,
                         std::span<std::uint8_t> out) const = 0;

  std::vector<std::uint8_t> seal(std::span<const std::uint8_t> data, const SealKey& key,
                                 std::uint64_t nonce) const;
  std::vector<std::uint8_t> unseal(std::span<const std::uint8_t> data, const SealKey& key,
                                   std::uint64_t nonce) const;
};

class StreamSealer final : public Sealer {
 public:
  void keystream(const SealKey& key, std::uint64_t nonce,
                 std::span<std::uint8_t> out) const override;
};

const Sealer& default_sealer();

// Packed entry: 16-bit bin id, 24-bit offset, 24-bit length, plus the tile id.
struct TmtEntry {
  int tile_id = 0;
  int bin_id = 0;
  std::uint32_t addr = 0;
  std::uint32_t length = 0;
};
inline constexpr std::size_t kTmtEntryBytes = 10;
inline constexpr std::uint32_t kTmtAddrLimit = 1u << 24;

// Tile-map table: tile id -> location, O(1) lookup.
class Tmt {
 public:
  explicit Tmt(Role role = Role::Ifmap) : role_(role) {}

  void insert(const TmtEntry& e);
  const TmtEntry& lookup(int tile_id) const;
  bool contains(int tile_id) const { return map_.contains(tile_id); }
  std::size_t size() const { return map_.size(); }
  std::size_t footprint_bytes() const { return map_.size() * kTmtEntryBytes; }
  Role role() const { return role_; }
  const std::unordered_map<int, TmtEntry>& entries() const { return map_; }

 private:
  Role role_;
  std::unordered_map<int, TmtEntry> map_;
};

const TmtEntry& tmt_lookup(const Tmt& tmt, int tile_id);

enum class BinState : std::uint8_t { Open, Closed };

inline constexpr std::uint32_t kDefaultBinCapacity = 61440;  // 60 kB transfer unit

struct Bin {
  int id = 0;
  std::uint32_t capacity = kDefaultBinCapacity;
  std::vector<std::uint8_t> payload;  // exactly capacity bytes once closed
  BinState state = BinState::Open;

  std::uint32_t fill() const { return static_cast<std::uint32_t>(payload.size()); }
};

// Deterministic source of sealed padding: every request streams fresh bytes
// under a freshly drawn key, indistinguishable from sealed tile data.
class PadSource {
 public:
  explicit PadSource(std::uint64_t seed) : rng_(seed) {}
  void fill(std::span<std::uint8_t> out);

 private:
  Rng rng_;
};

// Fill the remainder with sealed padding and mark the bin closed. A bin with
// no tiles becomes an all-padding bin (legal; used for fake traffic).
void pad_and_close(Bin& bin, PadSource& pads);

struct SealedTile {
  int tile_id = 0;
  std::vector<std::uint8_t> bytes;
};

struct PackResult {
  std::vector<Bin> bins;
  Tmt tmt;
};

// Next-fit in arrival order: a tile that does not fit in the open bin closes
// it (padded) and opens the next one. Tiles are never split across bins.
// A tile larger than the capacity is a PackError.
PackResult next_fit_pack(const std::vector<SealedTile>& tiles, std::uint32_t capacity, Role role,
                         PadSource& pads, int first_bin_id = 0);

// Slice a sealed tile back out of its bin via the TMT.
std::vector<std::uint8_t> extract_tile(const PackResult& pack, int tile_id);

// Bin store file: concatenated capacity-sized records, sidecar TMT as
// JSON-lines {tile, bin, addr, len}.
void write_bin_store(const std::string& path, const std::vector<Bin>& bins);
std::vector<Bin> read_bin_store(const std::string& path, std::uint32_t capacity,
                                int first_bin_id = 0);
void write_tmt_jsonl(const std::string& path, const Tmt& tmt);
Tmt read_tmt_jsonl(const std::string& path, Role role);

}  // namespace sparselock::sealing
