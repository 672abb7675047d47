#include "sparselock/sealing.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace sparselock::sealing {

SealKey SealKey::derive(std::uint64_t seed) {
  SealKey k;
  Rng rng(derive_seed(seed, 0x5ea1));
  rng.fill_bytes(k.key.data(), k.key.size());
  return k;
}

std::vector<std::uint8_t> Sealer::seal(std::span<const std::uint8_t> data, const SealKey& key,
                                       std::uint64_t nonce) const {
  std::vector<std::uint8_t> out(data.size());
  keystream(key, nonce, out);
  for (std::size_t i = 0; i < data.size(); ++i) out[i] ^= data[i];
  return out;
}

std::vector<std::uint8_t> Sealer::unseal(std::span<const std::uint8_t> data, const SealKey& key,
                                         std::uint64_t nonce) const {
  return seal(data, key, nonce);  // XOR stream: involution
}

void StreamSealer::keystream(const SealKey& key, std::uint64_t nonce,
                             std::span<std::uint8_t> out) const {
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < key.key.size(); ++i) {
    k = mix64(k ^ (static_cast<std::uint64_t>(key.key[i]) << ((i % 8) * 8)));
  }
  std::uint64_t state = mix64(k ^ mix64(nonce));
  std::size_t i = 0;
  std::uint64_t counter = 0;
  while (i < out.size()) {
    std::uint64_t block = mix64(state ^ counter++);
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
      out[i] = static_cast<std::uint8_t>(block >> (8 * b));
    }
  }
}

const Sealer& default_sealer() {
  static StreamSealer sealer;
  return sealer;
}

void Tmt::insert(const TmtEntry& e) {
  if (e.addr >= kTmtAddrLimit || e.length >= kTmtAddrLimit) throw PackError("tmt field overflow");
  if (e.bin_id < 0 || e.bin_id > 0xFFFF) throw PackError("tmt bin id overflow");
  map_[e.tile_id] = e;
}

const TmtEntry& Tmt::lookup(int tile_id) const {
  auto it = map_.find(tile_id);
  if (it == map_.end()) throw LookupError("tile not mapped: " + std::to_string(tile_id));
  return it->second;
}

const TmtEntry& tmt_lookup(const Tmt& tmt, int tile_id) { return tmt.lookup(tile_id); }

void PadSource::fill(std::span<std::uint8_t> out) {
  // fresh key per request, streamed like any sealed tile
  SealKey key;
  rng_.fill_bytes(key.key.data(), key.key.size());
  default_sealer().keystream(key, rng_.next_u64(), out);
}

void pad_and_close(Bin& bin, PadSource& pads) {
  if (bin.state == BinState::Closed) throw PackError("bin already closed");
  if (bin.fill() > bin.capacity) throw PackError("bin overfilled");
  std::size_t gap = bin.capacity - bin.fill();
  std::size_t at = bin.payload.size();
  bin.payload.resize(bin.capacity);
  pads.fill(std::span<std::uint8_t>(bin.payload).subspan(at, gap));
  bin.state = BinState::Closed;
}

PackResult next_fit_pack(const std::vector<SealedTile>& tiles, std::uint32_t capacity, Role role,
                         PadSource& pads, int first_bin_id) {
  PackResult result{{}, Tmt(role)};
  Bin open;
  open.id = first_bin_id;
  open.capacity = capacity;
  for (const SealedTile& t : tiles) {
    if (t.bytes.size() > capacity) throw PackError("tile exceeds bin capacity");
    if (open.fill() + t.bytes.size() > capacity) {
      pad_and_close(open, pads);
      result.bins.push_back(std::move(open));
      open = Bin{};
      open.id = first_bin_id + static_cast<int>(result.bins.size());
      open.capacity = capacity;
    }
    TmtEntry e;
    e.tile_id = t.tile_id;
    e.bin_id = open.id;
    e.addr = open.fill();
    e.length = static_cast<std::uint32_t>(t.bytes.size());
    result.tmt.insert(e);
    open.payload.insert(open.payload.end(), t.bytes.begin(), t.bytes.end());
  }
  pad_and_close(open, pads);
  result.bins.push_back(std::move(open));
  return result;
}

std::vector<std::uint8_t> extract_tile(const PackResult& pack, int tile_id) {
  const TmtEntry& e = pack.tmt.lookup(tile_id);
  for (const Bin& bin : pack.bins) {
    if (bin.id != e.bin_id) continue;
    if (e.addr + e.length > bin.payload.size()) throw PackError("tmt extent outside bin");
    return {bin.payload.begin() + e.addr, bin.payload.begin() + e.addr + e.length};
  }
  throw LookupError("bin not present: " + std::to_string(e.bin_id));
}

void write_bin_store(const std::string& path, const std::vector<Bin>& bins) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  for (const Bin& bin : bins) {
    if (bin.state != BinState::Closed || bin.payload.size() != bin.capacity) {
      throw IoError("only closed full bins are stored");
    }
    os.write(reinterpret_cast<const char*>(bin.payload.data()),
             static_cast<std::streamsize>(bin.payload.size()));
  }
}

std::vector<Bin> read_bin_store(const std::string& path, std::uint32_t capacity, int first_bin_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<Bin> bins;
  while (true) {
    Bin bin;
    bin.id = first_bin_id + static_cast<int>(bins.size());
    bin.capacity = capacity;
    bin.payload.resize(capacity);
    is.read(reinterpret_cast<char*>(bin.payload.data()), static_cast<std::streamsize>(capacity));
    auto got = is.gcount();
    if (got == 0) break;
    if (got != static_cast<std::streamsize>(capacity)) throw IoError("partial bin record");
    bin.state = BinState::Closed;
    bins.push_back(std::move(bin));
  }
  return bins;
}

void write_tmt_jsonl(const std::string& path, const Tmt& tmt) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  // sorted by tile id so the file is reproducible
  std::vector<int> ids;
  ids.reserve(tmt.size());
  for (const auto& [id, e] : tmt.entries()) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (int id : ids) {
    const TmtEntry& e = tmt.lookup(id);
    nlohmann::ordered_json j;
    j["tile"] = e.tile_id;
    j["bin"] = e.bin_id;
    j["addr"] = e.addr;
    j["len"] = e.length;
    os << j.dump() << '\n';
  }
}

Tmt read_tmt_jsonl(const std::string& path, Role role) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  Tmt tmt(role);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("bad JSON line in " + path);
    TmtEntry e;
    e.tile_id = j.at("tile").get<int>();
    e.bin_id = j.at("bin").get<int>();
    e.addr = j.at("addr").get<std::uint32_t>();
    e.length = j.at("len").get<std::uint32_t>();
    tmt.insert(e);
  }
  return tmt;
}

}  // namespace sparselock::sealing
