#include "sparselock/memsim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "sparselock/rng.hpp"

namespace sparselock::memsim {

namespace {

using convnet::AccessKind;
using convnet::Tile;
using convnet::TileSchedule;

std::uint32_t byte_sum(std::span<const std::uint8_t> bytes) {
  std::uint32_t s = 0;
  for (std::uint8_t b : bytes) s += b;
  return s;
}

Tensor apply_relu(Tensor t) {
  for (Value& v : t.values) v = std::max<Value>(v, 0);
  return t;
}

Tensor layer_forward(const LayerSpec& spec, const Tensor& input, const Tensor& weights) {
  if (input.dims != spec.ifmap_dims) throw ScheduleError("ifmap extents do not match layer spec");
  Tensor out = input.rank() == 1 ? convnet::conv1d(input, weights)
                                 : convnet::conv2d(input, weights, spec);
  return spec.relu ? apply_relu(out) : out;
}

// tensor uids: ofmap of layer L doubles as ifmap of layer L+1
std::int64_t baseline_uid(Role role, int layer) {
  switch (role) {
    case Role::Ifmap:
      return layer + 1;
    case Role::Ofmap:
      return layer + 2;
    default:
      return 1000 + layer;
  }
}

std::int64_t tile_object_id(Role role, int layer, int tile_id) {
  return (baseline_uid(role, layer) << 20) | static_cast<std::int64_t>(tile_id);
}

std::int64_t bin_object_id(int layer, Role role, int bin) {
  std::int64_t group = static_cast<std::int64_t>(layer) * 4 + static_cast<int>(role) + 1;
  return (group << 24) | static_cast<std::int64_t>(bin);
}

void emit(Trace& trace, Op op, Unit unit, std::int64_t id, std::uint32_t bytes, int layer,
          bool fake, std::span<const std::uint8_t> content, const ContentSink& sink) {
  MemEvent e;
  e.seq = trace.events.size();
  e.op = op;
  e.unit = unit;
  e.id = id;
  e.bytes = bytes;
  e.layer = layer;
  e.csum = byte_sum(content);
  e.fake = fake;
  if (sink) sink(e, content);
  trace.events.push_back(e);
}

struct LayerTensors {
  Tensor ifmap;
  Tensor weights;
  Tensor ofmap;
};

std::vector<LayerTensors> resolve_layers(const Workload& w) {
  if (w.layers.empty()) throw ScheduleError("workload has no layers");
  std::vector<LayerTensors> out;
  Tensor current = w.layers.front().ifmap;
  for (const LayerWorkload& lw : w.layers) {
    LayerTensors lt;
    lt.ifmap = current;
    lt.weights = lw.weights;
    lt.ofmap = layer_forward(lw.spec, lt.ifmap, lt.weights);
    current = lt.ofmap;
    out.push_back(std::move(lt));
  }
  return out;
}

const Tensor& role_tensor(const LayerTensors& lt, Role role) {
  switch (role) {
    case Role::Ifmap:
      return lt.ifmap;
    case Role::Weight:
      return lt.weights;
    default:
      return lt.ofmap;
  }
}

// whole filter as a single tile
std::vector<Tile> role_tiles(const LayerTensors& lt, Role role,
                             const std::vector<int>& tile_extents) {
  const Tensor& t = role_tensor(lt, role);
  if (role == Role::Weight) return convnet::tile(t, t.dims);
  return convnet::tile(t, tile_extents);
}

// next-fit never leaves more than one worst-size gap per closed bin
std::uint32_t worst_bins(std::size_t n_tiles, std::size_t worst_tile, std::uint32_t capacity) {
  if (worst_tile >= capacity) throw PackError("worst-case tile exceeds bin capacity");
  std::uint64_t total = static_cast<std::uint64_t>(n_tiles) * worst_tile;
  return static_cast<std::uint32_t>(total / (capacity - worst_tile)) + 1;
}

std::uint64_t mac_term(std::int64_t tile_uid, std::uint64_t vn, std::uint64_t digest) {
  return mix64(mix64(static_cast<std::uint64_t>(tile_uid)) ^ mix64(vn) ^ digest);
}

}  // namespace

Trace attacker_view(const Trace& t) {
  Trace out = t;
  for (MemEvent& e : out.events) e.fake = false;
  return out;
}

std::vector<Tensor> forward(const Workload& w) {
  std::vector<Tensor> ofmaps;
  for (const LayerTensors& lt : resolve_layers(w)) ofmaps.push_back(lt.ofmap);
  return ofmaps;
}

std::uint64_t digest64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

void vn_mac_update(IntegrityState& st, std::int64_t tile_uid, MacDir dir,
                   std::span<const std::uint8_t> content) {
  if (dir == MacDir::Compress) {
    std::uint64_t vn = ++st.vn[tile_uid];
    std::uint64_t term = mac_term(tile_uid, vn, digest64(content));
    auto [it, fresh] = st.write_terms.try_emplace(tile_uid, 0);
    st.write_mac ^= it->second ^ term;
    it->second = term;
    return;
  }
  auto it = st.vn.find(tile_uid);
  if (it == st.vn.end()) throw LookupError("decompress of a tile never compressed");
  std::uint64_t vn = it->second;
  if (!st.seen_reads.insert({tile_uid, vn}).second) return;
  st.read_mac ^= mac_term(tile_uid, vn, digest64(content));
}

bool macs_match(const IntegrityState& st) { return st.write_mac == st.read_mac; }

std::uint64_t read_back_mac(const sealing::PackResult& pack, const IntegrityState& st,
                            std::int64_t uid_base) {
  std::uint64_t mac = 0;
  for (const auto& [tile_id, entry] : pack.tmt.entries()) {
    std::vector<std::uint8_t> sealed = sealing::extract_tile(pack, tile_id);
    std::int64_t uid = uid_base + tile_id;
    auto it = st.vn.find(uid);
    if (it == st.vn.end()) throw LookupError("tile has no version number");
    mac ^= mac_term(uid, it->second, digest64(sealed));
  }
  return mac;
}

Trace gen_baseline_trace(const Workload& w, const SimConfig& cfg, const ContentSink& sink) {
  std::vector<LayerTensors> layers = resolve_layers(w);
  Trace trace;
  bool compress_only = cfg.mode == Mode::CompressOnly;
  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const LayerWorkload& lw = w.layers[li];
    const LayerTensors& lt = layers[li];
    TileSchedule sched = convnet::build_layer_schedule(lw.spec, lw.tile_extents,
                                                       static_cast<int>(li), cfg.loop);
    std::map<Role, std::vector<Tile>> tiles;
    std::map<Role, std::vector<std::vector<std::uint8_t>>> wire;  // per-tile transfer bytes
    for (Role role : {Role::Ifmap, Role::Weight, Role::Ofmap}) {
      tiles[role] = role_tiles(lt, role, lw.tile_extents);
      auto& wr = wire[role];
      for (const Tile& t : tiles[role]) {
        if (compress_only) {
          wr.push_back(compress::serialize_block(compress::hybrid_auto(t.data)));
        } else {
          wr.push_back(tensor_bytes(t.data));
        }
      }
    }
    for (const convnet::TileAccess& a : sched.accesses) {
      const auto& bytes = wire[a.role].at(static_cast<std::size_t>(a.tile_id));
      emit(trace, a.kind == AccessKind::Read ? Op::R : Op::W, Unit::Tile,
           tile_object_id(a.role, static_cast<int>(li), a.tile_id),
           static_cast<std::uint32_t>(bytes.size()), static_cast<int>(li), false, bytes, sink);
    }
  }
  return trace;
}

ProtectedRun run_protected(const Workload& w, const SimConfig& cfg, const ContentSink& sink) {
  std::vector<LayerTensors> layers = resolve_layers(w);
  const sealing::Sealer& sealer = sealing::default_sealer();
  sealing::SealKey key = sealing::SealKey::derive(cfg.seed);

  ProtectedRun run;
  run.layers.resize(w.layers.size());
  sealing::PadSource pack_pads(derive_seed(derive_seed(cfg.seed, 0xb1d), cfg.run_nonce));
  // stored padding bins must return the same bytes on every re-read
  std::map<std::tuple<int, Role, int>, std::vector<std::uint8_t>> fake_bins;
  sealing::PadSource fake_pads(derive_seed(derive_seed(cfg.seed, 0xfa4e), cfg.run_nonce));

  auto seal_and_pack = [&](int layer, Role role, const std::vector<Tile>& tiles) {
    LayerArtifacts& art = run.layers[static_cast<std::size_t>(layer)];
    std::int64_t uid_base = bin_object_id(layer, role, 0) << 20;
    art.uid_base[role] = uid_base;
    IntegrityState& st = art.integrity[role];
    std::vector<sealing::SealedTile> sealed;
    sealed.reserve(tiles.size());
    for (const Tile& t : tiles) {
      std::vector<std::uint8_t> blob = compress::serialize_block(compress::hybrid_auto(t.data));
      std::int64_t uid = uid_base + t.id;
      std::uint64_t vn = st.vn[uid] + 1;  // vn_mac_update bumps it below
      std::uint64_t nonce =
          derive_seed(derive_seed(static_cast<std::uint64_t>(uid), vn), cfg.run_nonce);
      sealing::SealedTile s;
      s.tile_id = t.id;
      s.bytes = sealer.seal(blob, key, nonce);
      vn_mac_update(st, uid, MacDir::Compress, s.bytes);
      sealed.push_back(std::move(s));
    }
    art.packs[role] = sealing::next_fit_pack(sealed, cfg.bin_capacity, role, pack_pads);
    return &art.packs[role];
  };

  auto consume = [&](int layer, Role role) {
    LayerArtifacts& art = run.layers[static_cast<std::size_t>(layer)];
    const sealing::PackResult& pack = art.packs.at(role);
    IntegrityState& st = art.integrity.at(role);
    std::int64_t uid_base = art.uid_base.at(role);
    std::vector<int> ids;
    ids.reserve(pack.tmt.size());
    for (const auto& [tile_id, entry] : pack.tmt.entries()) ids.push_back(tile_id);
    std::sort(ids.begin(), ids.end());
    for (int tile_id : ids) {
      std::vector<std::uint8_t> sealed = sealing::extract_tile(pack, tile_id);
      vn_mac_update(st, uid_base + tile_id, MacDir::Decompress, sealed);
    }
  };

  auto sweep = [&](int layer, Role role, Op op, const sealing::PackResult* pack,
                   std::uint32_t worst) {
    for (std::uint32_t b = 0; b < worst; ++b) {
      std::span<const std::uint8_t> content;
      bool fake = true;
      if (pack != nullptr && b < pack->bins.size()) {
        content = pack->bins[b].payload;
        fake = false;
      } else {
        auto [it, fresh] = fake_bins.try_emplace({layer, role, static_cast<int>(b)});
        if (fresh) {
          it->second.resize(cfg.bin_capacity);
          fake_pads.fill(it->second);
        }
        content = it->second;
      }
      emit(run.trace, op, Unit::Bin, bin_object_id(layer, role, static_cast<int>(b)),
           cfg.bin_capacity, layer, fake, content, sink);
    }
  };

  for (std::size_t li = 0; li < w.layers.size(); ++li) {
    const LayerWorkload& lw = w.layers[li];
    const LayerTensors& lt = layers[li];
    int layer = static_cast<int>(li);

    std::vector<int> grid = convnet::tile_grid(lw.spec.ifmap_dims, lw.tile_extents);
    std::size_t n_tiles = 1;
    for (int g : grid) n_tiles *= static_cast<std::size_t>(g);
    std::size_t tile_elems = dims_product(lw.tile_extents);
    std::size_t filter_elems = lt.weights.size();

    std::uint32_t worst_map =
        worst_bins(n_tiles, compress::hybrid_worst_size(tile_elems), cfg.bin_capacity);
    std::uint32_t worst_w =
        worst_bins(1, compress::hybrid_worst_size(filter_elems), cfg.bin_capacity);

    const sealing::PackResult* if_pack = nullptr;
    if (layer == 0) {
      if_pack = seal_and_pack(layer, Role::Ifmap, role_tiles(lt, Role::Ifmap, lw.tile_extents));
    }
    const sealing::PackResult* w_pack =
        seal_and_pack(layer, Role::Weight, role_tiles(lt, Role::Weight, lw.tile_extents));
    if (if_pack != nullptr && if_pack->bins.size() > worst_map)
      throw PackError("real bins exceed the worst-case budget");
    if (w_pack->bins.size() > worst_w) throw PackError("real bins exceed the worst-case budget");

    for (int pass = 0; pass < cfg.loop.passes; ++pass) {
      if (layer == 0) sweep(layer, Role::Ifmap, Op::R, if_pack, worst_map);
      sweep(layer, Role::Weight, Op::R, w_pack, worst_w);
    }
    if (layer == 0) consume(layer, Role::Ifmap);
    consume(layer, Role::Weight);
    if (layer > 0) consume(layer - 1, Role::Ofmap);  // previous ofmap, unsealed on chip

    const sealing::PackResult* o_pack =
        seal_and_pack(layer, Role::Ofmap, role_tiles(lt, Role::Ofmap, lw.tile_extents));
    if (o_pack->bins.size() > worst_map) throw PackError("real bins exceed the worst-case budget");
    sweep(layer, Role::Ofmap, Op::W, o_pack, worst_map);
  }
  return run;
}

Trace gen_protected_trace(const Workload& w, const SimConfig& cfg, const ContentSink& sink) {
  return run_protected(w, cfg, sink).trace;
}

Trace gen_trace(const Workload& w, const SimConfig& cfg, const ContentSink& sink) {
  switch (cfg.mode) {
    case Mode::SparseLock:
      return gen_protected_trace(w, cfg, sink);
    default:
      return gen_baseline_trace(w, cfg, sink);
  }
}

Trace gen_stride_trace(const std::vector<int>& strides, std::size_t length) {
  if (strides.empty()) throw DomainError("stride trace needs at least one stride");
  for (int s : strides) {
    if (s < 2) throw DomainError("strides must be >= 2");
  }
  Trace trace;
  trace.events.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    MemEvent e;
    e.seq = t;
    e.op = Op::R;
    e.unit = Unit::Tile;
    std::int64_t id = 0;
    for (int s : strides) id += static_cast<std::int64_t>(t % static_cast<std::size_t>(s));
    e.id = id;
    e.bytes = 64;
    e.layer = 0;
    trace.events.push_back(e);
  }
  return trace;
}

TrafficSummary traffic_bytes(const Trace& t) {
  TrafficSummary s;
  for (const MemEvent& e : t.events) {
    s.total_bytes += e.bytes;
    if (e.op == Op::R) {
      s.read_bytes += e.bytes;
    } else {
      s.write_bytes += e.bytes;
    }
    s.per_layer[e.layer] += e.bytes;
  }
  return s;
}

std::string trace_to_jsonl(const Trace& t, bool oracle_view) {
  std::ostringstream os;
  for (const MemEvent& e : t.events) {
    os << "{\"seq\":" << e.seq << ",\"op\":\"" << (e.op == Op::R ? 'R' : 'W') << "\",\"unit\":\""
       << (e.unit == Unit::Tile ? "tile" : "bin") << "\",\"id\":" << e.id
       << ",\"bytes\":" << e.bytes << ",\"layer\":" << e.layer;
    if (oracle_view) os << ",\"fake\":" << (e.fake ? "true" : "false");
    os << "}\n";
  }
  return os.str();
}

void write_trace_jsonl(const std::string& path, const Trace& t, bool oracle_view) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path);
  os << trace_to_jsonl(t, oracle_view);
}

Trace read_trace_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  Trace t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("bad JSON line in " + path);
    MemEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    std::string op = j.at("op").get<std::string>();
    if (op != "R" && op != "W") throw IoError("bad op field");
    e.op = op == "R" ? Op::R : Op::W;
    std::string unit = j.at("unit").get<std::string>();
    if (unit != "tile" && unit != "bin") throw IoError("bad unit field");
    e.unit = unit == "tile" ? Unit::Tile : Unit::Bin;
    e.id = j.at("id").get<std::int64_t>();
    e.bytes = j.at("bytes").get<std::uint32_t>();
    e.layer = j.at("layer").get<int>();
    e.fake = j.value("fake", false);
    t.events.push_back(e);
  }
  return t;
}

}  // namespace sparselock::memsim
