#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparselock/compress.hpp"
#include "sparselock/convnet.hpp"
#include "sparselock/sealing.hpp"

namespace sparselock::memsim {

using convnet::LayerSpec;
using convnet::LoopConfig;
using convnet::Role;

enum class Op : std::uint8_t { R, W };
enum class Unit : std::uint8_t { Tile, Bin };
enum class Mode { Baseline, CompressOnly, SparseLock };

struct MemEvent {
  std::uint64_t seq = 0;
  Op op = Op::R;
  Unit unit = Unit::Tile;
  std::int64_t id = 0;
  std::uint32_t bytes = 0;
  int layer = 0;
  std::uint32_t csum = 0;  // byte sum of the transferred payload (bus content)
  bool fake = false;       // oracle-only flag, hidden from the attacker view
};

struct Trace {
  std::vector<MemEvent> events;
  std::string config_json;  // config snapshot for reproducibility
};

// Same event stream with the oracle-only flag cleared.
Trace attacker_view(const Trace& t);

struct SimConfig {
  Mode mode = Mode::SparseLock;
  std::uint32_t bin_capacity = sealing::kDefaultBinCapacity;
  int residency_bins = 3;  // bins resident in the TCB at once
  std::uint64_t seed = 1;
  // per-run uniquifier folded into sealing nonces and padding streams; the
  // device key stays fixed but no (key, nonce) pair ever repeats across runs
  std::uint64_t run_nonce = 0;
  LoopConfig loop;
};

struct LayerWorkload {
  LayerSpec spec;
  Tensor ifmap;    // consumed by layer 0 only; deeper layers chain from the previous ofmap
  Tensor weights;  // rank matching the layer (1-D or 2-D filter)
  std::vector<int> tile_extents;  // ifmap/ofmap tiling; the filter is a single tile
};

struct Workload {
  std::vector<LayerWorkload> layers;
};

// Chained forward pass; returns the per-layer ofmaps.
std::vector<Tensor> forward(const Workload& w);

// Called with the payload bytes of every emitted event (observable bus content).
using ContentSink = std::function<void(const MemEvent&, std::span<const std::uint8_t>)>;

// --- integrity (per-tile version numbers, XOR-of-digests MACs) ---

std::uint64_t digest64(std::span<const std::uint8_t> bytes);

enum class MacDir { Compress, Decompress };

struct IntegrityState {
  std::unordered_map<std::int64_t, std::uint64_t> vn;
  std::uint64_t write_mac = 0;
  std::uint64_t read_mac = 0;
  // last write term per tile so a repack replaces its contribution
  std::unordered_map<std::int64_t, std::uint64_t> write_terms;
  std::set<std::pair<std::int64_t, std::uint64_t>> seen_reads;  // dedupe re-reads per (tile, vn)
};

// Compress: bump the tile's VN and fold (tile, vn, digest) into the write MAC.
// Decompress: fold (tile, current vn, digest) into the read MAC (first use per vn).
void vn_mac_update(IntegrityState& st, std::int64_t tile_uid, MacDir dir,
                   std::span<const std::uint8_t> content);

bool macs_match(const IntegrityState& st);

// Extract every tile of `pack` from its bins and fold it into a fresh read
// MAC using the write-side VNs; equals st.write_mac iff the bins are intact.
std::uint64_t read_back_mac(const sealing::PackResult& pack, const IntegrityState& st,
                            std::int64_t uid_base);

struct LayerArtifacts {
  std::map<Role, sealing::PackResult> packs;  // ifmap (layer 0), weights, ofmap
  std::map<Role, std::int64_t> uid_base;      // tile uid = uid_base + tile id
  std::map<Role, IntegrityState> integrity;   // write side from packing, read side from use
};

struct ProtectedRun {
  Trace trace;
  std::vector<LayerArtifacts> layers;
};

Trace gen_baseline_trace(const Workload& w, const SimConfig& cfg, const ContentSink& sink = {});
ProtectedRun run_protected(const Workload& w, const SimConfig& cfg, const ContentSink& sink = {});
Trace gen_protected_trace(const Workload& w, const SimConfig& cfg, const ContentSink& sink = {});
Trace gen_trace(const Workload& w, const SimConfig& cfg, const ContentSink& sink = {});

// Synthetic ground-truth trace whose tile-id signal is a sum of sawtooths,
// one per configured stride, so the strides are its exact periods.
Trace gen_stride_trace(const std::vector<int>& strides, std::size_t length);

struct TrafficSummary {
  std::uint64_t total_bytes = 0;
  std::uint64_t read_bytes = 0;
  std::uint64_t write_bytes = 0;
  std::map<int, std::uint64_t> per_layer;
};

TrafficSummary traffic_bytes(const Trace& t);

// Trace files: JSON lines, fields in fixed order {seq, op, unit, id, bytes,
// layer}; the oracle view appends {fake}.
std::string trace_to_jsonl(const Trace& t, bool oracle_view);
void write_trace_jsonl(const std::string& path, const Trace& t, bool oracle_view);
Trace read_trace_jsonl(const std::string& path);

}  // namespace sparselock::memsim
