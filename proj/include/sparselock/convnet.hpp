#pragma once

#include <cstdint>
#include <vector>

#include "sparselock/tensor.hpp"

namespace sparselock::convnet {

enum class PadMode { Valid, Center };

struct LayerSpec {
  std::vector<int> ifmap_dims{32, 32};  // rank 1 or 2
  int filter_size = 3;                  // odd when mode == Center
  int stride = 1;
  PadMode mode = PadMode::Center;
  int in_channels = 1;
  int out_channels = 1;
  bool relu = false;  // clamp negative outputs, re-sparsifying deeper ifmaps
};

// 1-D convolution with an odd-length filter centered on every input position;
// taps falling outside the input are skipped, so the output has the same
// length as the input.
Tensor conv1d(const Tensor& input, const Tensor& filter);

// 2-D convolution. Valid: output (H-R)/stride+1 x (W-S)/stride+1. Center:
// same extents as the ifmap, odd filter, stride 1, out-of-range taps skipped.
Tensor conv2d(const Tensor& ifmap, const Tensor& filter, const LayerSpec& spec);

// Number of products contributing to output position a = 1..n of a centered
// unit-stride 1-D convolution with filter length 2k+1. Requires n >= 2k+1.
std::vector<int> boundary_counts(int n, int k);

// Zero the floor(sparsity * size) smallest-magnitude entries (ties broken by
// index). sparsity in [0, 1).
Tensor prune_magnitude(const Tensor& t, double sparsity);

enum class Role : std::uint8_t { Ifmap = 0, Weight = 1, Ofmap = 2 };
enum class AccessKind : std::uint8_t { Read, Write };

struct TileAccess {
  int tile_id;
  Role role;
  int layer;
  AccessKind kind;
};

struct TileSchedule {
  std::vector<int> tile_extents;     // per-axis elements of one tile
  std::vector<TileAccess> accesses;  // loop-nest order
  std::vector<int> loop_strides;     // access-pattern periodicities, innermost first
  long long tile_bytes() const;
};

struct Tile {
  int id = 0;
  Tensor data;                         // zero-padded to the full tile extents
  std::vector<std::uint8_t> pad_mask;  // 1 = real element, 0 = edge padding
};

// Grid of ceil(dim/extent) tiles per axis, ids row-major from 0.
std::vector<int> tile_grid(const std::vector<int>& dims, const std::vector<int>& tile_extents);
std::vector<Tile> tile(const Tensor& t, const std::vector<int>& tile_extents);
std::vector<Tile> tile(const Tensor& t, const TileSchedule& schedule);
Tensor untile(const std::vector<Tile>& tiles, const std::vector<int>& dims,
              const std::vector<int>& tile_extents);

enum class WeightReuse { Stationary, PerOfmapTile };

struct LoopConfig {
  int passes = 1;  // >1 models partial-sum accumulation sweeps
  WeightReuse reuse = WeightReuse::PerOfmapTile;
};

// Access list for one layer in loop-nest order: per pass, per ofmap tile:
// re-read the partial ofmap tile (pass > 0), read the covering ifmap tiles,
// read the weight tile per reuse policy, write the ofmap tile.
TileSchedule build_layer_schedule(const LayerSpec& spec, const std::vector<int>& tile_extents,
                                  int layer_index, const LoopConfig& lc);

}  // namespace sparselock::convnet
