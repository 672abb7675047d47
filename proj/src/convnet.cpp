#include "sparselock/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

namespace sparselock::convnet {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

Tensor conv1d(const Tensor& input, const Tensor& filter) {
  if (input.rank() != 1 || filter.rank() != 1) throw ShapeError("conv1d wants rank-1 tensors");
  int n = input.dims[0];
  int f = filter.dims[0];
  if (f % 2 == 0) throw ShapeError("conv1d filter length must be odd");
  int k = f / 2;
  Tensor out = Tensor::zeros({n});
  for (int i = 0; i < n; ++i) {
    long long acc = 0;
    for (int j = -k; j <= k; ++j) {
      int src = i + j;
      if (src < 0 || src >= n) continue;
      acc += static_cast<long long>(input.at(src)) * filter.at(j + k);
    }
    out.at(i) = static_cast<Value>(acc);
  }
  return out;
}

Tensor conv2d(const Tensor& ifmap, const Tensor& filter, const LayerSpec& spec) {
  if (ifmap.rank() != 2 || filter.rank() != 2) throw ShapeError("conv2d wants rank-2 tensors");
  int h = ifmap.dims[0], w = ifmap.dims[1];
  int r = filter.dims[0], s = filter.dims[1];
  if (spec.mode == PadMode::Center) {
    if (r % 2 == 0 || s % 2 == 0) throw ShapeError("centered filter must be odd");
    if (spec.stride != 1) throw ShapeError("centered mode is unit stride");
    int kr = r / 2, ks = s / 2;
    Tensor out = Tensor::zeros({h, w});
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        long long acc = 0;
        for (int dy = -kr; dy <= kr; ++dy) {
          int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          for (int dx = -ks; dx <= ks; ++dx) {
            int sx = x + dx;
            if (sx < 0 || sx >= w) continue;
            acc += static_cast<long long>(ifmap.at(sy, sx)) * filter.at(dy + kr, dx + ks);
          }
        }
        out.at(y, x) = static_cast<Value>(acc);
      }
    }
    return out;
  }
  if (spec.stride < 1) throw ShapeError("stride must be positive");
  if (r > h || s > w) throw ShapeError("filter larger than ifmap");
  int oh = (h - r) / spec.stride + 1;
  int ow = (w - s) / spec.stride + 1;
  Tensor out = Tensor::zeros({oh, ow});
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      long long acc = 0;
      for (int dy = 0; dy < r; ++dy) {
        for (int dx = 0; dx < s; ++dx) {
          acc += static_cast<long long>(ifmap.at(y * spec.stride + dy, x * spec.stride + dx)) *
                 filter.at(dy, dx);
        }
      }
      out.at(y, x) = static_cast<Value>(acc);
    }
  }
  return out;
}

std::vector<int> boundary_counts(int n, int k) {
  if (k < 0 || n < 2 * k + 1) throw DomainError("boundary_counts needs n >= 2k+1");
  std::vector<int> c(static_cast<std::size_t>(n));
  for (int a = 1; a <= n; ++a) {
    int v;
    if (a <= k) {
      v = a + k;
    } else if (a >= n - k + 1) {
      v = n - a + k + 1;
    } else {
      v = 2 * k + 1;
    }
    c[static_cast<std::size_t>(a - 1)] = v;
  }
  return c;
}

Tensor prune_magnitude(const Tensor& t, double sparsity) {
  if (sparsity < 0.0 || sparsity >= 1.0) throw DomainError("sparsity must be in [0,1)");
  auto n = t.values.size();
  auto drop = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(n)));
  if (drop == 0) return t;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    long long ma = std::llabs(static_cast<long long>(t.values[a]));
    long long mb = std::llabs(static_cast<long long>(t.values[b]));
    return ma < mb;
  });
  Tensor out = t;
  for (std::size_t i = 0; i < drop; ++i) out.values[order[i]] = 0;
  return out;
}

long long TileSchedule::tile_bytes() const {
  long long b = 4;
  for (int e : tile_extents) b *= e;
  return b;
}

std::vector<int> tile_grid(const std::vector<int>& dims, const std::vector<int>& tile_extents) {
  if (dims.size() != tile_extents.size()) throw ShapeError("tile extents rank mismatch");
  std::vector<int> grid(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (tile_extents[i] <= 0) throw ShapeError("tile extents must be positive");
    grid[i] = ceil_div(dims[i], tile_extents[i]);
  }
  return grid;
}

std::vector<Tile> tile(const Tensor& t, const std::vector<int>& tile_extents) {
  std::vector<int> grid = tile_grid(t.dims, tile_extents);
  std::vector<Tile> tiles;
  if (t.rank() == 1) {
    int n = t.dims[0], te = tile_extents[0];
    for (int g = 0; g < grid[0]; ++g) {
      Tile tl;
      tl.id = g;
      tl.data = Tensor::zeros({te});
      tl.pad_mask.assign(static_cast<std::size_t>(te), 0);
      for (int i = 0; i < te; ++i) {
        int src = g * te + i;
        if (src >= n) break;
        tl.data.at(i) = t.at(src);
        tl.pad_mask[static_cast<std::size_t>(i)] = 1;
      }
      tiles.push_back(std::move(tl));
    }
    return tiles;
  }
  if (t.rank() != 2) throw ShapeError("tile supports rank 1 or 2");
  int h = t.dims[0], w = t.dims[1];
  int th = tile_extents[0], tw = tile_extents[1];
  for (int gy = 0; gy < grid[0]; ++gy) {
    for (int gx = 0; gx < grid[1]; ++gx) {
      Tile tl;
      tl.id = gy * grid[1] + gx;
      tl.data = Tensor::zeros({th, tw});
      tl.pad_mask.assign(static_cast<std::size_t>(th) * tw, 0);
      for (int y = 0; y < th; ++y) {
        int sy = gy * th + y;
        if (sy >= h) break;
        for (int x = 0; x < tw; ++x) {
          int sx = gx * tw + x;
          if (sx >= w) break;
          tl.data.at(y, x) = t.at(sy, sx);
          tl.pad_mask[static_cast<std::size_t>(y) * tw + x] = 1;
        }
      }
      tiles.push_back(std::move(tl));
    }
  }
  return tiles;
}

std::vector<Tile> tile(const Tensor& t, const TileSchedule& schedule) {
  return tile(t, schedule.tile_extents);
}

Tensor untile(const std::vector<Tile>& tiles, const std::vector<int>& dims,
              const std::vector<int>& tile_extents) {
  std::vector<int> grid = tile_grid(dims, tile_extents);
  Tensor out = Tensor::zeros(dims);
  if (dims.size() == 1) {
    int n = dims[0], te = tile_extents[0];
    for (const Tile& tl : tiles) {
      for (int i = 0; i < te; ++i) {
        int dst = tl.id * te + i;
        if (dst >= n) break;
        out.at(dst) = tl.data.at(i);
      }
    }
    return out;
  }
  int h = dims[0], w = dims[1];
  int th = tile_extents[0], tw = tile_extents[1];
  for (const Tile& tl : tiles) {
    int gy = tl.id / grid[1], gx = tl.id % grid[1];
    for (int y = 0; y < th; ++y) {
      int dy = gy * th + y;
      if (dy >= h) break;
      for (int x = 0; x < tw; ++x) {
        int dx = gx * tw + x;
        if (dx >= w) break;
        out.at(dy, dx) = tl.data.at(y, x);
      }
    }
  }
  return out;
}

TileSchedule build_layer_schedule(const LayerSpec& spec, const std::vector<int>& tile_extents,
                                  int layer_index, const LoopConfig& lc) {
  if (lc.passes < 1) throw ScheduleError("passes must be >= 1");
  std::vector<int> grid = tile_grid(spec.ifmap_dims, tile_extents);
  int n_tiles = 1;
  for (int g : grid) n_tiles *= g;

  // Centered unit-stride layers keep the ofmap grid equal to the ifmap grid;
  // each ofmap tile needs its own ifmap tile plus the halo neighbours the
  // filter reaches into.
  int halo = spec.filter_size / 2;
  TileSchedule sched;
  sched.tile_extents = tile_extents;

  auto covering = [&](int tile_id) {
    std::vector<int> cover;
    if (grid.size() == 1) {
      int reach = halo == 0 ? 0 : ceil_div(halo, tile_extents[0]);
      for (int g = tile_id - reach; g <= tile_id + reach; ++g) {
        if (g >= 0 && g < grid[0]) cover.push_back(g);
      }
      return cover;
    }
    int gy = tile_id / grid[1], gx = tile_id % grid[1];
    int ry = halo == 0 ? 0 : ceil_div(halo, tile_extents[0]);
    int rx = halo == 0 ? 0 : ceil_div(halo, tile_extents[1]);
    for (int y = gy - ry; y <= gy + ry; ++y) {
      if (y < 0 || y >= grid[0]) continue;
      for (int x = gx - rx; x <= gx + rx; ++x) {
        if (x < 0 || x >= grid[1]) continue;
        cover.push_back(y * grid[1] + x);
      }
    }
    return cover;
  };

  for (int pass = 0; pass < lc.passes; ++pass) {
    bool weight_loaded = false;
    for (int ot = 0; ot < n_tiles; ++ot) {
      if (pass > 0) {
        sched.accesses.push_back({ot, Role::Ofmap, layer_index, AccessKind::Read});
      }
      for (int it : covering(ot)) {
        sched.accesses.push_back({it, Role::Ifmap, layer_index, AccessKind::Read});
      }
      bool read_weight = lc.reuse == WeightReuse::PerOfmapTile || !weight_loaded;
      if (read_weight) {
        sched.accesses.push_back({0, Role::Weight, layer_index, AccessKind::Read});
        weight_loaded = true;
      }
      sched.accesses.push_back({ot, Role::Ofmap, layer_index, AccessKind::Write});
    }
  }

  // Innermost-first periodicities of the visit pattern.
  int per_tile = static_cast<int>(sched.accesses.size()) / (lc.passes * n_tiles);
  sched.loop_strides = {per_tile, per_tile * n_tiles};
  return sched;
}

}  // namespace sparselock::convnet
