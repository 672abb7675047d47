// End-to-end acceptance gate: one pass/fail line per claim, nonzero exit on
// any failure. Thresholds are pinned here, not configurable.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "sparselock/attacks.hpp"
#include "sparselock/compress.hpp"
#include "sparselock/convnet.hpp"
#include "sparselock/experiment.hpp"
#include "sparselock/leakage.hpp"
#include "sparselock/memsim.hpp"
#include "sparselock/rng.hpp"
#include "sparselock/sealing.hpp"

using namespace sparselock;

namespace {

int g_failures = 0;

void report(int index, const char* label, bool pass, double seconds) {
  std::printf("[%2d] %-52s %s (%.2f s)\n", index, label, pass ? "PASS" : "FAIL", seconds);
  if (!pass) ++g_failures;
}

template <typename Fn>
void criterion(int index, const char* label, Fn&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  try {
    pass = fn();
  } catch (const std::exception& e) {
    std::printf("     exception: %s\n", e.what());
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(index, label, pass, secs);
}

experiment::ExperimentConfig sweep_config(std::uint64_t seed, int filter_size, memsim::Mode mode) {
  experiment::ExperimentConfig cfg;
  cfg.seed = seed;
  cfg.mode = mode;
  cfg.quant_bits = 8;
  experiment::LayerConfig lc;
  lc.ifmap_dims = {32, 32};
  lc.filter_size = filter_size;
  lc.weight_sparsity = 0.6;
  lc.tile_extents = {8, 8};
  cfg.layers = {lc};
  return cfg;
}

Tensor random_tile(Rng& rng, double sparsity, int value_bits) {
  Tensor t = Tensor::zeros({16, 16});
  std::int64_t lim = (std::int64_t{1} << value_bits) - 1;
  for (Value& v : t.values) {
    if (rng.next_double() < sparsity) continue;
    std::int64_t x = 0;
    while (x == 0) x = rng.int_in(-lim, lim);
    v = static_cast<Value>(x);
  }
  return t;
}

std::vector<std::uint8_t> mixed_block(Rng& rng, std::size_t granules) {
  std::vector<std::uint8_t> out(granules * compress::kBdiGranule);
  for (std::size_t g = 0; g < granules; ++g) {
    std::uint8_t* p = out.data() + g * compress::kBdiGranule;
    switch (rng.below(5)) {
      case 0:
        break;
      case 1: {
        std::uint8_t unit[8];
        rng.fill_bytes(unit, 8);
        for (int u = 0; u < 4; ++u) std::memcpy(p + 8 * u, unit, 8);
        break;
      }
      case 2: {
        std::uint32_t base = rng.next_u32();
        for (int u = 0; u < 8; ++u) {
          std::uint32_t w = base + static_cast<std::uint32_t>(rng.int_in(-100, 100));
          std::memcpy(p + 4 * u, &w, 4);
        }
        break;
      }
      case 3: {
        std::uint16_t base = static_cast<std::uint16_t>(rng.next_u32());
        for (int u = 0; u < 16; ++u) {
          std::uint16_t h = static_cast<std::uint16_t>(base + rng.int_in(-100, 100));
          std::memcpy(p + 2 * u, &h, 2);
        }
        break;
      }
      default:
        rng.fill_bytes(p, compress::kBdiGranule);
    }
  }
  return out;
}

// minimum bin count by subset dynamic programming (instances of <= 10 tiles)
int optimal_bins(const std::vector<std::uint32_t>& sizes, std::uint32_t cap) {
  int n = static_cast<int>(sizes.size());
  int full = (1 << n) - 1;
  std::vector<std::uint64_t> sum(static_cast<std::size_t>(full) + 1, 0);
  for (int mask = 1; mask <= full; ++mask) {
    int low = mask & -mask;
    sum[static_cast<std::size_t>(mask)] =
        sum[static_cast<std::size_t>(mask ^ low)] +
        sizes[static_cast<std::size_t>(__builtin_ctz(static_cast<unsigned>(mask)))];
  }
  std::vector<int> best(static_cast<std::size_t>(full) + 1, n + 1);
  best[0] = 0;
  for (int mask = 1; mask <= full; ++mask) {
    for (int sub = mask; sub != 0; sub = (sub - 1) & mask) {
      if (sum[static_cast<std::size_t>(sub)] > cap) continue;
      best[static_cast<std::size_t>(mask)] =
          std::min(best[static_cast<std::size_t>(mask)],
                   best[static_cast<std::size_t>(mask ^ sub)] + 1);
    }
  }
  return best[static_cast<std::size_t>(full)];
}

bool divides(int a, int b) { return a != 0 && b % a == 0; }

}  // namespace

int main() {
  criterion(1, "edge taper oracle matches closed form", [] {
    for (int n : {10, 32, 64}) {
      for (int k = 0; k <= 3; ++k) {
        Tensor input = Tensor::zeros({n});
        for (Value& v : input.values) v = 1;
        Tensor filter = Tensor::zeros({2 * k + 1});
        for (Value& v : filter.values) v = 1;
        Tensor out = convnet::conv1d(input, filter);
        auto expect = convnet::boundary_counts(n, k);
        for (int i = 0; i < n; ++i) {
          if (out.values[static_cast<std::size_t>(i)] != expect[static_cast<std::size_t>(i)]) {
            return false;
          }
        }
      }
    }
    return true;
  });

  criterion(2, "filter size recovered from compressed traffic", [] {
    const int filters[3] = {3, 5, 7};
    int ok = 0;
    for (int trial = 0; trial < 100; ++trial) {
      experiment::ExperimentConfig cfg =
          sweep_config(1000 + static_cast<std::uint64_t>(trial), filters[trial % 3],
                       memsim::Mode::CompressOnly);
      std::optional<int> est =
          attacks::estimate_filter_size_2d(32, 32, experiment::make_probe_fn(cfg));
      ok += est.has_value() && *est == filters[trial % 3];
    }
    std::printf("     recovered %d/100 (need >= 95)\n", ok);
    return ok >= 95;
  });

  criterion(3, "sealed bins defeat the sweep, traces identical", [] {
    // every single-pixel impulse produces the same attacker-visible bytes
    experiment::ExperimentConfig cfg = sweep_config(1000, 3, memsim::Mode::SparseLock);
    std::string first;
    for (int pos = 0; pos < 32 * 32; ++pos) {
      Tensor probe = make_impulse({32, 32}, {pos / 32, pos % 32});
      memsim::Trace t = experiment::run_trace(experiment::probe_workload(cfg, probe), cfg);
      std::string jsonl = memsim::trace_to_jsonl(memsim::attacker_view(t), false);
      if (pos == 0) {
        first = std::move(jsonl);
      } else if (jsonl != first) {
        std::printf("     impulse %d produced a different trace\n", pos);
        return false;
      }
    }
    // and the estimator fails on every ensemble trial
    const int filters[3] = {3, 5, 7};
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
      experiment::ExperimentConfig pc =
          sweep_config(1000 + static_cast<std::uint64_t>(trial), filters[trial % 3],
                       memsim::Mode::SparseLock);
      failures += !attacks::estimate_filter_size_2d(32, 32, experiment::make_probe_fn(pc))
                       .has_value();
    }
    std::printf("     estimation failed %d/100 (need 100)\n", failures);
    return failures == 100;
  });

  criterion(4, "loop periods: recovered raw, absent from bins", [] {
    memsim::Trace open_trace = memsim::gen_stride_trace({15, 65, 85}, 6630);
    std::set<int> got;
    for (const attacks::Peak& p : attacks::fft_periodicity(open_trace)) {
      got.insert(static_cast<int>(std::lround(p.period)));
    }
    if (got != std::set<int>{15, 65, 85}) {
      std::printf("     synthetic trace gave %zu periods\n", got.size());
      return false;
    }

    // the sealed stream's only structure is the per-pass sweep repeat; its
    // periods must match none of 100 random stride triples
    experiment::ExperimentConfig cfg;
    cfg.seed = 77;
    cfg.mode = memsim::Mode::SparseLock;
    cfg.quant_bits = 8;
    experiment::LayerConfig lc;
    lc.ifmap_dims = {16, 16};
    lc.filter_size = 3;
    lc.weight_sparsity = 0.5;
    lc.tile_extents = {8, 8};
    lc.passes = 40;
    cfg.layers = {lc};
    cfg.accel.bin_capacity = 1024;
    memsim::Trace sealed =
        memsim::attacker_view(experiment::run_trace(experiment::build_workload(cfg), cfg));
    std::vector<attacks::Peak> sealed_peaks = attacks::fft_periodicity(sealed);

    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<int> strides;
      while (strides.size() < 3) {
        int s = static_cast<int>(rng.int_in(10, 128));
        bool bad = false;
        for (int t : strides) bad = bad || divides(s, t) || divides(t, s);
        if (!bad) strides.push_back(s);
      }
      for (int s : strides) {
        for (const attacks::Peak& p : sealed_peaks) {
          if (std::abs(std::lround(p.period) - s) <= 1) {
            std::printf("     sealed peak %.2f matches stride %d\n", p.period, s);
            return false;
          }
        }
      }
    }
    return true;
  });

  criterion(5, "2048-probe ensemble indistinguishable from random", [] {
    constexpr double kFiGapMax = 0.10;
    constexpr double kMiDeltaMax = 0.05;
    constexpr double kRunsPMin = 0.05;
    experiment::ExperimentConfig cfg;
    cfg.seed = 77;
    cfg.mode = memsim::Mode::SparseLock;
    cfg.quant_bits = 8;
    cfg.workers = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    experiment::LayerConfig lc;
    lc.ifmap_dims = {16, 16};
    lc.filter_size = 3;
    lc.weight_sparsity = 0.5;
    lc.tile_extents = {8, 8};
    cfg.layers = {lc};
    cfg.accel.bin_capacity = 1024;
    cfg.probes.count = 2048;
    cfg.probes.kind = "random";
    cfg.probes.input_sparsity = 0.7;
    experiment::MetricsReport r = experiment::closeness_metrics(cfg, {3, 5, 7}, 2048);
    std::printf("     fi_gap=%.4f mi_delta=%.4f cvm=%.4f runs_p=%.4f\n", r.fi_rel_gap,
                r.mi_protected - r.mi_random, r.cvm, r.runs_p);
    return r.errors.empty() && r.fi_rel_gap <= kFiGapMax &&
           r.mi_protected <= r.mi_random + kMiDeltaMax && r.cvm < leakage::kCvmCritical5 &&
           r.runs_p > kRunsPMin;
  });

  criterion(6, "write-to-read gaps absent from sealed traces", [] {
    for (int passes : {1, 3}) {
      for (std::uint64_t seed : {11u, 12u, 13u}) {
        experiment::ExperimentConfig cfg = sweep_config(seed, 3, memsim::Mode::SparseLock);
        cfg.layers[0].passes = passes;
        memsim::Trace t = memsim::attacker_view(
            experiment::run_trace(experiment::build_workload(cfg), cfg));
        if (!attacks::raw_distance(t).empty()) return false;
      }
    }
    experiment::ExperimentConfig base = sweep_config(11, 3, memsim::Mode::Baseline);
    base.layers[0].passes = 3;
    memsim::Trace bt = experiment::run_trace(experiment::build_workload(base), base);
    return !attacks::raw_distance(bt).empty();
  });

  criterion(7, "codec round-trips and hybrid compression margin", [] {
    Rng rng(700);
    for (int trial = 0; trial < 10000; ++trial) {
      std::vector<std::uint8_t> block = mixed_block(rng, 1 + rng.below(4));
      if (compress::bdi_decompress(compress::bdi_compress(block)) != block) return false;

      std::vector<std::uint8_t> words(4 * (1 + rng.below(32)));
      if (rng.below(2) == 0) rng.fill_bytes(words.data(), words.size());
      if (compress::fpc_decompress(compress::fpc_compress(words)) != words) return false;

      std::vector<std::uint8_t> bytes(1 + rng.below(200));
      if (rng.below(2) == 0) {
        std::uint8_t fill = static_cast<std::uint8_t>(rng.below(4));
        for (std::uint8_t& v : bytes) v = fill;
      } else {
        rng.fill_bytes(bytes.data(), bytes.size());
      }
      if (compress::rle_decompress(compress::rle_compress(bytes)) != bytes) return false;
      if (compress::huffman_decompress(compress::huffman_compress(bytes)) != bytes) return false;

      Tensor t = random_tile(rng, rng.next_double(), 4 + static_cast<int>(rng.below(27)));
      compress::CscEncoding csc = compress::csc_encode(t);
      if (compress::csc_decode(csc, t.dims) != t) return false;
      if (compress::hybrid_decompress(compress::hybrid_auto(t), t.dims) != t) return false;
    }

    // high-dynamic-range tiles at 60-80% sparsity: hybrid vs plain bdi
    int margin_ok = 0;
    for (int tile = 0; tile < 100; ++tile) {
      double sp = 0.6 + 0.2 * rng.next_double();
      Tensor t = random_tile(rng, sp, 20);
      double ratio_bdi = compress::compression_ratio(compress::bdi_compress(tensor_bytes(t)));
      double ratio_hy = compress::compression_ratio(compress::hybrid_auto(t));
      margin_ok += ratio_hy >= 1.5 * ratio_bdi;
    }
    std::printf("     margin >= 1.5x on %d/100 tiles (need >= 90)\n", margin_ok);
    return margin_ok >= 90;
  });

  criterion(8, "compression halves traffic at 70% sparsity", [] {
    experiment::ExperimentConfig cfg;
    cfg.seed = 11;
    cfg.quant_bits = 8;
    experiment::LayerConfig lc;
    lc.ifmap_dims = {32, 32};
    lc.filter_size = 3;
    lc.weight_sparsity = 0.7;
    lc.tile_extents = {16, 16};
    cfg.layers = {lc};
    cfg.probes.input_sparsity = 0.7;
    cfg.mode = memsim::Mode::Baseline;
    std::uint64_t base =
        memsim::traffic_bytes(experiment::run_trace(experiment::build_workload(cfg), cfg))
            .total_bytes;
    cfg.mode = memsim::Mode::CompressOnly;
    std::uint64_t packed =
        memsim::traffic_bytes(experiment::run_trace(experiment::build_workload(cfg), cfg))
            .total_bytes;
    double ratio = static_cast<double>(packed) / static_cast<double>(base);
    std::printf("     compressed/baseline = %.4f (need <= 0.50)\n", ratio);
    return ratio <= 0.50;
  });

  criterion(9, "tamper and replay always caught, clean never flagged", [] {
    int tamper_hits = 0, replay_hits = 0, clean_ok = 0;
    const convnet::Role roles[3] = {convnet::Role::Ifmap, convnet::Role::Weight,
                                    convnet::Role::Ofmap};
    for (int trial = 0; trial < 100; ++trial) {
      experiment::ExperimentConfig cfg;
      cfg.seed = 3000 + static_cast<std::uint64_t>(trial);
      cfg.quant_bits = 8;
      experiment::LayerConfig lc;
      lc.ifmap_dims = {16, 16};
      lc.filter_size = 3;
      lc.weight_sparsity = 0.5;
      lc.tile_extents = {8, 8};
      cfg.layers = {lc};
      cfg.accel.bin_capacity = 2048;
      memsim::Workload w = experiment::build_workload(cfg);
      memsim::SimConfig sim = experiment::sim_config(cfg);
      memsim::ProtectedRun run = memsim::run_protected(w, sim);
      memsim::SimConfig sim2 = sim;
      sim2.run_nonce = 1;
      memsim::ProtectedRun rerun = memsim::run_protected(w, sim2);

      convnet::Role role = roles[trial % 3];
      const sealing::PackResult& pack = run.layers[0].packs.at(role);
      const memsim::IntegrityState& st = run.layers[0].integrity.at(role);
      std::int64_t uid = run.layers[0].uid_base.at(role);

      clean_ok += memsim::read_back_mac(pack, st, uid) == st.write_mac;

      Rng rng(cfg.seed);
      sealing::PackResult tampered;
      tampered.bins = pack.bins;
      tampered.tmt = pack.tmt;
      int victim = static_cast<int>(rng.below(pack.tmt.size()));
      const sealing::TmtEntry& e = tampered.tmt.lookup(victim);
      std::uint32_t off = e.addr + static_cast<std::uint32_t>(rng.below(e.length));
      tampered.bins[static_cast<std::size_t>(e.bin_id)].payload[off] ^=
          static_cast<std::uint8_t>(1 + rng.below(255));
      tamper_hits += memsim::read_back_mac(tampered, st, uid) != st.write_mac;

      // stale bins from the previous run presented to the fresh MAC state
      const memsim::IntegrityState& st2 = rerun.layers[0].integrity.at(role);
      replay_hits += memsim::read_back_mac(pack, st2, uid) != st2.write_mac;
    }
    std::printf("     tamper %d/100, replay %d/100, clean %d/100\n", tamper_hits, replay_hits,
                clean_ok);
    return tamper_hits == 100 && replay_hits == 100 && clean_ok == 100;
  });

  criterion(10, "next-fit invariants and 2x optimality bound", [] {
    Rng rng(1010);
    for (int trial = 0; trial < 10000; ++trial) {
      std::uint32_t cap = 64 + static_cast<std::uint32_t>(rng.below(4096));
      int n = static_cast<int>(rng.below(21));
      std::vector<sealing::SealedTile> tiles;
      std::vector<std::uint32_t> sizes;
      for (int i = 0; i < n; ++i) {
        std::uint32_t len = 1 + static_cast<std::uint32_t>(rng.below(cap));
        sizes.push_back(len);
        sealing::SealedTile s;
        s.tile_id = i;
        s.bytes.resize(len);
        rng.fill_bytes(s.bytes.data(), s.bytes.size());
        tiles.push_back(std::move(s));
      }
      sealing::PadSource pads(rng.next_u64());
      sealing::PackResult pr = sealing::next_fit_pack(tiles, cap, convnet::Role::Ifmap, pads);

      int prev_bin = -1;
      std::uint32_t prev_end = 0;
      for (int i = 0; i < n; ++i) {
        const sealing::TmtEntry& e = pr.tmt.lookup(i);
        if (e.length != sizes[static_cast<std::size_t>(i)]) return false;  // never split
        if (e.addr + e.length > cap) return false;                         // never overflow
        if (e.bin_id < prev_bin) return false;                             // order preserved
        if (e.bin_id == prev_bin && e.addr != prev_end) return false;      // contiguous
        if (e.bin_id != prev_bin && e.addr != 0) return false;
        if (sealing::extract_tile(pr, i) != tiles[static_cast<std::size_t>(i)].bytes)
          return false;
        prev_bin = e.bin_id;
        prev_end = e.addr + e.length;
      }
      for (const sealing::Bin& b : pr.bins) {
        if (b.fill() != cap || b.state != sealing::BinState::Closed) return false;
      }

      if (n >= 1 && n <= 10) {
        int opt = optimal_bins(sizes, cap);
        if (static_cast<int>(pr.bins.size()) > 2 * opt) {
          std::printf("     %zu bins vs optimum %d\n", pr.bins.size(), opt);
          return false;
        }
      }
    }
    return true;
  });

  if (g_failures == 0) {
    std::printf("all criteria passed\n");
    return 0;
  }
  std::printf("%d criteria FAILED\n", g_failures);
  return 1;
}
