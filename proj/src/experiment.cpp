#include "sparselock/experiment.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "sparselock/rng.hpp"

namespace sparselock::experiment {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string mode_name(memsim::Mode m) {
  switch (m) {
    case memsim::Mode::Baseline:
      return "baseline";
    case memsim::Mode::CompressOnly:
      return "compress_only";
    default:
      return "sparselock";
  }
}

memsim::Mode mode_from(const std::string& s) {
  if (s == "baseline") return memsim::Mode::Baseline;
  if (s == "compress_only") return memsim::Mode::CompressOnly;
  if (s == "sparselock") return memsim::Mode::SparseLock;
  throw ConfigError("unknown mode: " + s);
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.quant_bits < 2 || cfg.quant_bits > 31) throw ConfigError("quant_bits must be 2..31");
  if (cfg.workers < 1) throw ConfigError("workers must be >= 1");
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerConfig& lc = cfg.layers[i];
    if (lc.filter_size < 1 || lc.filter_size % 2 == 0)
      throw ConfigError("filter_size must be odd and positive");
    if (lc.ifmap_dims.empty() || lc.ifmap_dims.size() > 2)
      throw ConfigError("ifmap_dims must be rank 1 or 2");
    if (lc.ifmap_dims.size() != lc.tile_extents.size())
      throw ConfigError("tile_extents rank must match ifmap_dims");
    for (int d : lc.ifmap_dims)
      if (d < 1) throw ConfigError("ifmap_dims must be positive");
    for (int e : lc.tile_extents)
      if (e < 1) throw ConfigError("tile_extents must be positive");
    if (lc.weight_sparsity < 0.0 || lc.weight_sparsity >= 1.0)
      throw ConfigError("weight_sparsity must be in [0,1)");
    if (lc.passes < 1) throw ConfigError("passes must be >= 1");
    if (i > 0 && lc.ifmap_dims != cfg.layers[i - 1].ifmap_dims)
      throw ConfigError("chained layers must keep the feature-map extents");
  }
  for (int s : cfg.strides)
    if (s < 2) throw ConfigError("strides must be >= 2");
  if (cfg.probes.kind != "impulse" && cfg.probes.kind != "random")
    throw ConfigError("probe kind must be impulse or random");
  if (cfg.probes.input_sparsity < 0.0 || cfg.probes.input_sparsity >= 1.0)
    throw ConfigError("input_sparsity must be in [0,1)");
}

Value quant_value(Rng& rng, int quant_bits) {
  auto half = std::int64_t{1} << (quant_bits - 1);
  for (;;) {
    auto v = static_cast<Value>(rng.int_in(-half, half - 1));
    if (v != 0) return v;
  }
}

Tensor random_sparse(Rng& rng, const std::vector<int>& dims, double sparsity, int quant_bits) {
  Tensor t = Tensor::zeros(dims);
  for (Value& v : t.values) {
    if (rng.next_double() >= sparsity) v = quant_value(rng, quant_bits);
  }
  return t;
}

std::vector<int> filter_dims(const LayerConfig& lc) {
  if (lc.ifmap_dims.size() == 1) return {lc.filter_size};
  return {lc.filter_size, lc.filter_size};
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["mode"] = mode_name(mode);
  j["workers"] = workers;
  j["quant_bits"] = quant_bits;
  j["out_dir"] = out_dir;
  j["accel"] = {{"bin_capacity", accel.bin_capacity},
                {"residency_bins", accel.residency_bins},
                {"pe_rows", accel.pe_rows},
                {"pe_cols", accel.pe_cols},
                {"compression_buffer", accel.compression_buffer},
                {"global_buffer", accel.global_buffer},
                {"pe_register", accel.pe_register}};
  j["layers"] = json::array();
  for (const LayerConfig& lc : layers) {
    j["layers"].push_back({{"ifmap_dims", lc.ifmap_dims},
                           {"filter_size", lc.filter_size},
                           {"weight_sparsity", lc.weight_sparsity},
                           {"tile_extents", lc.tile_extents},
                           {"relu", lc.relu},
                           {"passes", lc.passes}});
  }
  j["probes"] = {{"count", probes.count},
                 {"kind", probes.kind},
                 {"input_sparsity", probes.input_sparsity}};
  j["strides"] = strides;
  j["stride_trace_len"] = stride_trace_len;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON");
  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.mode = mode_from(j.value("mode", mode_name(cfg.mode)));
  cfg.workers = j.value("workers", cfg.workers);
  cfg.quant_bits = j.value("quant_bits", cfg.quant_bits);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("accel")) {
    const json& a = j["accel"];
    cfg.accel.bin_capacity = a.value("bin_capacity", cfg.accel.bin_capacity);
    cfg.accel.residency_bins = a.value("residency_bins", cfg.accel.residency_bins);
    cfg.accel.pe_rows = a.value("pe_rows", cfg.accel.pe_rows);
    cfg.accel.pe_cols = a.value("pe_cols", cfg.accel.pe_cols);
    cfg.accel.compression_buffer = a.value("compression_buffer", cfg.accel.compression_buffer);
    cfg.accel.global_buffer = a.value("global_buffer", cfg.accel.global_buffer);
    cfg.accel.pe_register = a.value("pe_register", cfg.accel.pe_register);
  }
  if (j.contains("layers")) {
    for (const json& l : j["layers"]) {
      LayerConfig lc;
      lc.ifmap_dims = l.value("ifmap_dims", lc.ifmap_dims);
      lc.filter_size = l.value("filter_size", lc.filter_size);
      lc.weight_sparsity = l.value("weight_sparsity", lc.weight_sparsity);
      lc.tile_extents = l.value("tile_extents", lc.tile_extents);
      lc.relu = l.value("relu", lc.relu);
      lc.passes = l.value("passes", lc.passes);
      cfg.layers.push_back(lc);
    }
  }
  if (j.contains("probes")) {
    const json& p = j["probes"];
    cfg.probes.count = p.value("count", cfg.probes.count);
    cfg.probes.kind = p.value("kind", cfg.probes.kind);
    cfg.probes.input_sparsity = p.value("input_sparsity", cfg.probes.input_sparsity);
  }
  cfg.strides = j.value("strides", cfg.strides);
  cfg.stride_trace_len = j.value("stride_trace_len", cfg.stride_trace_len);
  validate(cfg);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_json_text(buf.str());
}

memsim::SimConfig sim_config(const ExperimentConfig& cfg) {
  memsim::SimConfig sc;
  sc.mode = cfg.mode;
  sc.bin_capacity = cfg.accel.bin_capacity;
  sc.residency_bins = cfg.accel.residency_bins;
  sc.seed = cfg.seed;
  sc.run_nonce = cfg.run_nonce;
  sc.loop.passes = 1;
  for (const LayerConfig& lc : cfg.layers) sc.loop.passes = std::max(sc.loop.passes, lc.passes);
  return sc;
}

memsim::Workload build_workload(const ExperimentConfig& cfg) {
  if (cfg.layers.empty()) throw ConfigError("workload needs at least one layer");
  memsim::Workload w;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerConfig& lc = cfg.layers[i];
    memsim::LayerWorkload lw;
    lw.spec.ifmap_dims = lc.ifmap_dims;
    lw.spec.filter_size = lc.filter_size;
    lw.spec.relu = lc.relu;
    lw.tile_extents = lc.tile_extents;
    Rng rng(derive_seed(cfg.seed, 0x77e1 + i));
    Tensor dense = random_sparse(rng, filter_dims(lc), 0.0, cfg.quant_bits);
    lw.weights = convnet::prune_magnitude(dense, lc.weight_sparsity);
    w.layers.push_back(std::move(lw));
  }
  w.layers[0].ifmap = random_ifmap(cfg, 0);
  return w;
}

memsim::Workload probe_workload(const ExperimentConfig& cfg, const Tensor& ifmap) {
  memsim::Workload w = build_workload(cfg);
  if (ifmap.dims != w.layers[0].spec.ifmap_dims) throw ConfigError("probe ifmap extents mismatch");
  w.layers[0].ifmap = ifmap;
  return w;
}

Tensor random_ifmap(const ExperimentConfig& cfg, std::uint64_t salt) {
  if (cfg.layers.empty()) throw ConfigError("no layers configured");
  Rng rng(derive_seed(cfg.seed, 0x1f00d + salt));
  return random_sparse(rng, cfg.layers[0].ifmap_dims, cfg.probes.input_sparsity, cfg.quant_bits);
}

memsim::Trace run_trace(const memsim::Workload& w, const ExperimentConfig& cfg,
                        const memsim::ContentSink& sink) {
  memsim::Trace t = memsim::gen_trace(w, sim_config(cfg), sink);
  t.config_json = cfg.to_json();
  return t;
}

double write_bytes_observation(const memsim::Trace& t) {
  return static_cast<double>(memsim::traffic_bytes(t).write_bytes);
}

std::vector<double> per_layer_write_bytes(const memsim::Trace& t, std::size_t layers) {
  std::vector<double> out(layers, 0.0);
  for (const memsim::MemEvent& e : t.events) {
    if (e.op != memsim::Op::W) continue;
    if (e.layer >= 0 && static_cast<std::size_t>(e.layer) < layers) {
      out[static_cast<std::size_t>(e.layer)] += e.bytes;
    }
  }
  return out;
}

attacks::ProbeFn make_probe_fn(const ExperimentConfig& cfg) {
  auto calls = std::make_shared<std::atomic<std::uint64_t>>(0);
  return [cfg, calls](const Tensor& ifmap) {
    ExperimentConfig pc = cfg;
    pc.run_nonce = derive_seed(cfg.run_nonce, calls->fetch_add(1) + 1);
    memsim::Trace t = run_trace(probe_workload(pc, ifmap), pc);
    return per_layer_write_bytes(t, pc.layers.size())[0];
  };
}

attacks::ProbeFn make_oracle_probe_fn(const ExperimentConfig& cfg, std::size_t layer_index) {
  if (layer_index >= cfg.layers.size()) throw ConfigError("layer index out of range");
  return [cfg, layer_index](const Tensor& ifmap) {
    std::vector<Tensor> ofmaps = memsim::forward(probe_workload(cfg, ifmap));
    return static_cast<double>(nnz(ofmaps[layer_index]));
  };
}

ContentEnsemble content_ensemble(const ExperimentConfig& cfg, const std::vector<int>& filter_sizes,
                                 int probe_count) {
  if (filter_sizes.empty()) throw ConfigError("need at least one filter size");
  if (probe_count < 1) throw ConfigError("need at least one probe");

  struct ProbeOut {
    std::vector<double> bursts;
    std::vector<int> layers;
    double theta = 0.0;
  };
  std::vector<ProbeOut> slots(static_cast<std::size_t>(probe_count));

  auto run_probe = [&](int p) {
    int theta = filter_sizes[static_cast<std::size_t>(p) % filter_sizes.size()];
    ExperimentConfig pc = cfg;
    for (LayerConfig& lc : pc.layers) lc.filter_size = theta;
    pc.run_nonce = 1000 + static_cast<std::uint64_t>(p);
    Tensor ifmap = random_ifmap(pc, 1000 + static_cast<std::uint64_t>(p));
    ProbeOut& out = slots[static_cast<std::size_t>(p)];
    out.theta = theta;
    memsim::ContentSink sink = [&out](const memsim::MemEvent& e,
                                      std::span<const std::uint8_t> payload) {
      for (std::size_t off = 0; off < payload.size(); off += kBurstBytes) {
        std::size_t end = std::min(off + kBurstBytes, payload.size());
        double sum = 0.0;
        for (std::size_t i = off; i < end; ++i) sum += payload[i];
        out.bursts.push_back(sum);
        out.layers.push_back(e.layer);
      }
    };
    run_trace(probe_workload(pc, ifmap), pc, sink);
  };

  int workers = std::min(cfg.workers, probe_count);
  if (workers <= 1) {
    for (int p = 0; p < probe_count; ++p) run_probe(p);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          int p = next.fetch_add(1);
          if (p >= probe_count) return;
          run_probe(p);
        }
      });
    }
    for (std::thread& t : pool) t.join();
  }

  ContentEnsemble ens;
  for (const ProbeOut& out : slots) {
    ens.burst_layout.push_back(static_cast<std::uint32_t>(out.bursts.size()));
    double total = 0.0;
    for (std::size_t b = 0; b < out.bursts.size(); ++b) {
      ens.bursts.push_back(out.bursts[b]);
      ens.burst_theta.push_back(out.theta);
      ens.burst_layer.push_back(out.layers[b]);
      total += out.bursts[b];
    }
    ens.per_probe_feature.push_back(total);
    ens.probe_theta.push_back(out.theta);
  }
  return ens;
}

ContentEnsemble random_reference(const ContentEnsemble& like, std::uint64_t seed) {
  ContentEnsemble ref;
  ref.burst_layout = like.burst_layout;
  ref.probe_theta = like.probe_theta;
  ref.burst_theta = like.burst_theta;
  ref.burst_layer = like.burst_layer;
  Rng rng(seed);
  std::size_t cursor = 0;
  std::array<std::uint8_t, kBurstBytes> block{};
  for (std::uint32_t per_probe : like.burst_layout) {
    double total = 0.0;
    for (std::uint32_t b = 0; b < per_probe; ++b, ++cursor) {
      rng.fill_bytes(block.data(), block.size());
      double sum = 0.0;
      for (std::uint8_t byte : block) sum += byte;
      ref.bursts.push_back(sum);
      total += sum;
    }
    ref.per_probe_feature.push_back(total);
  }
  return ref;
}

std::string MetricsReport::to_json() const {
  ordered_json j;
  j["fi_protected"] = fi_protected;
  j["fi_random"] = fi_random;
  j["fi_rel_gap"] = fi_rel_gap;
  j["cr_protected"] = std::isinf(cr_protected) ? json("inf") : json(cr_protected);
  j["cr_random"] = std::isinf(cr_random) ? json("inf") : json(cr_random);
  j["mi_protected"] = mi_protected;
  j["mi_random"] = mi_random;
  j["cvm"] = cvm;
  j["runs_p"] = runs_p;
  j["pearson_vs_random"] = pearson_vs_random;
  j["errors"] = errors;
  return j.dump(2);
}

MetricsReport closeness_metrics(const ExperimentConfig& cfg, const std::vector<int>& filter_sizes,
                                int probe_count) {
  ContentEnsemble ens = content_ensemble(cfg, filter_sizes, probe_count);
  ContentEnsemble ref = random_reference(ens, derive_seed(cfg.seed, 0x4ef));
  return closeness_metrics(ens, ref);
}

MetricsReport closeness_metrics(const ContentEnsemble& ens, const ContentEnsemble& ref) {
  MetricsReport r;
  try {
    auto [lo, hi] = leakage::pooled_range(ens.bursts, ref.bursts);
    leakage::EmpiricalDist dp = leakage::make_distribution(ens.bursts, leakage::kFisherBins, lo, hi);
    leakage::EmpiricalDist dr = leakage::make_distribution(ref.bursts, leakage::kFisherBins, lo, hi);
    r.fi_protected = leakage::fisher_discrete(dp);
    r.fi_random = leakage::fisher_discrete(dr);
    r.fi_rel_gap = r.fi_random > 0.0
                       ? std::abs(r.fi_protected - r.fi_random) / r.fi_random
                       : std::abs(r.fi_protected - r.fi_random);
    r.cr_protected = leakage::cramer_rao(r.fi_protected);
    r.cr_random = leakage::cramer_rao(r.fi_random);
  } catch (const Error& e) {
    r.errors.push_back(std::string("fisher: ") + e.what());
  }
  try {
    r.mi_protected = leakage::mutual_information(ens.bursts, ens.burst_theta);
    r.mi_random = leakage::mutual_information(ref.bursts, ref.burst_theta);
  } catch (const Error& e) {
    r.errors.push_back(std::string("mi: ") + e.what());
  }
  try {
    r.cvm = leakage::cvm_distance(ens.bursts, ref.bursts);
  } catch (const Error& e) {
    r.errors.push_back(std::string("cvm: ") + e.what());
  }
  if (ens.bursts.size() < kRunsMinSamples) {
    r.runs_p = std::numeric_limits<double>::quiet_NaN();
    r.errors.push_back("runs: sample size " + std::to_string(ens.bursts.size()) +
                       " too small (need >= " + std::to_string(kRunsMinSamples) + " bursts)");
  } else {
    try {
      leakage::RunsResult runs = leakage::runs_test(leakage::binarize_by_median(ens.bursts));
      r.runs_p = runs.p_value;
      if (!runs.applicable) r.errors.push_back("runs: proportion precheck failed");
    } catch (const Error& e) {
      r.errors.push_back(std::string("runs: ") + e.what());
    }
  }
  try {
    r.pearson_vs_random = leakage::pearson(ens.bursts, ref.bursts);
  } catch (const Error& e) {
    r.errors.push_back(std::string("pearson: ") + e.what());
  }
  return r;
}

std::vector<LayerMetricsRow> per_layer_metrics(const ContentEnsemble& ens,
                                               const ContentEnsemble& ref) {
  if (ens.bursts.size() != ref.bursts.size() || ens.bursts.size() != ens.burst_layer.size()) {
    throw ConfigError("ensembles must share one burst layout");
  }
  std::map<int, std::vector<std::size_t>> by_layer;
  for (std::size_t i = 0; i < ens.burst_layer.size(); ++i) {
    by_layer[ens.burst_layer[i]].push_back(i);
  }
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<LayerMetricsRow> rows;
  for (const auto& [layer, idx] : by_layer) {
    LayerMetricsRow row;
    row.layer = layer;
    std::vector<double> p, q, theta;
    p.reserve(idx.size());
    q.reserve(idx.size());
    theta.reserve(idx.size());
    for (std::size_t i : idx) {
      p.push_back(ens.bursts[i]);
      q.push_back(ref.bursts[i]);
      theta.push_back(ens.burst_theta[i]);
    }
    try {
      auto [lo, hi] = leakage::pooled_range(p, q);
      row.fi_protected = leakage::fisher_discrete(leakage::make_distribution(p, leakage::kFisherBins, lo, hi));
      row.fi_random = leakage::fisher_discrete(leakage::make_distribution(q, leakage::kFisherBins, lo, hi));
      row.fi_rel_gap = row.fi_random > 0.0
                           ? std::abs(row.fi_protected - row.fi_random) / row.fi_random
                           : std::abs(row.fi_protected - row.fi_random);
    } catch (const Error&) {
      row.fi_protected = row.fi_random = row.fi_rel_gap = nan;
    }
    try {
      row.mi_protected = leakage::mutual_information(p, theta);
      row.mi_random = leakage::mutual_information(q, theta);
    } catch (const Error&) {
      row.mi_protected = row.mi_random = nan;
    }
    try {
      row.cvm = leakage::cvm_distance(p, q);
    } catch (const Error&) {
      row.cvm = nan;
    }
    if (p.size() < kRunsMinSamples) {
      row.runs_p = nan;
    } else {
      try {
        row.runs_p = leakage::runs_test(leakage::binarize_by_median(p)).p_value;
      } catch (const Error&) {
        row.runs_p = nan;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

std::string layer_metrics_csv(const std::vector<LayerMetricsRow>& rows) {
  std::ostringstream os;
  os << "layer,fi_protected,fi_random,fi_rel_gap,mi_protected,mi_random,cvm,runs_p\n";
  os.precision(12);
  for (const LayerMetricsRow& r : rows) {
    os << r.layer << ',' << r.fi_protected << ',' << r.fi_random << ',' << r.fi_rel_gap << ','
       << r.mi_protected << ',' << r.mi_random << ',' << r.cvm << ',' << r.runs_p << '\n';
  }
  return os.str();
}

std::vector<CharacterizationRow> characterize_codecs(const ExperimentConfig& cfg, int tiles) {
  if (tiles < 1) throw ConfigError("need at least one tile");
  std::vector<int> extents =
      cfg.layers.empty() ? std::vector<int>{16, 16} : cfg.layers[0].tile_extents;
  std::vector<CharacterizationRow> rows;
  for (int t = 0; t < tiles; ++t) {
    double sparsity = static_cast<double>(t % 9 + 1) / 10.0;
    Rng rng(derive_seed(cfg.seed, 0xc0dec + static_cast<std::uint64_t>(t)));
    Tensor tile = random_sparse(rng, extents, sparsity, cfg.quant_bits);
    std::vector<std::uint8_t> bytes = tensor_bytes(tile);

    auto timed = [&](const std::string& name, auto&& fn) {
      auto t0 = std::chrono::steady_clock::now();
      compress::CompressedBlock block = fn();
      auto t1 = std::chrono::steady_clock::now();
      double us = std::chrono::duration<double, std::micro>(t1 - t0).count();
      rows.push_back({t, sparsity, name, compress::compression_ratio(block), us});
    };
    timed("bdi", [&] { return compress::bdi_compress(bytes); });
    timed("fpc", [&] { return compress::fpc_compress(bytes); });
    timed("rle", [&] { return compress::rle_compress(bytes); });
    timed("huffman", [&] { return compress::huffman_compress(bytes); });
    timed("hybrid", [&] { return compress::hybrid_auto(tile); });
  }
  return rows;
}

std::string characterization_csv(const std::vector<CharacterizationRow>& rows) {
  std::ostringstream os;
  os << "tensor_id,sparsity,codec,ratio,micros\n";
  for (const CharacterizationRow& r : rows) {
    os << r.tensor_id << ',' << r.sparsity << ',' << r.codec << ',' << r.ratio << ',' << r.micros
       << '\n';
  }
  return os.str();
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace sparselock::experiment
