#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparselock/attacks.hpp"
#include "sparselock/leakage.hpp"
#include "sparselock/memsim.hpp"

namespace sparselock::experiment {

struct LayerConfig {
  std::vector<int> ifmap_dims{32, 32};
  int filter_size = 5;
  double weight_sparsity = 0.5;
  std::vector<int> tile_extents{16, 16};
  bool relu = false;  // clamp negative outputs to zero (post-activation sparsity)
  int passes = 1;
};

struct AccelConfig {
  std::uint32_t bin_capacity = sealing::kDefaultBinCapacity;
  int residency_bins = 3;
  int pe_rows = 16;
  int pe_cols = 12;
  std::uint32_t compression_buffer = 186368;
  std::uint32_t global_buffer = 186368;
  std::uint32_t pe_register = 440;
};

struct ProbeConfig {
  int count = 0;                 // 0 = single run, no probe ensemble
  std::string kind = "impulse";  // impulse | random
  double input_sparsity = 0.9;   // for random probes
};

struct ExperimentConfig {
  std::uint64_t seed = 42;
  memsim::Mode mode = memsim::Mode::SparseLock;
  int workers = 1;
  int quant_bits = 12;  // synthetic values drawn from [-2^(b-1), 2^(b-1))
  std::string out_dir = "out";
  AccelConfig accel;
  std::vector<LayerConfig> layers;
  ProbeConfig probes;
  std::vector<int> strides;  // nonempty = synthetic stride workload
  std::size_t stride_trace_len = 6630;
  std::uint64_t run_nonce = 0;  // per-run sealing uniquifier; runtime state, not persisted

  std::string to_json() const;
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

memsim::SimConfig sim_config(const ExperimentConfig& cfg);

// Seeded synthetic workload: pruned random weights per layer, random ifmap.
memsim::Workload build_workload(const ExperimentConfig& cfg);
// Same workload with the layer-0 ifmap replaced by the probe input.
memsim::Workload probe_workload(const ExperimentConfig& cfg, const Tensor& ifmap);
Tensor random_ifmap(const ExperimentConfig& cfg, std::uint64_t salt);

memsim::Trace run_trace(const memsim::Workload& w, const ExperimentConfig& cfg,
                        const memsim::ContentSink& sink = {});

// Scalar a write-size attacker extracts from one trace (total W bytes).
double write_bytes_observation(const memsim::Trace& t);
std::vector<double> per_layer_write_bytes(const memsim::Trace& t, std::size_t layers);

// Attacker probe functions against the simulated target.
attacks::ProbeFn make_probe_fn(const ExperimentConfig& cfg);  // write-size proxy
attacks::ProbeFn make_oracle_probe_fn(const ExperimentConfig& cfg,
                                      std::size_t layer_index = 0);  // exact ofmap nnz

inline constexpr std::size_t kBurstBytes = 64;

// Content-level observations of one ensemble: per-burst byte sums of every
// attacker-visible payload, plus per-probe aggregates.
struct ContentEnsemble {
  std::vector<double> bursts;             // concatenated per-burst byte sums
  std::vector<double> burst_theta;        // varied parameter, aligned to bursts
  std::vector<int> burst_layer;           // originating layer, aligned to bursts
  std::vector<double> per_probe_feature;  // total content sum per probe
  std::vector<double> probe_theta;
  std::vector<std::uint32_t> burst_layout;  // bursts per probe (mirrored by the reference)
};

// Probes cycle through filter_sizes (the varied parameter); inputs are seeded
// random sparse tensors. Worker count from cfg; output order canonical.
ContentEnsemble content_ensemble(const ExperimentConfig& cfg, const std::vector<int>& filter_sizes,
                                 int probe_count);
// Reference with identical burst structure, payload replaced by seeded
// uniform random bytes.
ContentEnsemble random_reference(const ContentEnsemble& like, std::uint64_t seed);

struct MetricsReport {
  double fi_protected = 0.0;
  double fi_random = 0.0;
  double fi_rel_gap = 0.0;
  double cr_protected = 0.0;
  double cr_random = 0.0;
  double mi_protected = 0.0;
  double mi_random = 0.0;
  double cvm = 0.0;
  double runs_p = 0.0;
  double pearson_vs_random = 0.0;
  std::vector<std::string> errors;
  std::string to_json() const;
};

MetricsReport closeness_metrics(const ExperimentConfig& cfg, const std::vector<int>& filter_sizes,
                                int probe_count);
MetricsReport closeness_metrics(const ContentEnsemble& ens, const ContentEnsemble& ref);

// The runs test needs this many bursts before its normal approximation is
// meaningful; smaller ensembles get an error record instead of a p-value.
inline constexpr std::size_t kRunsMinSamples = 100;

// One protected-vs-reference row per layer, computed on that layer's bursts.
struct LayerMetricsRow {
  int layer = 0;
  double fi_protected = 0.0;
  double fi_random = 0.0;
  double fi_rel_gap = 0.0;
  double mi_protected = 0.0;
  double mi_random = 0.0;
  double cvm = 0.0;
  double runs_p = 0.0;
};
std::vector<LayerMetricsRow> per_layer_metrics(const ContentEnsemble& ens,
                                               const ContentEnsemble& ref);
std::string layer_metrics_csv(const std::vector<LayerMetricsRow>& rows);

// Codec characterization row set over synthetic tiles.
struct CharacterizationRow {
  int tensor_id;
  double sparsity;
  std::string codec;
  double ratio;
  double micros;
};
std::vector<CharacterizationRow> characterize_codecs(const ExperimentConfig& cfg, int tiles);
std::string characterization_csv(const std::vector<CharacterizationRow>& rows);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t v);

}  // namespace sparselock::experiment
