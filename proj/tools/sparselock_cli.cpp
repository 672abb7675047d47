#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "sparselock/experiment.hpp"

namespace fs = std::filesystem;
using namespace sparselock;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> workers;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("-c,--config", o.config_path, "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--mode", o.mode, "override mode: baseline|compress_only|sparselock");
  cmd->add_option("--seed", o.seed, "override RNG seed");
  cmd->add_option("-o,--out", o.out, "override output directory");
  cmd->add_option("--workers", o.workers, "override worker thread count");
}

experiment::ExperimentConfig load_config(const CommonOpts& o) {
  experiment::ExperimentConfig cfg = experiment::ExperimentConfig::load(o.config_path);
  std::string text = cfg.to_json();
  nlohmann::json j = nlohmann::json::parse(text);
  if (!o.mode.empty()) j["mode"] = o.mode;
  if (o.seed) j["seed"] = *o.seed;
  if (!o.out.empty()) j["out_dir"] = o.out;
  if (o.workers) j["workers"] = *o.workers;
  return experiment::ExperimentConfig::from_json_text(j.dump());
}

fs::path ensure_out(const experiment::ExperimentConfig& cfg) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string());
  os << text;
}

std::uint64_t file_digest(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read back " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return experiment::fnv1a64(bytes);
}

memsim::Trace make_trace(const experiment::ExperimentConfig& cfg) {
  if (!cfg.strides.empty()) {
    memsim::Trace t = memsim::gen_stride_trace(cfg.strides, cfg.stride_trace_len);
    t.config_json = cfg.to_json();
    return t;
  }
  return experiment::run_trace(experiment::build_workload(cfg), cfg);
}

std::string role_name(convnet::Role role) {
  switch (role) {
    case convnet::Role::Ifmap:
      return "ifmap";
    case convnet::Role::Weight:
      return "weight";
    default:
      return "ofmap";
  }
}

int cmd_gen(const CommonOpts& o) {
  experiment::ExperimentConfig cfg = load_config(o);
  fs::path dir = ensure_out(cfg);

  nlohmann::ordered_json manifest;
  manifest["seed"] = cfg.seed;
  manifest["quant_bits"] = cfg.quant_bits;
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();

  auto record = [&](const fs::path& path) {
    nlohmann::ordered_json f;
    f["path"] = path.filename().string();
    f["bytes"] = fs::file_size(path);
    f["digest"] = experiment::hex64(file_digest(path));
    files.push_back(f);
  };

  if (!cfg.layers.empty()) {
    memsim::Workload w = experiment::build_workload(cfg);
    memsim::SimConfig sc = experiment::sim_config(cfg);

    fs::path ifmap_path = dir / "ifmap.sltn";
    save_tensor(ifmap_path.string(), w.layers[0].ifmap);
    record(ifmap_path);

    for (std::size_t i = 0; i < w.layers.size(); ++i) {
      const memsim::LayerWorkload& lw = w.layers[i];
      fs::path wpath = dir / ("weights_" + std::to_string(i) + ".sltn");
      save_tensor(wpath.string(), lw.weights);
      record(wpath);

      convnet::TileSchedule sched = convnet::build_layer_schedule(
          lw.spec, lw.tile_extents, static_cast<int>(i), sc.loop);
      std::ostringstream os;
      nlohmann::ordered_json head;
      head["layer"] = i;
      head["filter_size"] = lw.spec.filter_size;
      head["tile_extents"] = sched.tile_extents;
      head["loop_strides"] = sched.loop_strides;
      head["tile_bytes"] = sched.tile_bytes();
      head["accesses"] = sched.accesses.size();
      os << head.dump() << "\n";
      for (const convnet::TileAccess& a : sched.accesses) {
        nlohmann::ordered_json row;
        row["tile"] = a.tile_id;
        row["role"] = role_name(a.role);
        row["kind"] = a.kind == convnet::AccessKind::Read ? "R" : "W";
        os << row.dump() << "\n";
      }
      fs::path spath = dir / ("schedule_" + std::to_string(i) + ".jsonl");
      write_text(spath, os.str());
      record(spath);

      const experiment::LayerConfig& lc = cfg.layers[i];
      std::size_t total = lw.weights.values.size();
      std::size_t zeroed = static_cast<std::size_t>(lc.weight_sparsity *
                                                    static_cast<double>(total));
      nlohmann::ordered_json lj;
      lj["index"] = i;
      lj["filter_size"] = lc.filter_size;
      lj["weight_sparsity_target"] = lc.weight_sparsity;
      lj["target_nnz"] = total - zeroed;
      lj["measured_nnz"] = nnz(lw.weights);
      layers.push_back(lj);
    }
  }

  manifest["files"] = files;
  manifest["layers"] = layers;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << files.size() << " workload files + manifest to " << dir << "\n";
  return 0;
}

int cmd_run(const CommonOpts& o) {
  experiment::ExperimentConfig cfg = load_config(o);
  fs::path dir = ensure_out(cfg);
  memsim::Workload w = experiment::build_workload(cfg);

  std::vector<Tensor> ofmaps = memsim::forward(w);
  for (std::size_t i = 0; i < ofmaps.size(); ++i) {
    save_tensor((dir / ("ofmap_" + std::to_string(i) + ".sltn")).string(), ofmaps[i]);
  }

  nlohmann::ordered_json integrity = nlohmann::ordered_json::array();
  memsim::Trace trace;
  if (cfg.mode == memsim::Mode::SparseLock) {
    memsim::ProtectedRun run = memsim::run_protected(w, experiment::sim_config(cfg));
    trace = std::move(run.trace);
    trace.config_json = cfg.to_json();
    for (std::size_t li = 0; li < run.layers.size(); ++li) {
      const memsim::LayerArtifacts& art = run.layers[li];
      for (const auto& [role, pack] : art.packs) {
        std::string stem = "layer" + std::to_string(li) + "_" + role_name(role);
        sealing::write_bin_store((dir / (stem + ".bins")).string(), pack.bins);
        sealing::write_tmt_jsonl((dir / (stem + ".tmt.jsonl")).string(), pack.tmt);
        const memsim::IntegrityState& st = art.integrity.at(role);
        std::uint64_t verify = memsim::read_back_mac(pack, st, art.uid_base.at(role));
        nlohmann::ordered_json row;
        row["layer"] = li;
        row["role"] = role_name(role);
        row["write_mac"] = experiment::hex64(st.write_mac);
        row["read_mac"] = experiment::hex64(st.read_mac);
        row["store_intact"] = verify == st.write_mac;
        integrity.push_back(row);
      }
    }
  } else {
    trace = experiment::run_trace(w, cfg);
  }
  memsim::write_trace_jsonl((dir / "trace.jsonl").string(), memsim::attacker_view(trace), false);
  memsim::write_trace_jsonl((dir / "trace_oracle.jsonl").string(), trace, true);
  write_text(dir / "config.json", cfg.to_json());
  write_text(dir / "integrity.json", integrity.dump(2) + "\n");

  memsim::TrafficSummary s = memsim::traffic_bytes(trace);
  std::cout << "mode=" << (cfg.mode == memsim::Mode::Baseline        ? "baseline"
                           : cfg.mode == memsim::Mode::CompressOnly ? "compress_only"
                                                                     : "sparselock")
            << " events=" << trace.events.size() << " read=" << s.read_bytes
            << " write=" << s.write_bytes << " total=" << s.total_bytes << "\n";
  std::cout << "artifacts in " << dir << "\n";
  return 0;
}

nlohmann::json opt_int(const std::optional<int>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

int attack_huffduff(const experiment::ExperimentConfig& cfg, const fs::path& dir,
                    nlohmann::ordered_json& j) {
  if (cfg.layers.empty()) throw ConfigError("huffduff needs a layered workload config");
  const std::vector<int>& dims = cfg.layers[0].ifmap_dims;
  attacks::ProbeFn attacker = experiment::make_probe_fn(cfg);
  attacks::ProbeFn oracle = experiment::make_oracle_probe_fn(cfg, 0);

  std::ostringstream csv;
  csv << "axis,position,attacker_bytes,oracle_nnz\n";
  std::optional<int> est_attacker, est_oracle;
  if (dims.size() == 1) {
    attacks::NnzCurve a = attacks::huffduff_probe_1d(dims[0], attacker);
    attacks::NnzCurve n = attacks::huffduff_probe_1d(dims[0], oracle);
    for (std::size_t i = 0; i < a.positions.size(); ++i) {
      csv << "0," << a.positions[i] << ',' << a.observations[i] << ',' << n.observations[i]
          << '\n';
    }
    est_attacker = attacks::estimate_filter_size_1d(dims[0], attacker);
    est_oracle = attacks::estimate_filter_size_1d(dims[0], oracle);
  } else {
    for (int axis = 0; axis < 2; ++axis) {
      attacks::NnzCurve a = attacks::huffduff_probe_2d(dims[0], dims[1], axis, attacker);
      attacks::NnzCurve n = attacks::huffduff_probe_2d(dims[0], dims[1], axis, oracle);
      for (std::size_t i = 0; i < a.positions.size(); ++i) {
        csv << axis << ',' << a.positions[i] << ',' << a.observations[i] << ','
            << n.observations[i] << '\n';
      }
    }
    est_attacker = attacks::estimate_filter_size_2d(dims[0], dims[1], attacker);
    est_oracle = attacks::estimate_filter_size_2d(dims[0], dims[1], oracle);
  }
  write_text(dir / "huffduff_curves.csv", csv.str());

  j["attack"] = "huffduff";
  j["filter_estimate"] = opt_int(est_attacker);
  j["oracle_estimate"] = opt_int(est_oracle);
  j["status"] = est_attacker ? "estimate" : "estimation_failure";
  return 0;
}

int attack_fft(const experiment::ExperimentConfig& cfg, const std::string& trace_path,
               const fs::path& dir, nlohmann::ordered_json& j) {
  memsim::Trace t;
  if (!trace_path.empty()) {
    t = memsim::read_trace_jsonl(trace_path);
  } else if (!cfg.strides.empty()) {
    t = memsim::gen_stride_trace(cfg.strides, cfg.stride_trace_len);
  } else {
    throw ConfigError("fft needs --trace or a config with loop strides");
  }

  std::ostringstream series;
  series << "seq,id\n";
  for (const memsim::MemEvent& e : t.events) series << e.seq << ',' << e.id << '\n';
  write_text(dir / "fft_series.csv", series.str());

  std::vector<attacks::Peak> peaks = attacks::fft_periodicity(t);
  std::ostringstream pcsv;
  pcsv << "period,magnitude\n";
  for (const attacks::Peak& p : peaks) pcsv << p.period << ',' << p.magnitude << '\n';
  write_text(dir / "fft_peaks.csv", pcsv.str());

  j["attack"] = "fft";
  j["periods"] = nlohmann::json::array();
  for (const attacks::Peak& p : peaks) {
    j["periods"].push_back({{"period", p.period}, {"magnitude", p.magnitude}});
  }
  j["status"] = peaks.empty() ? "no_periods" : "periods";
  return 0;
}

int attack_hints(const experiment::ExperimentConfig& cfg, const std::string& trace_path,
                 const fs::path& dir, nlohmann::ordered_json& j) {
  memsim::Trace t = trace_path.empty() ? make_trace(cfg) : memsim::read_trace_jsonl(trace_path);
  attacks::HintReport hints = attacks::gather_hints(t);

  std::ostringstream hist;
  hist << "gap,fraction\n";
  for (auto [gap, frac] : hints.raw_hist) hist << gap << ',' << frac << '\n';
  write_text(dir / "hints_rawhist.csv", hist.str());

  std::ostringstream bounds;
  bounds << "boundary_seq\n";
  for (std::size_t b : hints.boundaries) bounds << b << '\n';
  write_text(dir / "hints_boundaries.csv", bounds.str());

  j["attack"] = "hints";
  j["boundaries"] = hints.boundaries;
  j["periods"] = nlohmann::json::array();
  for (const attacks::Peak& p : hints.periods) {
    j["periods"].push_back({{"period", p.period}, {"magnitude", p.magnitude}});
  }
  j["raw_hist"] = nlohmann::ordered_json::object();
  for (auto [gap, frac] : hints.raw_hist) j["raw_hist"][std::to_string(gap)] = frac;
  j["layer_traffic_fraction"] = nlohmann::ordered_json::object();
  for (auto [layer, frac] : hints.layer_traffic_fraction) {
    j["layer_traffic_fraction"][std::to_string(layer)] = frac;
  }
  int layers = cfg.layers.empty() ? 16 : static_cast<int>(cfg.layers.size());
  j["search_space_log10"] =
      attacks::search_space_log10(attacks::default_search_space(layers));
  j["status"] = "hints";
  return 0;
}

int cmd_attack(const CommonOpts& o, const std::string& attack, const std::string& trace_path) {
  experiment::ExperimentConfig cfg = load_config(o);
  fs::path dir = ensure_out(cfg);
  nlohmann::ordered_json j;

  int rc;
  if (attack == "huffduff") {
    if (!trace_path.empty()) {
      throw ConfigError("huffduff drives adaptive probes; it cannot replay --trace");
    }
    rc = attack_huffduff(cfg, dir, j);
  } else if (attack == "fft") {
    rc = attack_fft(cfg, trace_path, dir, j);
  } else if (attack == "hints") {
    rc = attack_hints(cfg, trace_path, dir, j);
  } else {
    throw ConfigError("unknown attack: " + attack);
  }

  write_text(dir / "attack_report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return rc;
}

int cmd_metrics(const CommonOpts& o, std::vector<int> filters, int probes) {
  experiment::ExperimentConfig cfg = load_config(o);
  fs::path dir = ensure_out(cfg);
  if (filters.empty()) filters = {3, 5, 7};
  if (probes <= 0) probes = cfg.probes.count > 0 ? cfg.probes.count : 256;

  experiment::ContentEnsemble ens = experiment::content_ensemble(cfg, filters, probes);
  experiment::ContentEnsemble ref =
      experiment::random_reference(ens, derive_seed(cfg.seed, 0x4ef));
  experiment::MetricsReport r = experiment::closeness_metrics(ens, ref);
  write_text(dir / "metrics.json", r.to_json() + "\n");
  write_text(dir / "layer_metrics.csv",
             experiment::layer_metrics_csv(experiment::per_layer_metrics(ens, ref)));

  std::cout << r.to_json() << "\n";
  return r.errors.empty() ? 0 : 1;
}

int cmd_report(const CommonOpts& o, bool characterize, int tiles) {
  experiment::ExperimentConfig cfg = load_config(o);
  fs::path dir = ensure_out(cfg);
  nlohmann::ordered_json j;
  std::vector<std::string> errors;

  if (characterize) {
    std::vector<experiment::CharacterizationRow> rows =
        experiment::characterize_codecs(cfg, tiles);
    std::string csv = experiment::characterization_csv(rows);
    write_text(dir / "characterization.csv", csv);
    std::cout << csv;
    j["characterization_rows"] = rows.size();
  }

  if (!cfg.layers.empty()) {
    nlohmann::ordered_json traffic;
    std::uint64_t base_total = 0;
    for (memsim::Mode mode :
         {memsim::Mode::Baseline, memsim::Mode::CompressOnly, memsim::Mode::SparseLock}) {
      try {
        nlohmann::json patched = nlohmann::json::parse(cfg.to_json());
        patched["mode"] = mode == memsim::Mode::Baseline        ? "baseline"
                          : mode == memsim::Mode::CompressOnly ? "compress_only"
                                                                : "sparselock";
        experiment::ExperimentConfig mc =
            experiment::ExperimentConfig::from_json_text(patched.dump());
        memsim::Trace t = experiment::run_trace(experiment::build_workload(mc), mc);
        memsim::TrafficSummary s = memsim::traffic_bytes(t);
        traffic[patched["mode"].get<std::string>()] = s.total_bytes;
        if (mode == memsim::Mode::Baseline) base_total = s.total_bytes;
      } catch (const Error& e) {
        errors.push_back(e.what());
      }
    }
    j["traffic_bytes"] = traffic;
    if (base_total > 0) {
      nlohmann::ordered_json ratios;
      for (auto& [name, bytes] : traffic.items()) {
        ratios[name] =
            static_cast<double>(bytes.get<std::uint64_t>()) / static_cast<double>(base_total);
      }
      j["traffic_vs_baseline"] = ratios;
    }
  }
  int layers = cfg.layers.empty() ? 16 : static_cast<int>(cfg.layers.size());
  j["search_space_log10"] = attacks::search_space_log10(attacks::default_search_space(layers));
  j["errors"] = errors;

  write_text(dir / "report.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tiled-accelerator memory-trace simulator and side-channel toolkit"};
  app.require_subcommand(1);

  CommonOpts gen_o, run_o, attack_o, metrics_o, report_o;
  std::string trace_path;
  std::string attack_kind = "hints";
  std::vector<int> filters;
  int probes = 0;
  bool characterize = false;
  int tiles = 27;

  CLI::App* gen = app.add_subcommand("gen", "generate workload tensors, schedules, manifest");
  add_common(gen, gen_o);

  CLI::App* run = app.add_subcommand("run", "full run: trace, tensors, bins, integrity");
  add_common(run, run_o);

  CLI::App* attack = app.add_subcommand("attack", "run an attack and write report + curves");
  add_common(attack, attack_o);
  attack->add_option("--attack", attack_kind, "attack kind: huffduff|fft|hints")
      ->check(CLI::IsMember({"huffduff", "fft", "hints"}));
  attack->add_option("--trace", trace_path, "analyze an existing trace file instead");

  CLI::App* metrics = app.add_subcommand("metrics", "indistinguishability metrics vs random");
  add_common(metrics, metrics_o);
  metrics->add_option("--filters", filters, "filter sizes the probe ensemble cycles through");
  metrics->add_option("--probes", probes, "probe count");

  CLI::App* report = app.add_subcommand("report", "traffic comparison across modes");
  add_common(report, report_o);
  report->add_flag("--characterize", characterize, "emit per-codec characterization CSV");
  report->add_option("--tiles", tiles, "tiles for --characterize");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_o);
    if (run->parsed()) return cmd_run(run_o);
    if (attack->parsed()) return cmd_attack(attack_o, attack_kind, trace_path);
    if (metrics->parsed()) return cmd_metrics(metrics_o, filters, probes);
    if (report->parsed()) return cmd_report(report_o, characterize, tiles);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
