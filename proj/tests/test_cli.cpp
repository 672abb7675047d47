#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(CLI_BIN) + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string config(const std::string& name) {
  return std::string(CONFIG_DIR) + "/" + name;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("sl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json slurp_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("gen is deterministic and the manifest matches the files") {
    fs::path a = fresh_dir("gen_a");
    fs::path b = fresh_dir("gen_b");
    REQUIRE(run_cli("gen -c " + config("default.json") + " -o " + a.string()) == 0);
    REQUIRE(run_cli("gen -c " + config("default.json") + " -o " + b.string()) == 0);

    json manifest = slurp_json(a / "manifest.json");
    REQUIRE(manifest["files"].is_array());
    CHECK(manifest["files"].size() == 7);  // ifmap + 3x(weights, schedule)
    for (const json& f : manifest["files"]) {
      fs::path p = a / f["path"].get<std::string>();
      CHECK(fs::file_size(p) == f["bytes"].get<std::uintmax_t>());
      CHECK(slurp(p) == slurp(b / f["path"].get<std::string>()));
    }
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));

    // pruning hits the sparsity target exactly
    REQUIRE(manifest["layers"].size() == 3);
    for (const json& l : manifest["layers"]) {
      CHECK(l["measured_nnz"].get<int>() == l["target_nnz"].get<int>());
    }

    // schedules carry the loop strides an fft attacker would recover
    std::ifstream sched(a / "schedule_0.jsonl");
    std::string head_line;
    REQUIRE(std::getline(sched, head_line));
    json head = json::parse(head_line);
    CHECK(head["tile_extents"] == json::array({16, 16}));
    CHECK(head["loop_strides"].size() == 2);
    CHECK(head["tile_bytes"].get<int>() == 1024);
  }

  TEST_CASE("gen with no layers emits only a manifest") {
    fs::path dir = fresh_dir("gen_empty");
    REQUIRE(run_cli("gen -c " + config("stride.json") + " -o " + dir.string()) == 0);
    json manifest = slurp_json(dir / "manifest.json");
    CHECK(manifest["files"].empty());
    CHECK(manifest["layers"].empty());
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
    CHECK(entries == 1);
  }

  TEST_CASE("protected runs move only capacity-sized bins") {
    fs::path dir = fresh_dir("run_prot");
    REQUIRE(run_cli("run -c " + config("compress70.json") + " --mode sparselock -o " +
                    dir.string()) == 0);
    std::ifstream trace(dir / "trace.jsonl");
    REQUIRE(trace.good());
    std::string line;
    std::size_t events = 0;
    while (std::getline(trace, line)) {
      json e = json::parse(line);
      CHECK(e["unit"] == "bin");
      CHECK(e["bytes"].get<std::uint64_t>() == 61440);
      ++events;
    }
    CHECK(events > 0);

    json integrity = slurp_json(dir / "integrity.json");
    REQUIRE(!integrity.empty());
    for (const json& row : integrity) CHECK(row["store_intact"].get<bool>());
  }

  TEST_CASE("worst-case sweeps pad with bins the attacker cannot tell apart") {
    // small bins force the sweep budget past the real bin count
    fs::path dir = fresh_dir("run_fake");
    fs::path cfg_path = dir / "small_bins.json";
    std::ofstream(cfg_path) << R"({
      "seed": 5, "mode": "sparselock", "quant_bits": 8, "out_dir": "unused",
      "accel": {"bin_capacity": 1024},
      "layers": [{"ifmap_dims": [32, 32], "filter_size": 3, "weight_sparsity": 0.5,
                  "tile_extents": [8, 8], "relu": false, "passes": 1}],
      "probes": {"count": 0, "kind": "random", "input_sparsity": 0.7}
    })";
    REQUIRE(run_cli("run -c " + cfg_path.string() + " -o " + dir.string()) == 0);

    std::ifstream oracle(dir / "trace_oracle.jsonl");
    std::string line;
    std::size_t fakes = 0, reals = 0;
    while (std::getline(oracle, line)) {
      json e = json::parse(line);
      CHECK(e["bytes"].get<std::uint64_t>() == 1024);
      (e["fake"] == true ? fakes : reals) += 1;
    }
    CHECK(fakes > 0);
    CHECK(reals > 0);

    // the attacker view carries no fake marker at all
    std::ifstream att(dir / "trace.jsonl");
    while (std::getline(att, line)) CHECK(!json::parse(line).contains("fake"));
  }

  TEST_CASE("compression halves the traffic of a 70 percent sparse layer") {
    fs::path dir = fresh_dir("report70");
    REQUIRE(run_cli("report -c " + config("compress70.json") + " -o " + dir.string()) == 0);
    json r = slurp_json(dir / "report.json");
    double ratio = r["traffic_vs_baseline"]["compress_only"].get<double>();
    CHECK(ratio <= 0.5);
    CHECK(ratio > 0.1);
    // sealing inflates traffic back above baseline (worst-case sweeps)
    CHECK(r["traffic_vs_baseline"]["sparselock"].get<double>() >= 1.0);
  }

  TEST_CASE("huffduff recovers the filter size from compressed stores") {
    fs::path dir = fresh_dir("hd_open");
    REQUIRE(run_cli("attack --attack huffduff -c " + config("huffduff1d.json") + " -o " +
                    dir.string()) == 0);
    json r = slurp_json(dir / "attack_report.json");
    CHECK(r["attack"] == "huffduff");
    CHECK(r["status"] == "estimate");
    CHECK(r["filter_estimate"].get<int>() == 5);
    CHECK(r["oracle_estimate"].get<int>() == 5);

    std::ifstream curves(dir / "huffduff_curves.csv");
    std::string line;
    REQUIRE(std::getline(curves, line));
    CHECK(line == "axis,position,attacker_bytes,oracle_nnz");
  }

  TEST_CASE("huffduff fails against sealed bins") {
    fs::path dir = fresh_dir("hd_sealed");
    REQUIRE(run_cli("attack --attack huffduff -c " + config("huffduff1d.json") +
                    " --mode sparselock -o " + dir.string()) == 0);
    json r = slurp_json(dir / "attack_report.json");
    CHECK(r["status"] == "estimation_failure");
    CHECK(r["filter_estimate"].is_null());
    CHECK(r["oracle_estimate"].get<int>() == 5);  // the signal exists, just not on the bus
  }

  TEST_CASE("fft attack recovers configured loop strides") {
    fs::path dir = fresh_dir("fft");
    REQUIRE(run_cli("attack --attack fft -c " + config("stride.json") + " -o " + dir.string()) ==
            0);
    json r = slurp_json(dir / "attack_report.json");
    CHECK(r["status"] == "periods");
    std::vector<int> found;
    for (const json& p : r["periods"]) {
      found.push_back(static_cast<int>(std::lround(p["period"].get<double>())));
    }
    for (int want : {15, 65, 85}) {
      bool hit = false;
      for (int g : found) hit = hit || std::abs(g - want) <= 1;
      CHECK(hit);
    }
  }

  TEST_CASE("hints against a protected trace leave the search space intact") {
    fs::path dir = fresh_dir("hints");
    REQUIRE(run_cli("attack --attack hints -c " + config("compress70.json") +
                    " --mode sparselock -o " + dir.string()) == 0);
    json r = slurp_json(dir / "attack_report.json");
    CHECK(r["raw_hist"].empty());
    CHECK(r["search_space_log10"].get<double>() > 6.0);  // one layer, 6 x 512 x 512
    CHECK(fs::exists(dir / "hints_rawhist.csv"));
    CHECK(fs::exists(dir / "hints_boundaries.csv"));
  }

  TEST_CASE("metrics rejects ensembles too small for the runs test") {
    fs::path dir = fresh_dir("metrics_tiny");
    fs::path cfg_path = dir / "tiny.json";
    std::ofstream(cfg_path) << R"({
      "seed": 3, "mode": "baseline", "quant_bits": 8, "out_dir": "unused",
      "accel": {"bin_capacity": 1024},
      "layers": [{"ifmap_dims": [4, 4], "filter_size": 1, "weight_sparsity": 0.0,
                  "tile_extents": [4, 4], "relu": false, "passes": 1}],
      "probes": {"count": 4, "kind": "random", "input_sparsity": 0.5}
    })";
    CHECK(run_cli("metrics -c " + cfg_path.string() + " --probes 4 -o " + dir.string()) == 1);
    json m = slurp_json(dir / "metrics.json");
    REQUIRE(!m["errors"].empty());
    CHECK(m["errors"][0].get<std::string>().find("too small") != std::string::npos);
    CHECK(m["runs_p"].is_null());
  }

  TEST_CASE("metrics writes per-layer rows for a healthy ensemble") {
    fs::path dir = fresh_dir("metrics_ok");
    REQUIRE(run_cli("metrics -c " + config("compress70.json") +
                    " --mode sparselock --seed 12 --probes 40 -o " + dir.string()) == 0);
    json m = slurp_json(dir / "metrics.json");
    CHECK(m["errors"].empty());
    CHECK(m["fi_rel_gap"].get<double>() < 0.5);
    CHECK(m["cvm"].get<double>() < 0.461);

    std::ifstream csv(dir / "layer_metrics.csv");
    std::string header;
    REQUIRE(std::getline(csv, header));
    CHECK(header ==
          "layer,fi_protected,fi_random,fi_rel_gap,mi_protected,mi_random,cvm,runs_p");
    std::string row;
    std::size_t rows = 0;
    while (std::getline(csv, row)) ++rows;
    CHECK(rows == 1);
  }

  TEST_CASE("attack outputs are byte-identical across reruns") {
    fs::path a = fresh_dir("rerun_a");
    fs::path b = fresh_dir("rerun_b");
    std::string args = "attack --attack fft -c " + config("stride.json") + " -o ";
    REQUIRE(run_cli(args + a.string()) == 0);
    REQUIRE(run_cli(args + b.string()) == 0);
    for (const char* f : {"attack_report.json", "fft_series.csv", "fft_peaks.csv"}) {
      CHECK(slurp(a / f) == slurp(b / f));
    }
  }

  TEST_CASE("invalid inputs exit with the config error code") {
    fs::path dir = fresh_dir("bad");
    fs::path bad = dir / "bad.json";
    std::ofstream(bad) << "{ not json";
    CHECK(run_cli("run -c " + bad.string() + " -o " + dir.string()) == 2);
    CHECK(run_cli("run -c " + (dir / "missing.json").string()) == 2);
    // huffduff is adaptive; replaying a fixed trace contradicts it
    CHECK(run_cli("attack --attack huffduff --trace " + (dir / "t.jsonl").string() + " -c " +
                  config("huffduff1d.json") + " -o " + dir.string()) == 2);
    // fft without strides, trace, or layers has nothing to analyze
    fs::path empty_cfg = dir / "empty.json";
    std::ofstream(empty_cfg) << R"({"seed": 1, "mode": "baseline", "out_dir": "unused",
                                    "layers": [], "strides": []})";
    CHECK(run_cli("attack --attack fft -c " + empty_cfg.string() + " -o " + dir.string()) == 2);
  }
}
