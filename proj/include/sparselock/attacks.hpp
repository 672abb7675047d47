#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "sparselock/convnet.hpp"
#include "sparselock/memsim.hpp"

namespace sparselock::attacks {

// Observation per probe position along an edge sweep (exact nonzero counts in
// oracle mode, compressed write sizes in attacker mode).
struct NnzCurve {
  std::vector<int> positions;
  std::vector<double> observations;
};

// 0-based index where the curve first stays within tol of its max for at
// least min_run points. Fails (nullopt) when the curve never rises into a
// plateau -- constant or all-zero curves carry no boundary signal.
std::optional<int> knee_index(const NnzCurve& curve, double tol = 0.05, int min_run = 3);
// knee index k maps to filter size 2k+1
std::optional<int> knee_detect(const NnzCurve& curve, double tol = 0.05, int min_run = 3);

// Maps one crafted ifmap to the scalar the attacker observes for it.
using ProbeFn = std::function<double(const Tensor& ifmap)>;

NnzCurve huffduff_probe_1d(int n, const ProbeFn& probe);
// axis 0: sweep a one-row line of ones down the rows; axis 1: sweep a
// one-column line across the columns.
NnzCurve huffduff_probe_2d(int h, int w, int axis, const ProbeFn& probe);

std::optional<int> estimate_filter_size_1d(int n, const ProbeFn& probe);
// Majority vote over the four edge estimates (both ends of both axes).
std::optional<int> estimate_filter_size_2d(int h, int w, const ProbeFn& probe);

struct Peak {
  double period;
  double magnitude;
};

// Mean-removed magnitude spectrum; peaks are interior local maxima above 3x
// the spectral median, folded so only fundamentals survive (a peak whose
// period integer-divides a stronger peak's period is its harmonic).
std::vector<Peak> fft_periods(const std::vector<double>& signal);
std::vector<Peak> fft_periodicity(const memsim::Trace& t);

// Distribution of write -> next read distances per object id (event ordinals).
std::map<std::uint64_t, std::uint64_t> raw_distance(const memsim::Trace& t);

// Change points in the id stream (dominant repeated id switches, fresh-id
// bursts). Returns event ordinals of suspected layer transitions.
std::vector<std::size_t> layer_boundary_detect(const memsim::Trace& t, std::size_t window = 0);

struct LayerCandidates {
  std::vector<int> filter_sizes{1, 3, 5, 7, 9, 11};
  std::pair<int, int> in_channels{1, 512};
  std::pair<int, int> out_channels{1, 512};
};

// log10 of the architecture search-space size under the given constraints.
double search_space_log10(const std::vector<LayerCandidates>& layers);
std::vector<LayerCandidates> default_search_space(int layers);

struct HintReport {
  std::map<std::uint64_t, double> raw_hist;      // normalized gap distribution
  std::map<int, double> layer_traffic_fraction;  // normalized per-layer traffic
  std::vector<std::size_t> boundaries;
  std::vector<Peak> periods;
};

HintReport gather_hints(const memsim::Trace& t);

}  // namespace sparselock::attacks
