#include "sparselock/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <unordered_map>

#include <fftw3.h>

namespace sparselock::attacks {

namespace {

NnzCurve reversed(const NnzCurve& c) {
  NnzCurve r = c;
  std::reverse(r.positions.begin(), r.positions.end());
  std::reverse(r.observations.begin(), r.observations.end());
  return r;
}

// Size-proxy curves ride on a constant floor (headers, sibling tiles); shift
// it out so the plateau tolerance applies to the informative range. Constant
// curves become all-zero and stay undetectable.
NnzCurve floor_normalized(const NnzCurve& c) {
  NnzCurve r = c;
  if (r.observations.empty()) return r;
  double lo = *std::min_element(r.observations.begin(), r.observations.end());
  for (double& v : r.observations) v -= lo;
  return r;
}

// The boundary effect only ever raises the curve toward the interior, while
// tile/granule alignment can spike it upward anywhere. Take the suffix-min
// envelope through the central half (whose minimum is a spike-free plateau
// anchor) and keep the first quarter: a monotone curve with upward spikes
// erased and the rise the knee sits on intact. Flat curves stay flat.
NnzCurve edge_quarter(const NnzCurve& c) {
  std::size_t n = c.observations.size();
  std::size_t keep = n / 4 + 1;
  std::size_t anchor = std::min(n, 3 * n / 4 + 1);  // envelope window end
  std::vector<double> env(c.observations.begin(), c.observations.begin() + static_cast<long>(anchor));
  for (std::size_t i = env.size() - 1; i-- > 0;) {
    env[i] = std::min(env[i], env[i + 1]);
  }
  NnzCurve r;
  r.positions.assign(c.positions.begin(), c.positions.begin() + static_cast<long>(keep));
  r.observations.assign(env.begin(), env.begin() + static_cast<long>(keep));
  return r;
}

std::optional<int> knee_from_size_curve(const NnzCurve& oriented) {
  return knee_detect(floor_normalized(edge_quarter(oriented)));
}

std::vector<double> magnitude_spectrum(const std::vector<double>& signal) {
  static std::mutex plan_mutex;  // fftw planning is not thread-safe
  std::size_t n = signal.size();
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean /= static_cast<double>(n);

  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  for (std::size_t i = 0; i < n; ++i) in[i] = signal[i] - mean;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t b = 0; b < mag.size(); ++b) {
    mag[b] = std::hypot(out[b][0], out[b][1]);
  }
  {
    std::lock_guard<std::mutex> lock(plan_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return mag;
}

}  // namespace

std::optional<int> knee_index(const NnzCurve& curve, double tol, int min_run) {
  const auto& obs = curve.observations;
  if (obs.size() < static_cast<std::size_t>(min_run) || min_run < 1) return std::nullopt;
  double top = *std::max_element(obs.begin(), obs.end());
  if (top <= 0.0) return std::nullopt;
  double floor = (1.0 - tol) * top;
  auto in_plateau = [&](std::size_t i) { return obs[i] >= floor; };
  // a curve already at its plateau carries no rise to locate
  if (in_plateau(0)) return std::nullopt;
  for (std::size_t i = 1; i + static_cast<std::size_t>(min_run) <= obs.size(); ++i) {
    bool run = true;
    for (int j = 0; j < min_run && run; ++j) run = in_plateau(i + static_cast<std::size_t>(j));
    if (run) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::optional<int> knee_detect(const NnzCurve& curve, double tol, int min_run) {
  std::optional<int> idx = knee_index(curve, tol, min_run);
  if (!idx) return std::nullopt;
  return 2 * *idx + 1;
}

NnzCurve huffduff_probe_1d(int n, const ProbeFn& probe) {
  NnzCurve curve;
  for (int a = 1; a <= n; ++a) {
    Tensor ifmap = make_impulse({n}, {a - 1});
    curve.positions.push_back(a);
    curve.observations.push_back(probe(ifmap));
  }
  return curve;
}

NnzCurve huffduff_probe_2d(int h, int w, int axis, const ProbeFn& probe) {
  if (axis != 0 && axis != 1) throw DomainError("axis must be 0 or 1");
  NnzCurve curve;
  int n = axis == 0 ? h : w;
  for (int a = 1; a <= n; ++a) {
    // 1-D impulse along the swept axis: a full line of ones. A single pixel's
    // response is smaller than one compression granule, so it cannot move the
    // write sizes; the line scales the response by the feature-map width
    // without shifting where the plateau starts.
    Tensor ifmap = Tensor::zeros({h, w});
    if (axis == 0) {
      for (int c = 0; c < w; ++c) ifmap.at(a - 1, c) = 1;
    } else {
      for (int r = 0; r < h; ++r) ifmap.at(r, a - 1) = 1;
    }
    curve.positions.push_back(a);
    curve.observations.push_back(probe(ifmap));
  }
  return curve;
}

std::optional<int> estimate_filter_size_1d(int n, const ProbeFn& probe) {
  NnzCurve curve = huffduff_probe_1d(n, probe);
  std::optional<int> fwd = knee_from_size_curve(curve);
  std::optional<int> rev = knee_from_size_curve(reversed(curve));
  if (fwd && rev) return std::max(*fwd, *rev);
  return fwd ? fwd : rev;
}

std::optional<int> estimate_filter_size_2d(int h, int w, const ProbeFn& probe) {
  std::vector<int> votes;
  for (int axis : {0, 1}) {
    NnzCurve curve = huffduff_probe_2d(h, w, axis, probe);
    if (auto low = knee_from_size_curve(curve)) votes.push_back(*low);
    if (auto high = knee_from_size_curve(reversed(curve))) votes.push_back(*high);
  }
  if (votes.empty()) return std::nullopt;
  std::map<int, int> tally;
  for (int v : votes) ++tally[v];
  int best = 0, best_count = 0;
  for (auto [size, count] : tally) {
    // ties resolve toward the larger size: missing edge taps shrink estimates
    if (count >= best_count) {
      best = size;
      best_count = count;
    }
  }
  return best;
}

std::vector<Peak> fft_periods(const std::vector<double>& signal) {
  std::size_t n = signal.size();
  if (n < 8) return {};
  std::vector<double> mag = magnitude_spectrum(signal);

  std::vector<double> interior(mag.begin() + 1, mag.end());
  std::vector<double> sorted = interior;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double median = sorted[sorted.size() / 2];
  double top = *std::max_element(interior.begin(), interior.end());

  std::vector<Peak> cands;
  for (std::size_t b = 2; b + 1 < mag.size(); ++b) {
    if (mag[b] <= mag[b - 1] || mag[b] <= mag[b + 1]) continue;
    if (mag[b] <= 3.0 * median) continue;
    if (mag[b] <= 1e-3 * top) continue;  // numerical noise floor
    cands.push_back({static_cast<double>(n) / static_cast<double>(b), mag[b]});
  }
  std::sort(cands.begin(), cands.end(),
            [](const Peak& a, const Peak& b) { return a.magnitude > b.magnitude; });

  std::vector<Peak> kept;
  for (const Peak& c : cands) {
    bool harmonic = false;
    for (const Peak& p : kept) {
      double ratio = p.period / c.period;
      double nearest = std::round(ratio);
      if (nearest >= 2.0 && std::abs(ratio - nearest) <= 0.05) {
        harmonic = true;
        break;
      }
    }
    if (!harmonic) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(), [](const Peak& a, const Peak& b) { return a.period < b.period; });
  return kept;
}

std::vector<Peak> fft_periodicity(const memsim::Trace& t) {
  std::vector<double> signal;
  signal.reserve(t.events.size());
  for (const memsim::MemEvent& e : t.events) signal.push_back(static_cast<double>(e.id));
  return fft_periods(signal);
}

std::map<std::uint64_t, std::uint64_t> raw_distance(const memsim::Trace& t) {
  std::map<std::uint64_t, std::uint64_t> hist;
  std::unordered_map<std::int64_t, std::uint64_t> pending;  // id -> ordinal of open write
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const memsim::MemEvent& e = t.events[i];
    if (e.op == memsim::Op::W) {
      pending[e.id] = i;
    } else {
      auto it = pending.find(e.id);
      if (it != pending.end()) {
        ++hist[static_cast<std::uint64_t>(i - it->second)];
        pending.erase(it);
      }
    }
  }
  return hist;
}

std::vector<std::size_t> layer_boundary_detect(const memsim::Trace& t, std::size_t window) {
  std::size_t n = t.events.size();
  if (window == 0) window = std::max<std::size_t>(16, n / 100);
  if (n < 2 * window) return {};

  // dominant id per window; a window of all-distinct ids has none
  constexpr std::int64_t kNone = std::numeric_limits<std::int64_t>::min();
  std::vector<std::int64_t> dom;
  for (std::size_t start = 0; start + window <= n; start += window) {
    std::map<std::int64_t, int> counts;
    for (std::size_t i = start; i < start + window; ++i) ++counts[t.events[i].id];
    std::int64_t best = kNone;
    int best_count = 1;  // must repeat to dominate
    for (auto [id, c] : counts) {
      if (c > best_count) {
        best = id;
        best_count = c;
      }
    }
    dom.push_back(best);
  }
  std::vector<std::size_t> boundaries;
  for (std::size_t i = 1; i < dom.size(); ++i) {
    if (dom[i] != kNone && dom[i - 1] != kNone && dom[i] != dom[i - 1]) {
      boundaries.push_back(i * window);
    }
  }
  return boundaries;
}

double search_space_log10(const std::vector<LayerCandidates>& layers) {
  double total = 0.0;
  for (const LayerCandidates& lc : layers) {
    double cin = static_cast<double>(lc.in_channels.second - lc.in_channels.first + 1);
    double cout = static_cast<double>(lc.out_channels.second - lc.out_channels.first + 1);
    double f = static_cast<double>(lc.filter_sizes.size());
    if (f <= 0 || cin <= 0 || cout <= 0) throw DomainError("empty layer candidate set");
    total += std::log10(f * cin * cout);
  }
  return total;
}

std::vector<LayerCandidates> default_search_space(int layers) {
  if (layers < 1) throw DomainError("need at least one layer");
  return std::vector<LayerCandidates>(static_cast<std::size_t>(layers));
}

HintReport gather_hints(const memsim::Trace& t) {
  HintReport r;
  auto gaps = raw_distance(t);
  std::uint64_t total = 0;
  for (auto [d, c] : gaps) total += c;
  for (auto [d, c] : gaps) {
    r.raw_hist[d] = static_cast<double>(c) / static_cast<double>(total);
  }
  memsim::TrafficSummary traffic = memsim::traffic_bytes(t);
  for (auto [layer, bytes] : traffic.per_layer) {
    r.layer_traffic_fraction[layer] =
        static_cast<double>(bytes) / static_cast<double>(traffic.total_bytes);
  }
  r.boundaries = layer_boundary_detect(t);
  r.periods = fft_periodicity(t);
  return r;
}

}  // namespace sparselock::attacks
