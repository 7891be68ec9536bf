#include "vf/pitch.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {
namespace {

struct Candidate {
  double lag;
  double nccf;
};

// Normalized cross-correlation over lags [lo, hi] for the window starting at `start`.
void nccf_at(const std::vector<float>& x, long start, int window, int lo, int hi, std::vector<double>& out) {
  const long len = static_cast<long>(x.size());
  auto at = [&](long i) -> double { return (i >= 0 && i < len) ? x[static_cast<std::size_t>(i)] : 0.0; };
  out.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
  double e0 = 0.0;
  for (int n = 0; n < window; ++n) e0 += at(start + n) * at(start + n);
  if (e0 < 1e-10 * window) return;
  // Energy of the lagged window, updated incrementally.
  double ek = 0.0;
  for (int n = 0; n < window; ++n) ek += at(start + lo + n) * at(start + lo + n);
  for (int k = lo; k <= hi; ++k) {
    if (k > lo) {
      const double drop = at(start + k - 1);
      const double add = at(start + k + window - 1);
      ek += add * add - drop * drop;
      ek = std::max(ek, 0.0);
    }
    double cross = 0.0;
    for (int n = 0; n < window; ++n) cross += at(start + n) * at(start + n + k);
    const double denom = std::sqrt(e0 * ek);
    out[static_cast<std::size_t>(k - lo)] = denom > 1e-12 ? cross / denom : 0.0;
  }
}

}  // namespace

F0Contour estimate_f0(const Waveform& w, int hop_length, const PitchConfig& cfg) {
  if (!(cfg.f0_min >= 20.0) || !(cfg.f0_min < cfg.f0_max) || !(cfg.f0_max <= w.sample_rate / 4.0))
    throw UsageError(fmt::format("estimate_f0: invalid f0 range [{}, {}] for sample rate {}", cfg.f0_min,
                                 cfg.f0_max, w.sample_rate));
  if (hop_length <= 0) throw UsageError("estimate_f0: hop_length must be positive");

  const double sr = w.sample_rate;
  const int min_lag = static_cast<int>(std::floor(sr / cfg.f0_max));
  const int max_lag = static_cast<int>(std::ceil(sr / cfg.f0_min));
  const int window = std::max(static_cast<int>(std::lround(cfg.correlation_window * sr)), max_lag + 1);
  const int frames = num_frames_for(w.samples.size(), hop_length);

  // Lags one beyond the search range on each side so edge peaks can be interpolated.
  const int lo = std::max(1, min_lag - 1);
  const int hi = max_lag + 1;

  std::vector<std::vector<Candidate>> cands(static_cast<std::size_t>(frames));
  std::vector<double> phi;
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop_length - window / 2;
    nccf_at(w.samples, start, window, lo, hi, phi);
    std::vector<Candidate> found;
    for (int k = std::max(lo + 1, min_lag); k <= std::min(hi - 1, max_lag); ++k) {
      const double a = phi[k - lo - 1], b = phi[k - lo], c = phi[k - lo + 1];
      if (!(b > 0.0 && b >= a && b >= c)) continue;
      const double curv = a - 2.0 * b + c;
      double delta = 0.0, peak = b;
      if (curv < 0.0) {
        delta = std::clamp(0.5 * (a - c) / curv, -0.5, 0.5);
        peak = b - 0.25 * (a - c) * delta;
      }
      found.push_back({k + delta, std::min(peak, 1.0)});
    }
    std::sort(found.begin(), found.end(), [](const Candidate& p, const Candidate& q) { return p.nccf > q.nccf; });
    if (static_cast<int>(found.size()) > cfg.max_candidates) found.resize(static_cast<std::size_t>(cfg.max_candidates));
    cands[static_cast<std::size_t>(t)] = std::move(found);
  }

  // A frame is voiced iff its best NCCF exceeds 0, i.e. it has any candidate.
  F0Contour out;
  out.f0_hz.assign(static_cast<std::size_t>(frames), 0.0);
  out.voiced.assign(static_cast<std::size_t>(frames), false);

  auto local_cost = [&](const Candidate& c) { return 1.0 - c.nccf * (1.0 - cfg.lag_weight * c.lag / max_lag); };
  auto f0_of = [&](const Candidate& c) { return std::clamp(sr / c.lag, cfg.f0_min, cfg.f0_max); };

  int t = 0;
  while (t < frames) {
    if (cands[static_cast<std::size_t>(t)].empty()) {
      ++t;
      continue;
    }
    int end = t;
    while (end < frames && !cands[static_cast<std::size_t>(end)].empty()) ++end;
    // Viterbi over the voiced run [t, end).
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(end - t));
    std::vector<std::vector<int>> back(static_cast<std::size_t>(end - t));
    for (int u = t; u < end; ++u) {
      const auto& cur = cands[static_cast<std::size_t>(u)];
      auto& cu = cost[static_cast<std::size_t>(u - t)];
      auto& bu = back[static_cast<std::size_t>(u - t)];
      cu.resize(cur.size());
      bu.assign(cur.size(), -1);
      for (std::size_t j = 0; j < cur.size(); ++j) {
        double best = 0.0;
        if (u > t) {
          const auto& prev = cands[static_cast<std::size_t>(u - 1)];
          const auto& cp = cost[static_cast<std::size_t>(u - 1 - t)];
          best = std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < prev.size(); ++i) {
            const double c =
                cp[i] + cfg.transition_weight * std::abs(std::log(f0_of(cur[j])) - std::log(f0_of(prev[i])));
            if (c < best) {
              best = c;
              bu[j] = static_cast<int>(i);
            }
          }
        }
        cu[j] = best + local_cost(cur[j]);
      }
    }
    const auto& last = cost.back();
    int j = static_cast<int>(std::min_element(last.begin(), last.end()) - last.begin());
    for (int u = end - 1; u >= t; --u) {
      out.f0_hz[static_cast<std::size_t>(u)] = f0_of(cands[static_cast<std::size_t>(u)][static_cast<std::size_t>(j)]);
      out.voiced[static_cast<std::size_t>(u)] = true;
      j = back[static_cast<std::size_t>(u - t)][static_cast<std::size_t>(j)];
    }
    t = end;
  }
  return out;
}

F0Contour estimate_f0(const Waveform& w, double f0_min, double f0_max, int hop_length) {
  PitchConfig cfg;
  cfg.f0_min = f0_min;
  cfg.f0_max = f0_max;
  return estimate_f0(w, hop_length, cfg);
}

LogF0 log_f0(const F0Contour& c) {
  LogF0 out;
  out.voiced = c.voiced;
  out.values.resize(c.f0_hz.size());
  double sum = 0.0;
  int n = 0;
  for (std::size_t t = 0; t < c.f0_hz.size(); ++t) {
    if (c.voiced[t]) {
      out.values[t] = std::log(c.f0_hz[t]);
      sum += out.values[t];
      ++n;
    }
  }
  const double fill = n > 0 ? sum / n : 0.0;
  for (std::size_t t = 0; t < c.f0_hz.size(); ++t)
    if (!c.voiced[t]) out.values[t] = fill;
  return out;
}

F0Stats log_f0_stats(const std::vector<LogF0>& features) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : features)
    for (std::size_t t = 0; t < f.values.size(); ++t)
      if (f.voiced[t]) {
        sum += f.values[t];
        ++n;
      }
  if (n == 0) throw DataError("f0 statistics: no voiced speech");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& f : features)
    for (std::size_t t = 0; t < f.values.size(); ++t)
      if (f.voiced[t]) ss += (f.values[t] - mean) * (f.values[t] - mean);
  return {mean, std::sqrt(ss / static_cast<double>(n))};
}

F0Stats f0_stats(const std::vector<F0Contour>& contours) {
  std::vector<LogF0> logs;
  logs.reserve(contours.size());
  for (const auto& c : contours) logs.push_back(log_f0(c));
  return log_f0_stats(logs);
}

LogF0 renormalize_f0(const LogF0& src, const F0Stats& src_stats, const F0Stats& tgt_stats) {
  for (double v : {src_stats.mean, src_stats.stddev, tgt_stats.mean, tgt_stats.stddev})
    if (!std::isfinite(v)) throw DataError("renormalize_f0: non-finite statistics");
  LogF0 out;
  out.voiced = src.voiced;
  out.values.resize(src.values.size());
  const bool degenerate = src_stats.stddev < 1e-6;
  for (std::size_t t = 0; t < src.values.size(); ++t) {
    if (!src.voiced[t] || degenerate)
      out.values[t] = tgt_stats.mean;
    else
      out.values[t] = (src.values[t] - src_stats.mean) / src_stats.stddev * tgt_stats.stddev + tgt_stats.mean;
  }
  return out;
}

std::string f0_to_csv(const F0Contour& c) {
  std::string out = "frame_index,f0_hz,voiced\n";
  for (std::size_t t = 0; t < c.f0_hz.size(); ++t)
    out += fmt::format("{},{},{}\n", t, c.f0_hz[t], c.voiced[t] ? 1 : 0);
  return out;
}

F0Contour f0_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "frame_index,f0_hz,voiced") throw DataError("f0 CSV: bad header");
  F0Contour c;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::size_t index = 0;
    double f0 = 0.0;
    int voiced = 0;
    char extra = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%d%c", &index, &f0, &voiced, &extra) != 3 || index != c.f0_hz.size() ||
        (voiced != 0 && voiced != 1) || ((voiced == 1) != (f0 > 0.0)))
      throw DataError(fmt::format("f0 CSV: invalid row at line {}", lineno));
    c.f0_hz.push_back(f0);
    c.voiced.push_back(voiced == 1);
  }
  return c;
}

}  // namespace vf
