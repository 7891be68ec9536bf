// Fundamental-frequency tracking and log-f0 conditioning features.
#ifndef VF_PITCH_H_
#define VF_PITCH_H_

#include <string>
#include <vector>

#include "vf/dsp.h"

namespace vf {

// f0_hz[t] == 0 exactly when voiced[t] is false.
struct F0Contour {
  std::vector<double> f0_hz;
  std::vector<bool> voiced;

  int num_frames() const { return static_cast<int>(f0_hz.size()); }
};

// Moments of log-f0 over voiced frames (population std).
struct F0Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Log-f0 feature with the voicing mask kept alongside.
struct LogF0 {
  std::vector<double> values;
  std::vector<bool> voiced;

  int num_frames() const { return static_cast<int>(values.size()); }
};

struct PitchConfig {
  double f0_min = 70.0;
  double f0_max = 500.0;
  // Cost weight on |log f0_t - log f0_{t-1}| between voiced frames.
  double transition_weight = 0.35;
  // Linear penalty on candidate lag (fraction of max lag) that favours the
  // shortest period among near-equal correlation peaks.
  double lag_weight = 0.3;
  int max_candidates = 5;
  // Correlation window in seconds; widened to one maximum lag when shorter.
  double correlation_window = 0.0075;
};

// NCCF candidates per frame, voicing by the "best NCCF > 0" rule, and a
// dynamic-programming path over candidates. Frame t is centred on sample
// t * hop, giving the same frame count as mel_spectrogram.
F0Contour estimate_f0(const Waveform& w, int hop_length, const PitchConfig& cfg = {});
F0Contour estimate_f0(const Waveform& w, double f0_min, double f0_max, int hop_length);

// ln f0 on voiced frames; unvoiced frames carry the contour's voiced log mean
// (0 when nothing is voiced).
LogF0 log_f0(const F0Contour& c);

F0Stats f0_stats(const std::vector<F0Contour>& contours);
F0Stats log_f0_stats(const std::vector<LogF0>& features);

LogF0 renormalize_f0(const LogF0& src, const F0Stats& src_stats, const F0Stats& tgt_stats);

// CSV rows: frame_index,f0_hz,voiced
std::string f0_to_csv(const F0Contour& c);
F0Contour f0_from_csv(const std::string& text);

}  // namespace vf

#endif  // VF_PITCH_H_
