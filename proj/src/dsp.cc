#include "vf/dsp.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/core.h>
#include <unsupported/Eigen/FFT>

#include "vf/util.h"

namespace vf {
namespace {

using Cd = std::complex<double>;

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) { fft_.SetFlag(Eigen::FFT<double>::HalfSpectrum); }

  // frame (length n) -> n/2 + 1 bins
  void forward(const std::vector<double>& frame, std::vector<Cd>& bins) { fft_.fwd(bins, frame); }
  // n/2 + 1 bins -> frame (length n), scaled by 1/n
  void inverse(const std::vector<Cd>& bins, std::vector<double>& frame) { fft_.inv(frame, bins, n_); }

 private:
  int n_;
  Eigen::FFT<double> fft_;
};

// Bin weights so that sums over the half spectrum equal full-spectrum sums.
std::vector<double> hermitian_weights(int fft_size) {
  const int nb = fft_size / 2 + 1;
  std::vector<double> w(nb, 2.0);
  w[0] = 1.0;
  if (fft_size % 2 == 0) w[nb - 1] = 1.0;
  return w;
}

}  // namespace

void AnalysisConfig::validate() const {
  if (sample_rate <= 0) throw UsageError("sample_rate must be positive");
  if (fft_size <= 0 || window_size <= 0 || hop_length <= 0) throw UsageError("analysis sizes must be positive");
  if (window_size > fft_size) throw UsageError("window_size must not exceed fft_size");
  if (hop_length > window_size) throw UsageError("hop_length must not exceed window_size");
  if (mel_bins < 1) throw UsageError("mel_bins must be >= 1");
  if (fmin < 0.0 || effective_fmax() <= fmin || effective_fmax() > sample_rate / 2.0)
    throw UsageError("mel frequency range must satisfy 0 <= fmin < fmax <= sample_rate/2");
  if (!(log_floor > 0.0)) throw UsageError("log_floor must be positive");
}

int num_frames_for(std::size_t num_samples, int hop_length) {
  return static_cast<int>((num_samples + static_cast<std::size_t>(hop_length) - 1) /
                          static_cast<std::size_t>(hop_length));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(const AnalysisConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.effective_fmax());
  const double step = (hi - lo) / (cfg.mel_bins + 1);
  std::vector<double> c(cfg.mel_bins);
  for (int m = 0; m < cfg.mel_bins; ++m) c[m] = mel_to_hz(lo + (m + 1) * step);
  return c;
}

Eigen::MatrixXd mel_filterbank(const AnalysisConfig& cfg) {
  cfg.validate();
  const int nb = cfg.fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.effective_fmax());
  const double step = (hi - lo) / (cfg.mel_bins + 1);
  std::vector<double> edges(cfg.mel_bins + 2);
  for (int i = 0; i < cfg.mel_bins + 2; ++i) edges[i] = mel_to_hz(lo + i * step);

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.mel_bins, nb);
  for (int m = 0; m < cfg.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < nb; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      double v = 0.0;
      if (f > left && f <= center)
        v = (f - left) / (center - left);
      else if (f > center && f < right)
        v = (right - f) / (right - center);
      fb(m, k) = v;
    }
    double area = fb.row(m).sum();
    if (area <= 0.0) {
      // Filter narrower than the FFT bin spacing: fall back to the nearest bin.
      const int k = static_cast<int>(std::lround(center * cfg.fft_size / cfg.sample_rate));
      fb(m, std::clamp(k, 0, nb - 1)) = 1.0;
      area = 1.0;
    }
    fb.row(m) /= area;
  }
  return fb;
}

std::vector<double> analysis_window(const AnalysisConfig& cfg) {
  std::vector<double> w(cfg.fft_size, 0.0);
  const int offset = (cfg.fft_size - cfg.window_size) / 2;
  for (int n = 0; n < cfg.window_size; ++n)
    w[offset + n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.window_size);
  return w;
}

ComplexMatrix stft(const Waveform& w, const AnalysisConfig& cfg) {
  cfg.validate();
  const int pad = cfg.fft_size / 2;
  const auto len = static_cast<long>(w.samples.size());
  if (len <= pad)
    throw DataError(fmt::format("waveform of {} samples is shorter than one analysis window ({} needed)", len,
                                pad + 1));
  for (float s : w.samples)
    if (!std::isfinite(s)) throw DataError("waveform contains non-finite samples");

  // Reflect padding excluding the edge sample.
  auto sample_at = [&](long i) -> double {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
    return w.samples[static_cast<std::size_t>(i)];
  };

  const int frames = num_frames_for(w.samples.size(), cfg.hop_length);
  const int nb = cfg.fft_size / 2 + 1;
  const auto window = analysis_window(cfg);
  RealFft fft(cfg.fft_size);
  std::vector<double> frame(cfg.fft_size);
  std::vector<Cd> bins;
  ComplexMatrix out(frames, nb);
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg.hop_length - pad;
    for (int n = 0; n < cfg.fft_size; ++n) frame[n] = window[n] * sample_at(start + n);
    fft.forward(frame, bins);
    for (int k = 0; k < nb; ++k) out(t, k) = bins[k];
  }
  return out;
}

MelSpectrogram mel_spectrogram(const Waveform& w, const AnalysisConfig& cfg) {
  const ComplexMatrix spec = stft(w, cfg);
  const Eigen::MatrixXd power = spec.cwiseAbs2();
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const Eigen::MatrixXd mel = power * fb.transpose();
  MelSpectrogram m;
  m.hop_length = cfg.hop_length;
  m.sample_rate = cfg.sample_rate;
  m.frames = mel.unaryExpr([&](double v) { return std::log(std::max(v, cfg.log_floor)); }).cast<float>();
  return m;
}

GriffinLimResult griffin_lim_with_history(const MelSpectrogram& m, const AnalysisConfig& cfg, int iters,
                                          unsigned seed) {
  cfg.validate();
  if (iters <= 0) throw UsageError("griffin_lim: iteration count must be positive");
  if (m.num_bins() != cfg.mel_bins)
    throw DataError(fmt::format("griffin_lim: mel has {} bins, config expects {}", m.num_bins(), cfg.mel_bins));
  if (m.hop_length != cfg.hop_length) throw DataError("griffin_lim: mel hop length does not match config");
  if (!m.frames.allFinite()) throw DataError("griffin_lim: mel contains non-finite values");

  const int frames = m.num_frames();
  const int nfft = cfg.fft_size;
  const int hop = cfg.hop_length;
  const int nb = nfft / 2 + 1;

  // Mel power -> linear magnitude through the clipped pseudo-inverse.
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  const Eigen::MatrixXd pinv = fb.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd mel_power = m.frames.cast<double>().array().exp().matrix();
  const Eigen::MatrixXd target = (mel_power * pinv.transpose()).cwiseMax(0.0).cwiseSqrt();  // T x nb

  const auto window = analysis_window(cfg);
  const auto bin_weight = hermitian_weights(nfft);
  double target_norm2 = 0.0;
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < nb; ++k) target_norm2 += bin_weight[k] * target(t, k) * target(t, k);
  const double target_norm = std::sqrt(std::max(target_norm2, 1e-300));

  // Signal domain covered by the frames; frame t starts at t * hop.
  const int domain = (frames - 1) * hop + nfft;
  std::vector<double> window_energy(domain, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int n = 0; n < nfft; ++n) window_energy[t * hop + n] += window[n] * window[n];

  RealFft fft(nfft);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  ComplexMatrix spec(frames, nb);
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < nb; ++k) spec(t, k) = std::polar(target(t, k), phase(rng));

  std::vector<double> signal(domain);
  std::vector<double> frame(nfft);
  std::vector<Cd> bins(nb);
  ComplexMatrix analysis(frames, nb);

  auto synthesize = [&] {
    std::fill(signal.begin(), signal.end(), 0.0);
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < nb; ++k) bins[k] = spec(t, k);
      fft.inverse(bins, frame);
      for (int n = 0; n < nfft; ++n) signal[t * hop + n] += window[n] * frame[n];
    }
    for (int i = 0; i < domain; ++i) signal[i] = window_energy[i] > 1e-12 ? signal[i] / window_energy[i] : 0.0;
  };

  GriffinLimResult result;
  result.convergence.reserve(iters);
  for (int it = 0; it < iters; ++it) {
    synthesize();
    double err2 = 0.0;
    for (int t = 0; t < frames; ++t) {
      for (int n = 0; n < nfft; ++n) frame[n] = window[n] * signal[t * hop + n];
      fft.forward(frame, bins);
      for (int k = 0; k < nb; ++k) {
        const double mag = std::abs(bins[k]);
        const double d = mag - target(t, k);
        err2 += bin_weight[k] * d * d;
        analysis(t, k) = bins[k];
      }
    }
    result.convergence.push_back(std::sqrt(err2) / target_norm);
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < nb; ++k) {
        const Cd a = analysis(t, k);
        const double mag = std::abs(a);
        spec(t, k) = mag > 1e-300 ? a * (target(t, k) / mag) : Cd(target(t, k), 0.0);
      }
    }
  }
  synthesize();

  // Output sample s sits at domain index s + nfft/2.
  const int length = frames * hop;
  result.waveform.sample_rate = cfg.sample_rate;
  result.waveform.samples.assign(length, 0.0f);
  for (int s = 0; s < length; ++s) {
    const int i = s + nfft / 2;
    if (i < domain) result.waveform.samples[s] = static_cast<float>(std::clamp(signal[i], -1.0, 1.0));
  }
  return result;
}

Waveform griffin_lim(const MelSpectrogram& m, const AnalysisConfig& cfg, int iters) {
  return griffin_lim_with_history(m, cfg, iters).waveform;
}

}  // namespace vf
