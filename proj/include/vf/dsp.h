// Waveform I/O, STFT, log-mel analysis and Griffin-Lim inversion.
#ifndef VF_DSP_H_
#define VF_DSP_H_

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vf {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
};

struct AnalysisConfig {
  int sample_rate = 16000;
  int fft_size = 1024;
  int window_size = 800;
  int hop_length = 200;
  int mel_bins = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-5;

  double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  // Throws UsageError on inconsistent geometry.
  void validate() const;
  bool operator==(const AnalysisConfig&) const = default;
};

// T x B matrix of natural-log mel powers.
struct MelSpectrogram {
  Eigen::MatrixXf frames;
  int hop_length = 200;
  int sample_rate = 16000;

  int num_frames() const { return static_cast<int>(frames.rows()); }
  int num_bins() const { return static_cast<int>(frames.cols()); }
};

Waveform load_wav(const std::string& path);
// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::string& path, const Waveform& w);

// Frame count produced by mel_spectrogram for a signal of `num_samples`.
int num_frames_for(std::size_t num_samples, int hop_length);

// HTK-scale conversions.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// B x (fft_size/2 + 1) triangular filterbank; each row sums to one.
Eigen::MatrixXd mel_filterbank(const AnalysisConfig& cfg);
// Center frequencies (Hz) of the mel filters, ascending.
std::vector<double> mel_center_frequencies(const AnalysisConfig& cfg);

// Periodic Hann window of window_size, centered in an fft_size frame.
std::vector<double> analysis_window(const AnalysisConfig& cfg);

// Complex STFT with reflect padding: T x (fft_size/2 + 1).
using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic>;
ComplexMatrix stft(const Waveform& w, const AnalysisConfig& cfg);

MelSpectrogram mel_spectrogram(const Waveform& w, const AnalysisConfig& cfg);

struct GriffinLimResult {
  Waveform waveform;
  // Spectral convergence ||(|STFT x_n| - S)||_F / ||S||_F after every iteration.
  std::vector<double> convergence;
};

GriffinLimResult griffin_lim_with_history(const MelSpectrogram& m, const AnalysisConfig& cfg, int iters,
                                          unsigned seed = 0);
Waveform griffin_lim(const MelSpectrogram& m, const AnalysisConfig& cfg, int iters);

}  // namespace vf

#endif  // VF_DSP_H_
