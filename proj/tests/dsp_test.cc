#include "vf/dsp.h"

#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vf/util.h"

namespace vf {
namespace {

using testing::sine;
using testing::TempDir;

// Writes a 16-bit mono PCM WAV without going through write_wav.
void write_raw_pcm16(const std::string& path, const std::vector<std::int16_t>& pcm, int rate = 16000) {
  std::ofstream f(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) f.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u16 = [&](std::uint16_t v) {
    f.put(static_cast<char>(v & 0xFF));
    f.put(static_cast<char>(v >> 8));
  };
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  f.write("RIFF", 4);
  u32(36 + data_bytes);
  f.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(1);
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate) * 2);
  u16(2);
  u16(16);
  f.write("data", 4);
  u32(data_bytes);
  for (auto s : pcm) u16(static_cast<std::uint16_t>(s));
}

TEST(WavTest, SilenceLoadsAsZeros) {
  TempDir dir("wav");
  write_raw_pcm16(dir.str("s.wav"), std::vector<std::int16_t>(16000, 0));
  const Waveform w = load_wav(dir.str("s.wav"));
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.size(), 16000u);
  for (float s : w.samples) EXPECT_EQ(s, 0.0f);
}

TEST(WavTest, FullScaleSquareWaveScaling) {
  TempDir dir("wav");
  std::vector<std::int16_t> pcm(400);
  for (std::size_t i = 0; i < pcm.size(); ++i) pcm[i] = (i / 50) % 2 == 0 ? 32767 : -32767;
  write_raw_pcm16(dir.str("sq.wav"), pcm);
  const Waveform w = load_wav(dir.str("sq.wav"));
  const float expected = static_cast<float>(32767.0 / 32768.0);
  for (std::size_t i = 0; i < pcm.size(); ++i) EXPECT_EQ(w.samples[i], pcm[i] > 0 ? expected : -expected);
}

TEST(WavTest, WriteThenLoadRoundTrip) {
  TempDir dir("wav");
  Waveform w = sine(300.0, 0.1);
  write_wav(dir.str("t.wav"), w);
  const Waveform back = load_wav(dir.str("t.wav"));
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32768.0);
}

TEST(WavTest, TruncatedFileIsMalformed) {
  TempDir dir("wav");
  write_raw_pcm16(dir.str("full.wav"), std::vector<std::int16_t>(100, 3));
  auto bytes = read_file_bytes(dir.str("full.wav"));
  bytes.resize(30);
  write_file_bytes(dir.str("cut.wav"), bytes);
  try {
    load_wav(dir.str("cut.wav"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("malformed WAV"), std::string::npos) << e.what();
  }
}

TEST(WavTest, NotAWavFile) {
  TempDir dir("wav");
  write_text_file(dir.str("x.wav"), "this is plain text, not audio at all");
  EXPECT_THROW(load_wav(dir.str("x.wav")), DataError);
}

TEST(MelScaleTest, HtkFormulaAndInverse) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  EXPECT_NEAR(hz_to_mel(1000.0), 999.9855, 1e-3);
  for (double hz : {0.0, 55.0, 440.0, 3999.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-8);
}

TEST(MelFilterbankTest, RowsSumToOneAndAreNonNegative) {
  const AnalysisConfig cfg;
  const Eigen::MatrixXd fb = mel_filterbank(cfg);
  ASSERT_EQ(fb.rows(), 80);
  ASSERT_EQ(fb.cols(), 513);
  EXPECT_GE(fb.minCoeff(), 0.0);
  for (int m = 0; m < fb.rows(); ++m) EXPECT_NEAR(fb.row(m).sum(), 1.0, 1e-12);
}

TEST(MelSpectrogramTest, OneSecondGivesEightyFrames) {
  const MelSpectrogram m = mel_spectrogram(sine(440.0, 1.0), AnalysisConfig{});
  EXPECT_EQ(m.num_frames(), 80);
  EXPECT_EQ(m.num_bins(), 80);
}

TEST(MelSpectrogramTest, FrameCountIsCeilOfSamplesOverHop) {
  const AnalysisConfig cfg;
  for (std::size_t n : {513u, 800u, 1999u, 2000u, 2001u, 16000u, 16199u}) {
    Waveform w;
    w.samples.assign(n, 0.0f);
    const int expected = static_cast<int>((n + 199) / 200);
    EXPECT_EQ(num_frames_for(n, 200), expected);
    EXPECT_EQ(mel_spectrogram(w, cfg).num_frames(), expected) << n;
  }
}

TEST(MelSpectrogramTest, SilenceHitsTheFloor) {
  const AnalysisConfig cfg;
  Waveform w;
  w.samples.assign(4000, 0.0f);
  const MelSpectrogram m = mel_spectrogram(w, cfg);
  const float floor = static_cast<float>(std::log(cfg.log_floor));
  for (Eigen::Index i = 0; i < m.frames.size(); ++i) EXPECT_EQ(m.frames.data()[i], floor);
}

TEST(MelSpectrogramTest, TooShortIsAnError) {
  Waveform w;
  w.samples.assign(100, 0.1f);
  EXPECT_THROW(mel_spectrogram(w, AnalysisConfig{}), DataError);
}

TEST(MelSpectrogramTest, SineArgmaxIsTheNearestFilterCentre) {
  // Filter centres straight from the HTK formula, equally spaced in mel.
  const AnalysisConfig cfg;
  const double hi = 2595.0 * std::log10(1.0 + 8000.0 / 700.0);
  int expected = 0;
  double best = 1e9;
  for (int m = 0; m < 80; ++m) {
    const double centre = 700.0 * (std::pow(10.0, hi * (m + 1) / 81.0 / 2595.0) - 1.0);
    if (std::abs(centre - 440.0) < best) {
      best = std::abs(centre - 440.0);
      expected = m;
    }
  }
  const MelSpectrogram m = mel_spectrogram(sine(440.0, 0.5), cfg);
  for (int t = 3; t < m.num_frames() - 3; ++t) {
    Eigen::Index arg;
    m.frames.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, expected) << "frame " << t;
  }
}

TEST(MelSpectrogramTest, DoublingAmplitudeAddsLnFour) {
  const AnalysisConfig cfg;
  const MelSpectrogram a = mel_spectrogram(sine(440.0, 0.3, 0.2), cfg);
  const MelSpectrogram b = mel_spectrogram(sine(440.0, 0.3, 0.4), cfg);
  const float floor = static_cast<float>(std::log(cfg.log_floor));
  int compared = 0;
  for (Eigen::Index i = 0; i < a.frames.size(); ++i) {
    if (a.frames.data()[i] > floor + 5.0f) {
      EXPECT_NEAR(b.frames.data()[i] - a.frames.data()[i], std::log(4.0), 1e-3);
      ++compared;
    }
  }
  EXPECT_GT(compared, 100);
}

TEST(StftTest, ParsevalPerFrame) {
  // sum_k |X_k|^2 over the full spectrum equals N * sum_n (w x)^2 for every
  // frame; the one-sided spectrum counts the inner bins twice.
  AnalysisConfig cfg;
  std::mt19937 rng(3);
  std::normal_distribution<double> g(0.0, 0.2);
  Waveform w;
  w.samples.resize(3000);
  for (auto& s : w.samples) s = static_cast<float>(g(rng));
  const ComplexMatrix spec = stft(w, cfg);
  const auto window = analysis_window(cfg);
  const int n = cfg.fft_size, pad = n / 2;
  const long len = static_cast<long>(w.samples.size());
  for (int t = 0; t < spec.rows(); ++t) {
    double time_energy = 0.0;
    for (int i = 0; i < n; ++i) {
      long idx = static_cast<long>(t) * cfg.hop_length - pad + i;
      if (idx < 0) idx = -idx;
      if (idx >= len) idx = 2 * (len - 1) - idx;
      const double v = window[i] * w.samples[static_cast<std::size_t>(idx)];
      time_energy += v * v;
    }
    double freq_energy = std::norm(spec(t, 0)) + std::norm(spec(t, n / 2));
    for (int k = 1; k < n / 2; ++k) freq_energy += 2.0 * std::norm(spec(t, k));
    EXPECT_NEAR(freq_energy / n, time_energy, 1e-9 * std::max(1.0, time_energy)) << "frame " << t;
  }
}

TEST(GriffinLimTest, OutputLengthIsFramesTimesHop) {
  const AnalysisConfig cfg;
  MelSpectrogram m;
  m.frames = Eigen::MatrixXf::Constant(80, 80, static_cast<float>(std::log(cfg.log_floor)));
  EXPECT_EQ(griffin_lim(m, cfg, 2).size(), 16000u);
  m.frames.conservativeResize(13, 80);
  EXPECT_EQ(griffin_lim(m, cfg, 2).size(), 13u * 200u);
}

TEST(GriffinLimTest, ZeroIterationsIsAnError) {
  const AnalysisConfig cfg;
  const MelSpectrogram m = mel_spectrogram(sine(440.0, 0.2), cfg);
  EXPECT_THROW(griffin_lim(m, cfg, 0), UsageError);
}

TEST(GriffinLimTest, AllFloorMelIsNearSilent) {
  const AnalysisConfig cfg;
  MelSpectrogram m;
  m.frames = Eigen::MatrixXf::Constant(40, 80, static_cast<float>(std::log(cfg.log_floor)));
  const Waveform w = griffin_lim(m, cfg, 10);
  double e = 0.0;
  for (float s : w.samples) e += static_cast<double>(s) * s;
  EXPECT_LT(std::sqrt(e / static_cast<double>(w.size())), 1e-3);
}

TEST(GriffinLimTest, RoundTripKeepsTheDominantBin) {
  const AnalysisConfig cfg;
  const MelSpectrogram m = mel_spectrogram(sine(440.0, 0.5), cfg);
  const MelSpectrogram back = mel_spectrogram(griffin_lim(m, cfg, 60), cfg);
  ASSERT_EQ(back.num_frames(), m.num_frames());
  for (int t = 4; t < m.num_frames() - 4; ++t) {
    Eigen::Index a, b;
    m.frames.row(t).maxCoeff(&a);
    back.frames.row(t).maxCoeff(&b);
    EXPECT_EQ(a, b) << "frame " << t;
  }
}

TEST(GriffinLimTest, MoreIterationsDoNotIncreaseTheError) {
  const AnalysisConfig cfg;
  Waveform w = sine(220.0, 0.4);
  const Waveform w2 = sine(1250.0, 0.4, 0.2);
  for (std::size_t i = 0; i < w.size(); ++i) w.samples[i] += w2.samples[i];
  const MelSpectrogram m = mel_spectrogram(w, cfg);
  const auto r = griffin_lim_with_history(m, cfg, 60);
  ASSERT_EQ(r.convergence.size(), 60u);
  EXPECT_LE(r.convergence.back(), r.convergence.front());
}

TEST(GriffinLimTest, NonFiniteMelIsRejected) {
  const AnalysisConfig cfg;
  MelSpectrogram m = mel_spectrogram(sine(440.0, 0.2), cfg);
  m.frames(2, 3) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(griffin_lim(m, cfg, 5), DataError);
}

TEST(AnalysisConfigTest, RejectsBadGeometry) {
  AnalysisConfig cfg;
  cfg.window_size = 2048;
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg = AnalysisConfig{};
  cfg.fmax = 9000.0;
  EXPECT_THROW(cfg.validate(), UsageError);
}

}  // namespace
}  // namespace vf
