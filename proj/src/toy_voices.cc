#include "vf/toy_voices.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct PhoneAcoustics {
  bool voiced = true;
  double formant[3] = {500.0, 1500.0, 2500.0};
  double bandwidth[3] = {80.0, 120.0, 180.0};
  double gain[3] = {1.0, 0.6, 0.3};
  double frication_center = 4000.0;
};

// Speaker-independent phone identity: formant targets or frication band.
PhoneAcoustics phone_acoustics(const std::string& phone) {
  std::mt19937_64 rng(hash_symbol(phone, 0xF0F0));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhoneAcoustics a;
  a.voiced = toy_phone_voiced(phone);
  a.formant[0] = 280.0 + 620.0 * u(rng);
  a.formant[1] = 900.0 + 1500.0 * u(rng);
  a.formant[2] = 2400.0 + 1100.0 * u(rng);
  for (int i = 0; i < 3; ++i) a.bandwidth[i] = 60.0 + 0.06 * a.formant[i] + 40.0 * u(rng);
  a.gain[0] = 1.0;
  a.gain[1] = 0.3 + 0.6 * u(rng);
  a.gain[2] = 0.1 + 0.4 * u(rng);
  a.frication_center = 2500.0 + 3500.0 * u(rng);
  return a;
}

double envelope(const PhoneAcoustics& a, const ToySpeaker& s, double f) {
  double env = 0.004;
  for (int i = 0; i < 3; ++i) {
    const double c = a.formant[i] * s.formant_scale;
    const double bw = a.bandwidth[i] * s.formant_scale;
    env += a.gain[i] * std::exp(-0.5 * std::pow((f - c) / bw, 2));
  }
  return env * std::pow(1.0 + f / 400.0, -s.tilt);
}

}  // namespace

std::vector<ToySpeaker> make_toy_speakers(int count, std::uint64_t seed) {
  if (count < 1) throw UsageError("make_toy_speakers: count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::vector<ToySpeaker> out;
  for (int i = 0; i < count; ++i) {
    // Spread speakers along a low-to-high voice axis, shuffled in tilt.
    const double pos = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
    ToySpeaker s;
    s.id = fmt::format("spk{:02d}", i);
    s.f0_hz = 95.0 * std::pow(250.0 / 95.0, pos) * (1.0 + 0.04 * jitter(rng));
    s.formant_scale = 0.86 + 0.32 * pos + 0.03 * jitter(rng);
    s.tilt = 0.7 + 0.9 * std::fmod(0.37 + 0.618 * i, 1.0);
    s.vibrato_hz = 3.0 + 2.0 * (jitter(rng) + 0.5);
    out.push_back(s);
  }
  return out;
}

const std::vector<std::string>& toy_phone_inventory() {
  static const std::vector<std::string> kPhones = {"aa", "iy", "uw", "eh", "ah", "ow", "ae", "m",
                                                   "n",  "l",  "r",  "s",  "f",  "k",  "sh"};
  return kPhones;
}

PhoneAlignment random_toy_alignment(const std::string& utterance_id, const std::string& speaker_id,
                                    const ToyUtteranceShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(hash_symbol(utterance_id, seed));
  const auto& phones = toy_phone_inventory();
  std::uniform_int_distribution<int> count(shape.min_phones, shape.max_phones);
  std::uniform_int_distribution<int> duration(shape.min_duration, shape.max_duration);
  std::uniform_int_distribution<std::size_t> pick(0, phones.size() - 1);
  PhoneAlignment a{utterance_id, speaker_id, {}};
  const int n = count(rng);
  int t = 0;
  std::size_t last = phones.size();
  for (int i = 0; i < n; ++i) {
    std::size_t p = pick(rng);
    if (p == last) p = (p + 1) % phones.size();
    last = p;
    const int d = duration(rng);
    a.segments.push_back({phones[p], t, t + d});
    t += d;
  }
  return a;
}

Waveform render_toy_utterance(const PhoneAlignment& a, const ToySpeaker& speaker, const AnalysisConfig& cfg,
                              std::uint64_t seed) {
  validate_alignment(a);
  const int hop = cfg.hop_length;
  const double sr = cfg.sample_rate;
  const int frames = a.total_frames();
  const std::size_t length = static_cast<std::size_t>(frames) * hop;

  std::vector<PhoneAcoustics> phone_of_frame(static_cast<std::size_t>(frames));
  for (const auto& s : a.segments) {
    const auto ac = phone_acoustics(s.phone);
    for (int t = s.start_frame; t < s.end_frame; ++t) phone_of_frame[static_cast<std::size_t>(t)] = ac;
  }

  std::mt19937_64 rng(hash_symbol(a.utterance_id + "/" + speaker.id, seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double vib_phase = kTwoPi * u(rng);
  const double duration = length / sr;

  // Per-frame harmonic amplitudes and voicing weights, interpolated per sample.
  const int max_harmonics = static_cast<int>(std::floor(0.48 * sr / (speaker.f0_hz * 0.8)));
  auto f0_at = [&](double time) {
    return speaker.f0_hz * (1.0 + 0.04 * std::sin(kTwoPi * speaker.vibrato_hz * time + vib_phase)) *
           (1.0 + 0.08 * (0.5 - time / duration));
  };
  std::vector<std::vector<double>> amp(static_cast<std::size_t>(frames) + 1,
                                       std::vector<double>(static_cast<std::size_t>(max_harmonics), 0.0));
  std::vector<double> voicing(static_cast<std::size_t>(frames) + 1, 0.0);
  std::vector<double> noise_gain(static_cast<std::size_t>(frames) + 1, 0.0);
  std::vector<double> fric_center(static_cast<std::size_t>(frames) + 1, 4000.0);
  for (int t = 0; t <= frames; ++t) {
    const auto& ac = phone_of_frame[static_cast<std::size_t>(std::min(t, frames - 1))];
    const double f0 = f0_at(t * hop / sr);
    auto& row = amp[static_cast<std::size_t>(t)];
    for (int h = 1; h <= max_harmonics; ++h) {
      const double f = h * f0;
      if (f < 0.48 * sr) row[static_cast<std::size_t>(h - 1)] = std::sqrt(envelope(ac, speaker, f));
    }
    voicing[static_cast<std::size_t>(t)] = ac.voiced ? 1.0 : 0.0;
    noise_gain[static_cast<std::size_t>(t)] = ac.voiced ? 0.0 : 0.35;
    fric_center[static_cast<std::size_t>(t)] = ac.frication_center * speaker.formant_scale;
  }

  Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(length);
  std::vector<double> raw(length, 0.0);
  double phase = 0.0;
  // Two-pole resonator state for frication noise.
  double y1 = 0.0, y2 = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double time = n / sr;
    const double pos = static_cast<double>(n) / hop;
    const auto t0 = static_cast<std::size_t>(pos);
    const double frac = pos - t0;
    const auto t1 = std::min(t0 + 1, static_cast<std::size_t>(frames));
    const double f0 = f0_at(time);
    phase += kTwoPi * f0 / sr;
    if (phase > kTwoPi) phase -= kTwoPi;

    const double v = (1.0 - frac) * voicing[t0] + frac * voicing[t1];
    double s = 0.0;
    if (v > 0.0) {
      const auto& a0 = amp[t0];
      const auto& a1 = amp[t1];
      for (int h = 1; h <= max_harmonics; ++h) {
        if (h * f0 >= 0.48 * sr) break;
        const double ah = (1.0 - frac) * a0[static_cast<std::size_t>(h - 1)] + frac * a1[static_cast<std::size_t>(h - 1)];
        s += ah * std::sin(h * phase);
      }
      s *= v;
    }
    const double g = (1.0 - frac) * noise_gain[t0] + frac * noise_gain[t1];
    if (g > 0.0) {
      const double fc = (1.0 - frac) * fric_center[t0] + frac * fric_center[t1];
      const double r = 0.9;
      const double x = gauss(rng);
      const double y = x + 2.0 * r * std::cos(kTwoPi * fc / sr) * y1 - r * r * y2;
      y2 = y1;
      y1 = y;
      s += g * (1.0 - r) * y;
    } else {
      y1 = y2 = 0.0;
    }
    raw[n] = s;
  }
  double peak = 1e-9;
  for (double s : raw) peak = std::max(peak, std::abs(s));
  const double scale = 0.5 / peak;
  for (std::size_t n = 0; n < length; ++n)
    w.samples[n] = static_cast<float>(std::clamp(raw[n] * scale + 1e-4 * gauss(rng), -1.0, 1.0));
  return w;
}

ToyDataset make_toy_dataset(const ToyDatasetSpec& spec, const AnalysisConfig& cfg) {
  if (spec.background_speakers < 1 || spec.utterances_per_speaker < 1 || spec.target_utterances < 1 ||
      spec.test_utterances < 0)
    throw UsageError("toy dataset sizes must be positive");
  ToyDataset d;
  d.speakers = make_toy_speakers(spec.background_speakers + 1, spec.seed);
  std::uint64_t utt_seed = spec.seed * 1000003ULL;
  auto add = [&](std::vector<PhoneAlignment>& list, const ToySpeaker& spk, const std::string& tag, int count) {
    for (int i = 0; i < count; ++i) {
      auto a = random_toy_alignment(fmt::format("{}_{}{:03d}", spk.id, tag, i), spk.id, spec.shape, ++utt_seed);
      d.audio.emplace(a.utterance_id, render_toy_utterance(a, spk, cfg, ++utt_seed));
      list.push_back(std::move(a));
    }
  };
  for (int s = 0; s < spec.background_speakers; ++s)
    add(d.background, d.speakers[static_cast<std::size_t>(s)], "", spec.utterances_per_speaker);
  add(d.target, d.target_speaker(), "", spec.target_utterances);
  add(d.test, d.target_speaker(), "test", spec.test_utterances);
  return d;
}

}  // namespace vf
