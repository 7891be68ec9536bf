#include "vf/inference.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <fmt/core.h>

#include "vf/checkpoint.h"
#include "vf/mel_io.h"
#include "vf/util.h"

namespace vf {

namespace fs = std::filesystem;

void TargetVoiceProfile::validate() const {
  if (centroid.size() != model.config().embed_dim)
    throw DataError(fmt::format("profile centroid has {} dimensions, model expects {}", centroid.size(),
                                model.config().embed_dim));
  if (!centroid.allFinite() || std::abs(centroid.norm() - 1.0f) > 1e-3f)
    throw DataError("profile centroid is not a unit vector");
  for (double v : {target_f0.mean, target_f0.stddev, source_f0.mean, source_f0.stddev})
    if (!std::isfinite(v)) throw DataError("profile f0 statistics are not finite");
  if (analysis.mel_bins != model.config().mel_bins)
    throw DataError("profile analysis config does not match the model's mel bins");
}

void save_profile(const std::string& dir, const TargetVoiceProfile& p, const nlohmann::json& meta) {
  p.validate();
  fs::create_directories(dir);
  save_checkpoint((fs::path(dir) / "model.vfck").string(), pack_voice_filter(p.model, nullptr, meta));
  nlohmann::json j = {
      {"format", "vf-profile/1"},
      {"centroid", std::vector<float>(p.centroid.data(), p.centroid.data() + p.centroid.size())},
      {"target_f0", {{"mean", p.target_f0.mean}, {"stddev", p.target_f0.stddev}}},
      {"source_f0", {{"mean", p.source_f0.mean}, {"stddev", p.source_f0.stddev}}},
      {"analysis", analysis_config_to_json(p.analysis)},
      {"synth_seed", p.synth_seed},
  };
  write_text_file((fs::path(dir) / "profile.json").string(), j.dump(2) + "\n");
}

TargetVoiceProfile load_profile(const std::string& dir) {
  const auto path = (fs::path(dir) / "profile.json").string();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
  if (j.value("format", "") != "vf-profile/1") throw DataError(fmt::format("{}: not a voice profile", path));
  TargetVoiceProfile p;
  try {
    p.model = unpack_voice_filter(load_checkpoint((fs::path(dir) / "model.vfck").string()));
    const auto c = j.at("centroid").get<std::vector<float>>();
    p.centroid = Eigen::Map<const Eigen::VectorXf>(c.data(), static_cast<Eigen::Index>(c.size()));
    p.target_f0 = {j.at("target_f0").at("mean").get<double>(), j.at("target_f0").at("stddev").get<double>()};
    p.source_f0 = {j.at("source_f0").at("mean").get<double>(), j.at("source_f0").at("stddev").get<double>()};
    p.analysis = analysis_config_from_json(j.at("analysis"));
    p.synth_seed = j.at("synth_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
  p.validate();
  return p;
}

MelSpectrogram synthesize_source(const PhoneAlignment& a, const Synthesizer& synth) {
  if (a.segments.empty()) throw DataError(fmt::format("utterance '{}': empty alignment", a.utterance_id));
  validate_alignment(a);
  return synth.synthesize(a);
}

namespace {

// Linear interpolation of a per-bin value along the mel axis; zero outside
// the outermost filter centres.
class MelAxis {
 public:
  explicit MelAxis(const AnalysisConfig& cfg) {
    for (double hz : mel_center_frequencies(cfg)) centers_.push_back(hz_to_mel(hz));
  }

  double sample(const std::vector<double>& q, double hz) const {
    const double m = hz_to_mel(hz);
    if (m < centers_.front() || m > centers_.back()) return 0.0;
    const auto it = std::upper_bound(centers_.begin(), centers_.end(), m);
    if (it == centers_.end()) return q.back();
    const auto hi = static_cast<std::size_t>(it - centers_.begin());
    const std::size_t lo = hi - 1;
    const double a = (m - centers_[lo]) / (centers_[hi] - centers_[lo]);
    return (1.0 - a) * q[lo] + a * q[hi];
  }

 private:
  std::vector<double> centers_;
};

}  // namespace

F0Contour source_f0_from_mel(const MelSpectrogram& m, const AnalysisConfig& cfg, const MelPitchConfig& pitch) {
  if (m.num_bins() != cfg.mel_bins)
    throw DataError(fmt::format("mel has {} bins, analysis config expects {}", m.num_bins(), cfg.mel_bins));
  if (!(pitch.f0_min > 0.0 && pitch.f0_max > pitch.f0_min && pitch.grid_ratio > 1.0 && pitch.harmonics > 0))
    throw UsageError("invalid mel pitch configuration");
  const MelAxis axis(cfg);

  std::vector<double> grid;
  for (double f = pitch.f0_min; f <= pitch.f0_max * (1.0 + 1e-12); f *= pitch.grid_ratio) grid.push_back(f);
  std::vector<double> weights(static_cast<std::size_t>(pitch.harmonics));
  double weight_sum = 0.0;
  for (int h = 0; h < pitch.harmonics; ++h) weight_sum += weights[h] = std::pow(pitch.harmonic_decay, h);

  const int T = m.num_frames();
  F0Contour out;
  out.f0_hz.assign(T, 0.0);
  out.voiced.assign(T, false);
  std::vector<double> q(static_cast<std::size_t>(m.num_bins()));
  std::vector<double> score(grid.size());
  for (int t = 0; t < T; ++t) {
    double peak = 0.0;
    for (int b = 0; b < m.num_bins(); ++b) {
      q[b] = std::max(0.0, std::exp(static_cast<double>(m.frames(t, b))) - cfg.log_floor);
      peak = std::max(peak, q[b]);
    }
    // Nothing meaningfully above the analysis floor.
    if (peak <= cfg.log_floor * 1e-3) continue;
    for (auto& v : q) v /= peak;

    for (std::size_t k = 0; k < grid.size(); ++k) {
      double s = 0.0;
      for (int h = 0; h < pitch.harmonics; ++h)
        s += weights[h] * (axis.sample(q, (h + 1) * grid[k]) - axis.sample(q, (h + 0.5) * grid[k]));
      score[k] = s / weight_sum;
    }
    const auto best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
    if (!(score[best] > pitch.voicing_threshold)) continue;
    double f0 = grid[best];
    if (best > 0 && best + 1 < grid.size()) {
      const double a = score[best - 1], b = score[best], c = score[best + 1];
      const double denom = a - 2.0 * b + c;
      if (denom < 0.0) f0 *= std::pow(pitch.grid_ratio, std::clamp(0.5 * (a - c) / denom, -0.5, 0.5));
    }
    out.f0_hz[t] = f0;
    out.voiced[t] = true;
  }
  return out;
}

F0Stats source_f0_stats(const std::vector<const MelSpectrogram*>& mels, const AnalysisConfig& cfg,
                        const MelPitchConfig& pitch) {
  std::vector<F0Contour> contours;
  contours.reserve(mels.size());
  for (const auto* m : mels) contours.push_back(source_f0_from_mel(*m, cfg, pitch));
  return f0_stats(contours);
}

Conversion convert_detailed(const MelSpectrogram& source_mel, const TargetVoiceProfile& profile,
                            const MelPitchConfig& pitch) {
  Conversion c;
  c.source_f0 = source_f0_from_mel(source_mel, profile.analysis, pitch);
  c.conditioning_f0 = renormalize_f0(log_f0(c.source_f0), profile.source_f0, profile.target_f0);
  c.mel = vf_forward(profile.model, source_mel, ConditioningInput{profile.centroid, c.conditioning_f0});
  return c;
}

MelSpectrogram convert(const MelSpectrogram& source_mel, const TargetVoiceProfile& profile) {
  return convert_detailed(source_mel, profile).mel;
}

Waveform vocode(const MelSpectrogram& m, const AnalysisConfig& cfg, int iters) {
  if (!m.frames.allFinite()) throw DataError("vocode: mel contains non-finite values");
  return griffin_lim(m, cfg, iters);
}

}  // namespace vf
