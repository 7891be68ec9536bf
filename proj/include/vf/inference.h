// The four-step conversion chain: source mel from an alignment, f0 estimate
// and renormalization, Voice Filter conversion, Griffin-Lim synthesis.
#ifndef VF_INFERENCE_H_
#define VF_INFERENCE_H_

#include <cstdint>
#include <string>

#include "json.hpp"
#include "vf/corpus.h"
#include "vf/dsp.h"
#include "vf/pitch.h"
#include "vf/voice_filter.h"

namespace vf {

inline constexpr int kDefaultGriffinLimIters = 60;

// Everything needed to convert into one target voice.
struct TargetVoiceProfile {
  VoiceFilterModel model{VoiceFilterConfig{}};
  Eigen::VectorXf centroid;
  F0Stats target_f0;
  // Log-f0 moments of the source synthesizer, measured with
  // source_f0_from_mel over its corpus mels.
  F0Stats source_f0;
  AnalysisConfig analysis;
  std::uint64_t synth_seed = 0;

  // Throws DataError when the centroid does not match the model's
  // conditioning width or is not unit norm.
  void validate() const;
};

// <dir>/model.vfck and <dir>/profile.json.
void save_profile(const std::string& dir, const TargetVoiceProfile& p, const nlohmann::json& meta = {});
TargetVoiceProfile load_profile(const std::string& dir);

// Throws DataError on an empty alignment.
MelSpectrogram synthesize_source(const PhoneAlignment& a, const Synthesizer& synth);

struct MelPitchConfig {
  double f0_min = 70.0;
  double f0_max = 500.0;
  int harmonics = 10;
  double harmonic_decay = 0.84;
  // Candidate grid spacing as a frequency ratio.
  double grid_ratio = 1.005;
  // A frame is voiced when its best comb score exceeds this.
  double voicing_threshold = 0.08;
};

// Harmonic-comb pitch estimate on mel power. Each candidate f0 scores the
// weighted sum of normalized power at its harmonics minus the power halfway
// between them; the best candidate is refined by a parabola in log-f0.
F0Contour source_f0_from_mel(const MelSpectrogram& m, const AnalysisConfig& cfg = {},
                             const MelPitchConfig& pitch = {});

// Log-f0 moments of source_f0_from_mel over a set of mels.
F0Stats source_f0_stats(const std::vector<const MelSpectrogram*>& mels, const AnalysisConfig& cfg = {},
                        const MelPitchConfig& pitch = {});

struct Conversion {
  MelSpectrogram mel;
  F0Contour source_f0;
  LogF0 conditioning_f0;
};

Conversion convert_detailed(const MelSpectrogram& source_mel, const TargetVoiceProfile& profile,
                            const MelPitchConfig& pitch = {});
MelSpectrogram convert(const MelSpectrogram& source_mel, const TargetVoiceProfile& profile);

// Griffin-Lim with the default iteration count; non-finite input is a
// DataError raised before any synthesis work.
Waveform vocode(const MelSpectrogram& m, const AnalysisConfig& cfg = {}, int iters = kDefaultGriffinLimIters);

}  // namespace vf

#endif  // VF_INFERENCE_H_
