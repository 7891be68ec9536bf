// Parametric "natural" speakers for desk-scale experiments: harmonic
// source-filter voices with per-speaker pitch, vocal-tract scale and tilt.
#ifndef VF_TOY_VOICES_H_
#define VF_TOY_VOICES_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vf/corpus.h"
#include "vf/dsp.h"

namespace vf {

struct ToySpeaker {
  std::string id;
  double f0_hz = 120.0;
  double formant_scale = 1.0;  // vocal tract length factor
  double tilt = 1.0;           // spectral slope exponent
  double vibrato_hz = 4.0;
};

// Speakers spaced across pitch, formant scale and tilt; deterministic in seed.
std::vector<ToySpeaker> make_toy_speakers(int count, std::uint64_t seed);

const std::vector<std::string>& toy_phone_inventory();

struct ToyUtteranceShape {
  int min_phones = 6;
  int max_phones = 10;
  int min_duration = 6;  // frames per phone
  int max_duration = 14;
};

// Random phone sequence over the toy inventory; deterministic in seed.
PhoneAlignment random_toy_alignment(const std::string& utterance_id, const std::string& speaker_id,
                                    const ToyUtteranceShape& shape, std::uint64_t seed);

// Waveform of exactly a.total_frames() * hop_length samples.
Waveform render_toy_utterance(const PhoneAlignment& a, const ToySpeaker& speaker, const AnalysisConfig& cfg,
                              std::uint64_t seed);

struct ToyDatasetSpec {
  int background_speakers = 4;
  int utterances_per_speaker = 24;
  // The held-out target speaker's adaptation set and its unseen test set.
  int target_utterances = 20;
  int test_utterances = 8;
  ToyUtteranceShape shape;
  std::uint64_t seed = 1;
};

struct ToyDataset {
  std::vector<ToySpeaker> speakers;  // background speakers, then the target
  std::vector<PhoneAlignment> background;
  std::vector<PhoneAlignment> target;
  std::vector<PhoneAlignment> test;
  std::map<std::string, Waveform> audio;  // natural audio of every utterance

  const ToySpeaker& target_speaker() const { return speakers.back(); }
};

ToyDataset make_toy_dataset(const ToyDatasetSpec& spec, const AnalysisConfig& cfg);

}  // namespace vf

#endif  // VF_TOY_VOICES_H_
