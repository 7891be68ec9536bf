// Phone alignments, duration-controlled synthesis and the frame-matched
// parallel corpus.
#ifndef VF_CORPUS_H_
#define VF_CORPUS_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "vf/dsp.h"
#include "vf/pitch.h"

namespace vf {

struct PhoneSegment {
  std::string phone;
  int start_frame = 0;
  int end_frame = 0;

  int duration() const { return end_frame - start_frame; }
};

// Segments are contiguous, start at frame 0 and have positive duration.
struct PhoneAlignment {
  std::string utterance_id;
  std::string speaker_id;
  std::vector<PhoneSegment> segments;

  int total_frames() const { return segments.empty() ? 0 : segments.back().end_frame; }
};

// Parses "utt_id speaker_id phone start_frame end_frame" lines. Utterances
// are returned in order of first appearance; their lines must be consecutive.
std::vector<PhoneAlignment> parse_alignments_text(const std::string& text);
std::vector<PhoneAlignment> parse_alignments(const std::string& path);
// Exactly one utterance expected.
PhoneAlignment parse_alignment(const std::string& path);
std::string alignment_to_text(const PhoneAlignment& a);
// Throws DataError when the segment invariants do not hold.
void validate_alignment(const PhoneAlignment& a);

// Duration-controllable synthesis: the returned mel has exactly
// a.total_frames() frames.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual MelSpectrogram synthesize(const PhoneAlignment& a) const = 0;
};

// Deterministic single-speaker stand-in. Every phone symbol maps to a fixed
// 80-bin log-mel template built from a seeded hash of the symbol: a smoothed
// spectral envelope, with a harmonic comb at a per-phone source pitch for
// voiced phones. Adjacent phones are cross-faded linearly over two frames.
class ToySynthesizer : public Synthesizer {
 public:
  ToySynthesizer(std::uint64_t seed, AnalysisConfig cfg);

  MelSpectrogram synthesize(const PhoneAlignment& a) const override;
  // The template for a phone symbol (B values, log domain).
  Eigen::VectorXf phone_template(const std::string& phone) const;
  // Source pitch used for a voiced phone's template, 0 for unvoiced phones.
  double phone_pitch(const std::string& phone) const;

  std::uint64_t seed() const { return seed_; }
  const AnalysisConfig& config() const { return cfg_; }

 private:
  std::uint64_t seed_;
  AnalysisConfig cfg_;
  Eigen::MatrixXd filterbank_;
};

// Deterministic 64-bit hash of a string mixed with a seed (FNV-1a + splitmix).
std::uint64_t hash_symbol(const std::string& s, std::uint64_t seed);
// Seed-independent voicing class of a phone symbol, shared by the toy
// synthesizer and the toy speaker voices.
bool toy_phone_voiced(const std::string& phone);

struct ParallelUtterancePair {
  std::string utterance_id;
  std::string speaker_id;
  MelSpectrogram source_mel;
  MelSpectrogram target_mel;
  F0Contour target_f0;
  LogF0 target_logf0;

  int num_frames() const { return source_mel.num_frames(); }
};

struct CorpusBuildOptions {
  // When false, utterances with missing audio or a frame mismatch beyond one
  // frame are skipped and reported; when true they abort the build.
  bool strict = false;
  int threads = 1;
  PitchConfig pitch;
};

struct CorpusTrim {
  std::string utterance_id;
  int natural_frames = 0;
  int alignment_frames = 0;
};

struct CorpusSkip {
  std::string utterance_id;
  std::string reason;
};

struct CorpusBuild {
  std::vector<ParallelUtterancePair> pairs;  // sorted by utterance id
  std::vector<CorpusTrim> trims;
  std::vector<CorpusSkip> skipped;
};

CorpusBuild build_parallel_corpus(const std::vector<PhoneAlignment>& alignments, const Synthesizer& synth,
                                  const std::map<std::string, Waveform>& natural_audio, const AnalysisConfig& cfg,
                                  const CorpusBuildOptions& options = {});

// Writes pairs/<utt>/{source.mel,target.mel,f0.csv,meta.json} and
// manifest.json under `dir`; returns the manifest.
nlohmann::json write_corpus(const std::string& dir, const CorpusBuild& build, const AnalysisConfig& cfg,
                            std::uint64_t seed);
// Loads every pair listed in the manifest. Any pair whose source and target
// frame counts differ, or whose content hash does not verify, rejects the load.
std::vector<ParallelUtterancePair> load_corpus(const std::string& dir);
nlohmann::json read_manifest(const std::string& dir);

// Throws DataError if the pair's frame counts disagree.
void validate_pair(const ParallelUtterancePair& p);

}  // namespace vf

#endif  // VF_CORPUS_H_
