// A tiny parallel corpus and embedder shared by the trainer and inference
// tests. Built once per test binary.
#ifndef VF_TESTS_TOY_FIXTURE_H_
#define VF_TESTS_TOY_FIXTURE_H_

#include <map>
#include <string>
#include <vector>

#include "vf/corpus.h"
#include "vf/embedder.h"
#include "vf/toy_voices.h"
#include "vf/voice_filter.h"

namespace vf::testing {

struct TinyWorld {
  AnalysisConfig analysis;
  ToyDataset data;
  std::vector<ParallelUtterancePair> background;
  std::vector<ParallelUtterancePair> target;
  EmbedderModel embedder{EmbedderConfig{}};
  std::uint64_t synth_seed = 3;
};

inline VoiceFilterConfig tiny_vf_config() {
  VoiceFilterConfig c;
  c.channels = 8;
  c.embed_dim = 8;
  c.lstm_hidden = 8;
  c.dense_units = 16;
  return c;
}

inline const TinyWorld& tiny_world() {
  static const TinyWorld world = [] {
    TinyWorld w;
    ToyDatasetSpec spec;
    spec.background_speakers = 2;
    spec.utterances_per_speaker = 4;
    spec.target_utterances = 3;
    spec.test_utterances = 2;
    spec.shape.max_phones = 7;
    w.data = make_toy_dataset(spec, w.analysis);
    const ToySynthesizer synth(w.synth_seed, w.analysis);
    w.background = build_parallel_corpus(w.data.background, synth, w.data.audio, w.analysis).pairs;
    w.target = build_parallel_corpus(w.data.target, synth, w.data.audio, w.analysis).pairs;

    std::map<std::string, std::vector<Eigen::MatrixXf>> mels;
    for (const auto& p : w.background) mels[p.speaker_id].push_back(p.target_mel.frames);
    EmbedderConfig ec;
    ec.channels = 8;
    ec.embed_dim = 8;
    EmbedderTrainConfig et;
    et.steps = 5;
    w.embedder = train_embedder(mels, ec, et).model;
    return w;
  }();
  return world;
}

}  // namespace vf::testing

#endif  // VF_TESTS_TOY_FIXTURE_H_
