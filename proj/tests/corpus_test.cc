#include "vf/corpus.h"

#include <filesystem>
#include <map>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vf/mel_io.h"
#include "vf/toy_voices.h"
#include "vf/util.h"

namespace vf {
namespace {

using testing::sine;
using testing::TempDir;

const std::string kData = VF_TEST_DATA_DIR;

PhoneAlignment simple_alignment(const std::string& id, int frames) {
  PhoneAlignment a;
  a.utterance_id = id;
  a.speaker_id = "spk";
  const int half = frames / 2;
  a.segments = {{"ah", 0, half}, {"s", half, frames}};
  return a;
}

TEST(AlignmentTest, ContiguousPhones) {
  const auto all = parse_alignments_text("u s a 0 10\nu s b 10 25\n");
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].total_frames(), 25);
  EXPECT_EQ(all[0].segments[1].duration(), 15);
}

TEST(AlignmentTest, FixtureKeepsFileOrder) {
  const PhoneAlignment a = parse_alignment(kData + "/three_phones.txt");
  EXPECT_EQ(a.utterance_id, "utt_001");
  EXPECT_EQ(a.speaker_id, "spk_a");
  ASSERT_EQ(a.segments.size(), 3u);
  EXPECT_EQ(a.segments[0].phone, "sil");
  EXPECT_EQ(a.segments[1].phone, "ah");
  EXPECT_EQ(a.segments[2].phone, "t");
  EXPECT_EQ(a.total_frames(), 25);
}

TEST(AlignmentTest, OverlapReportsLineTwo) {
  try {
    parse_alignment(kData + "/overlap.txt");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(AlignmentTest, GapsAndBadDurationsAreRejected) {
  EXPECT_THROW(parse_alignments_text("u s a 0 10\nu s b 12 20\n"), DataError);
  EXPECT_THROW(parse_alignments_text("u s a 0 0\n"), DataError);
  EXPECT_THROW(parse_alignments_text("u s a 3 9\n"), DataError);
  EXPECT_THROW(parse_alignments_text("u s a 0\n"), DataError);
}

TEST(AlignmentTest, TextRoundTrip) {
  const auto a = parse_alignment(kData + "/three_phones.txt");
  const auto back = parse_alignments_text(alignment_to_text(a));
  ASSERT_EQ(back.size(), 1u);
  ASSERT_EQ(back[0].segments.size(), a.segments.size());
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    EXPECT_EQ(back[0].segments[i].phone, a.segments[i].phone);
    EXPECT_EQ(back[0].segments[i].end_frame, a.segments[i].end_frame);
  }
}

TEST(ToySynthesizerTest, DurationLaw) {
  const ToySynthesizer synth(7, AnalysisConfig{});
  const auto a = parse_alignment(kData + "/three_phones.txt");
  const MelSpectrogram m = synth.synthesize(a);
  EXPECT_EQ(m.num_frames(), 25);
  EXPECT_EQ(m.num_bins(), 80);
}

TEST(ToySynthesizerTest, Deterministic) {
  const ToySynthesizer synth(7, AnalysisConfig{});
  const auto a = parse_alignment(kData + "/three_phones.txt");
  EXPECT_EQ(synth.synthesize(a).frames, synth.synthesize(a).frames);
  const ToySynthesizer again(7, AnalysisConfig{});
  EXPECT_EQ(again.synthesize(a).frames, synth.synthesize(a).frames);
}

TEST(ToySynthesizerTest, DistinctPhonesHaveSeparatedProfiles) {
  const ToySynthesizer synth(7, AnalysisConfig{});
  const auto& inventory = toy_phone_inventory();
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    for (std::size_t j = i + 1; j < inventory.size(); ++j) {
      PhoneAlignment a{"a", "s", {{inventory[i], 0, 12}}};
      PhoneAlignment b{"b", "s", {{inventory[j], 0, 12}}};
      const Eigen::VectorXf ma = synth.synthesize(a).frames.colwise().mean();
      const Eigen::VectorXf mb = synth.synthesize(b).frames.colwise().mean();
      EXPECT_GE((ma - mb).norm(), 0.1f) << inventory[i] << " vs " << inventory[j];
    }
  }
}

TEST(CorpusBuildTest, OneSecondUtteranceGivesEightyFramePair) {
  const AnalysisConfig cfg;
  const ToySynthesizer synth(1, cfg);
  const auto build = build_parallel_corpus({simple_alignment("u1", 80)}, synth, {{"u1", sine(180.0, 1.0)}}, cfg);
  ASSERT_EQ(build.pairs.size(), 1u);
  EXPECT_EQ(build.pairs[0].source_mel.num_frames(), 80);
  EXPECT_EQ(build.pairs[0].target_mel.num_frames(), 80);
  EXPECT_EQ(build.pairs[0].target_f0.num_frames(), 80);
  EXPECT_TRUE(build.trims.empty());
}

TEST(CorpusBuildTest, OneExtraFrameIsTrimmedAndLogged) {
  const AnalysisConfig cfg;
  const ToySynthesizer synth(1, cfg);
  Waveform w = sine(180.0, 1.0);
  w.samples.resize(16100, 0.0f);  // 81 frames
  const auto build = build_parallel_corpus({simple_alignment("u1", 80)}, synth, {{"u1", w}}, cfg);
  ASSERT_EQ(build.pairs.size(), 1u);
  EXPECT_EQ(build.pairs[0].target_mel.num_frames(), 80);
  ASSERT_EQ(build.trims.size(), 1u);
  EXPECT_EQ(build.trims[0].natural_frames, 81);
  EXPECT_EQ(build.trims[0].alignment_frames, 80);
}

TEST(CorpusBuildTest, LargerMismatchIsSkippedOrFatal) {
  const AnalysisConfig cfg;
  const ToySynthesizer synth(1, cfg);
  const std::map<std::string, Waveform> audio = {{"u1", sine(180.0, 1.0)}};
  const auto build = build_parallel_corpus({simple_alignment("u1", 90)}, synth, audio, cfg);
  EXPECT_TRUE(build.pairs.empty());
  ASSERT_EQ(build.skipped.size(), 1u);
  CorpusBuildOptions strict;
  strict.strict = true;
  EXPECT_THROW(build_parallel_corpus({simple_alignment("u1", 90)}, synth, audio, cfg, strict), DataError);
}

TEST(CorpusBuildTest, MissingAudioIsReportedAndTheRestBuilds) {
  const AnalysisConfig cfg;
  const ToySynthesizer synth(1, cfg);
  const auto build = build_parallel_corpus({simple_alignment("u1", 80), simple_alignment("u2", 40)}, synth,
                                           {{"u2", sine(150.0, 0.5)}}, cfg);
  ASSERT_EQ(build.pairs.size(), 1u);
  EXPECT_EQ(build.pairs[0].utterance_id, "u2");
  ASSERT_EQ(build.skipped.size(), 1u);
  EXPECT_EQ(build.skipped[0].utterance_id, "u1");
}

TEST(CorpusBuildTest, EveryPairObeysTheFrameLawAndThreadsDoNotMatter) {
  const AnalysisConfig cfg;
  ToyDatasetSpec spec;
  spec.background_speakers = 2;
  spec.utterances_per_speaker = 4;
  spec.target_utterances = 2;
  spec.test_utterances = 0;
  const ToyDataset d = make_toy_dataset(spec, cfg);
  const ToySynthesizer synth(3, cfg);
  CorpusBuildOptions serial, parallel;
  parallel.threads = 4;
  const auto a = build_parallel_corpus(d.background, synth, d.audio, cfg, serial);
  const auto b = build_parallel_corpus(d.background, synth, d.audio, cfg, parallel);
  ASSERT_EQ(a.pairs.size(), d.background.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    const auto& p = a.pairs[i];
    EXPECT_EQ(p.source_mel.num_frames(), p.target_mel.num_frames());
    EXPECT_EQ(p.target_f0.num_frames(), p.num_frames());
    EXPECT_EQ(p.target_logf0.num_frames(), p.num_frames());
    EXPECT_EQ(p.target_mel.frames, b.pairs[i].target_mel.frames);
    EXPECT_EQ(p.target_f0.f0_hz, b.pairs[i].target_f0.f0_hz);
  }
}

TEST(CorpusIoTest, ManifestIsDeterministicAndLoadsBack) {
  const AnalysisConfig cfg;
  const ToySynthesizer synth(1, cfg);
  const std::vector<PhoneAlignment> al = {simple_alignment("u1", 80), simple_alignment("u2", 40)};
  const std::map<std::string, Waveform> audio = {{"u1", sine(180.0, 1.0)}, {"u2", sine(150.0, 0.5)}};
  TempDir dir("corpus");
  const auto m1 = write_corpus(dir.str("a"), build_parallel_corpus(al, synth, audio, cfg), cfg, 1);
  const auto m2 = write_corpus(dir.str("b"), build_parallel_corpus(al, synth, audio, cfg), cfg, 1);
  EXPECT_EQ(m1.at("manifest_hash"), m2.at("manifest_hash"));
  EXPECT_EQ(m1.at("pair_count"), 2);
  const auto pairs = load_corpus(dir.str("a"));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].source_mel.num_frames(), 80);
  EXPECT_EQ(pairs[1].target_mel.num_frames(), 40);
}

TEST(CorpusIoTest, TamperedPairIsRejectedAtLoad) {
  const AnalysisConfig cfg;
  const ToySynthesizer synth(1, cfg);
  TempDir dir("corpus");
  write_corpus(dir.str(), build_parallel_corpus({simple_alignment("u1", 40)}, synth, {{"u1", sine(150.0, 0.5)}}, cfg),
               cfg, 1);
  // Replace the target mel with a shorter one: the pair no longer satisfies
  // the frame law and its content hash no longer verifies.
  const std::string target = dir.str("pairs/u1/target.mel");
  MelSpectrogram m = read_mel_file(target);
  m.frames.conservativeResize(39, m.num_bins());
  write_mel_file(target, m, cfg);
  EXPECT_THROW(load_corpus(dir.str()), DataError);
}

TEST(CorpusIoTest, PairValidation) {
  ParallelUtterancePair p;
  p.utterance_id = "x";
  p.source_mel.frames = Eigen::MatrixXf::Zero(10, 80);
  p.target_mel.frames = Eigen::MatrixXf::Zero(11, 80);
  p.target_f0.f0_hz.assign(11, 0.0);
  p.target_f0.voiced.assign(11, false);
  p.target_logf0 = log_f0(p.target_f0);
  EXPECT_THROW(validate_pair(p), DataError);
}

}  // namespace
}  // namespace vf
