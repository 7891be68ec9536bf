#include "vf/inference.h"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "test_util.h"
#include "toy_fixture.h"
#include "vf/trainer.h"
#include "vf/util.h"

namespace vf {
namespace {

using testing::sine;
using testing::TempDir;
using testing::tiny_vf_config;
using testing::tiny_world;

TargetVoiceProfile tiny_profile() {
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.finetune_steps = 2;
  cfg.batch_size = 2;
  const auto& w = tiny_world();
  const auto bg = train_background(w.background, w.embedder, tiny_vf_config(), cfg);
  const auto ft = finetune(bg.model, w.target, w.embedder, cfg);
  TargetVoiceProfile p;
  p.model = ft.model;
  p.centroid = ft.centroid;
  std::vector<F0Contour> contours;
  std::vector<const MelSpectrogram*> source;
  for (const auto& pair : w.target) {
    contours.push_back(pair.target_f0);
    source.push_back(&pair.source_mel);
  }
  p.target_f0 = f0_stats(contours);
  p.source_f0 = source_f0_stats(source);
  p.synth_seed = w.synth_seed;
  return p;
}

TEST(SynthesizeSourceTest, DurationLawAndDeterminism) {
  const ToySynthesizer synth(1, AnalysisConfig{});
  PhoneAlignment a{"u", "s", {{"ah", 0, 30}, {"s", 30, 55}, {"iy", 55, 80}}};
  const MelSpectrogram m = synthesize_source(a, synth);
  EXPECT_EQ(m.num_frames(), 80);
  EXPECT_EQ(m.num_bins(), 80);
  EXPECT_EQ(m.frames, synthesize_source(a, synth).frames);
}

TEST(SynthesizeSourceTest, EmptyAlignmentIsAnError) {
  const ToySynthesizer synth(1, AnalysisConfig{});
  EXPECT_THROW(synthesize_source(PhoneAlignment{"u", "s", {}}, synth), DataError);
}

TEST(SourceF0FromMelTest, Tone220WithinOneMelBin) {
  const AnalysisConfig cfg;
  const MelSpectrogram m = mel_spectrogram(sine(220.0, 0.6), cfg);
  // Width of one mel step at 220 Hz, from d(mel)/d(hz) of the HTK formula.
  const double mel_step = 2595.0 * std::log10(1.0 + 8000.0 / 700.0) / 81.0;
  const double hz_per_mel = (700.0 + 220.0) * std::log(10.0) / 2595.0;
  const double tolerance = mel_step * hz_per_mel;
  const F0Contour c = source_f0_from_mel(m, cfg);
  ASSERT_EQ(c.num_frames(), m.num_frames());
  for (int t = 3; t < c.num_frames() - 3; ++t) {
    ASSERT_TRUE(c.voiced[t]) << "frame " << t;
    EXPECT_NEAR(c.f0_hz[t], 220.0, tolerance) << "frame " << t;
  }
}

TEST(SourceF0FromMelTest, AllFloorIsUnvoiced) {
  const AnalysisConfig cfg;
  MelSpectrogram m;
  m.frames = Eigen::MatrixXf::Constant(25, 80, static_cast<float>(std::log(cfg.log_floor)));
  const F0Contour c = source_f0_from_mel(m, cfg);
  ASSERT_EQ(c.num_frames(), 25);
  for (int t = 0; t < 25; ++t) EXPECT_FALSE(c.voiced[t]);
}

TEST(SourceF0FromMelTest, FrameCountPreserved) {
  std::mt19937 rng(1);
  std::normal_distribution<float> g(-5.0f, 2.0f);
  for (int t : {1, 2, 9, 40}) {
    MelSpectrogram m;
    m.frames.resize(t, 80);
    for (Eigen::Index i = 0; i < m.frames.size(); ++i) m.frames.data()[i] = g(rng);
    EXPECT_EQ(source_f0_from_mel(m).num_frames(), t);
  }
}

TEST(SourceF0FromMelTest, ToySynthesizerVoicedPhonesTrackTheirPitch) {
  const ToySynthesizer synth(5, AnalysisConfig{});
  for (const auto& phone : toy_phone_inventory()) {
    if (!toy_phone_voiced(phone)) continue;
    PhoneAlignment a{"u", "s", {{phone, 0, 10}}};
    const F0Contour c = source_f0_from_mel(synth.synthesize(a));
    const double expected = synth.phone_pitch(phone);
    for (int t = 0; t < c.num_frames(); ++t) {
      ASSERT_TRUE(c.voiced[t]) << phone;
      EXPECT_NEAR(c.f0_hz[t] / expected, 1.0, 0.08) << phone;
    }
  }
}

TEST(VocodeTest, DelegatesToGriffinLim) {
  const AnalysisConfig cfg;
  const MelSpectrogram m = mel_spectrogram(sine(300.0, 0.3), cfg);
  EXPECT_EQ(vocode(m).samples, griffin_lim(m, cfg, kDefaultGriffinLimIters).samples);
}

TEST(VocodeTest, EightyFramesGiveOneSecond) {
  const AnalysisConfig cfg;
  MelSpectrogram m;
  m.frames = Eigen::MatrixXf::Constant(80, 80, -6.0f);
  EXPECT_EQ(vocode(m, cfg, 3).size(), 16000u);
}

TEST(VocodeTest, NonFiniteInputIsRejected) {
  MelSpectrogram m;
  m.frames = Eigen::MatrixXf::Constant(10, 80, -6.0f);
  m.frames(4, 4) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(vocode(m), DataError);
}

class ProfileTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { profile_ = new TargetVoiceProfile(tiny_profile()); }
  static void TearDownTestSuite() { delete profile_; }
  static TargetVoiceProfile* profile_;
};

TargetVoiceProfile* ProfileTest::profile_ = nullptr;

TEST_F(ProfileTest, ConvertPreservesShapeAndIsDeterministic) {
  const ToySynthesizer synth(tiny_world().synth_seed, AnalysisConfig{});
  for (const auto& a : tiny_world().data.test) {
    const MelSpectrogram src = synthesize_source(a, synth);
    const MelSpectrogram out = convert(src, *profile_);
    EXPECT_EQ(out.num_frames(), src.num_frames());
    EXPECT_EQ(out.num_bins(), src.num_bins());
    EXPECT_EQ(out.frames, convert(src, *profile_).frames);
  }
}

TEST_F(ProfileTest, ConditioningFollowsTheTargetStatistics) {
  const ToySynthesizer synth(tiny_world().synth_seed, AnalysisConfig{});
  const MelSpectrogram src = synthesize_source(tiny_world().data.test.front(), synth);
  const Conversion c = convert_detailed(src, *profile_);
  const LogF0 expected = renormalize_f0(log_f0(c.source_f0), profile_->source_f0, profile_->target_f0);
  EXPECT_EQ(c.conditioning_f0.values, expected.values);
  EXPECT_EQ(c.conditioning_f0.voiced, expected.voiced);
}

TEST_F(ProfileTest, SaveAndLoadRoundTrip) {
  TempDir dir("profile");
  save_profile(dir.str(), *profile_, {{"k", 1}});
  const TargetVoiceProfile back = load_profile(dir.str());
  EXPECT_EQ(back.centroid, profile_->centroid);
  EXPECT_EQ(back.target_f0.mean, profile_->target_f0.mean);
  EXPECT_EQ(back.source_f0.stddev, profile_->source_f0.stddev);
  EXPECT_EQ(back.synth_seed, profile_->synth_seed);
  const MelSpectrogram src = tiny_world().target.front().source_mel;
  EXPECT_EQ(convert(src, back).frames, convert(src, *profile_).frames);
}

TEST_F(ProfileTest, InconsistentProfileIsRejected) {
  TargetVoiceProfile bad = *profile_;
  bad.centroid = Eigen::VectorXf::Unit(5, 0);
  EXPECT_THROW(bad.validate(), DataError);
  bad = *profile_;
  bad.centroid *= 2.0f;
  EXPECT_THROW(bad.validate(), DataError);
}

TEST_F(ProfileTest, InputIsNotModified) {
  const MelSpectrogram src = tiny_world().target.front().source_mel;
  MelSpectrogram copy = src;
  convert(copy, *profile_);
  EXPECT_EQ(copy.frames, src.frames);
}

}  // namespace
}  // namespace vf
