#include "vf/voice_filter.h"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "vf/util.h"

namespace vf {
namespace {

VoiceFilterConfig small_config() {
  VoiceFilterConfig c;
  c.mel_bins = 80;
  c.channels = 16;
  c.embed_dim = 8;
  c.lstm_hidden = 12;
  c.dense_units = 24;
  return c;
}

template <class S>
VfInput<S> random_input(const VoiceFilterConfig& cfg, int frames, std::mt19937_64& rng) {
  std::normal_distribution<double> g(-3.0, 1.5);
  std::bernoulli_distribution voiced(0.6);
  VfInput<S> in;
  in.mel.resize(frames, cfg.mel_bins);
  for (Eigen::Index i = 0; i < in.mel.size(); ++i) in.mel.data()[i] = static_cast<S>(g(rng));
  in.speaker = RowVec<S>::Zero(cfg.embed_dim);
  for (int k = 0; k < cfg.embed_dim; ++k) in.speaker(k) = static_cast<S>(g(rng));
  in.speaker.normalize();
  for (int t = 0; t < frames; ++t) {
    const bool v = voiced(rng);
    in.voicing.push_back(v ? S(1) : S(0));
    in.logf0.push_back(static_cast<S>(v ? 5.0 + 0.1 * g(rng) : 5.0));
  }
  return in;
}

TEST(VoiceFilterTest, OutputHasTheInputFrameCount) {
  VoiceFilterModel model(small_config());
  model.initialize(1);
  std::mt19937_64 rng(2);
  for (int t : {1, 2, 7, 33}) {
    const auto out = model.forward(random_input<float>(model.config(), t, rng));
    EXPECT_EQ(out.rows(), t);
    EXPECT_EQ(out.cols(), 80);
  }
}

TEST(VoiceFilterTest, OnlyTheOutputBiasPropagates) {
  VoiceFilterModel model(small_config());
  model.initialize(1);
  for (std::size_t i = 0; i < model.params().size(); ++i) model.params()[i].setZero();
  auto& beta = model.params()[model.params().index_of("out.bias")];
  for (int k = 0; k < 80; ++k) beta(0, k) = 0.25f * static_cast<float>(k) - 3.0f;
  std::mt19937_64 rng(3);
  const auto out = model.forward(random_input<float>(model.config(), 9, rng));
  for (int t = 0; t < 9; ++t) EXPECT_EQ(out.row(t), beta);
}

TEST(VoiceFilterTest, ConditioningChangesTheOutput) {
  VoiceFilterModel model(small_config());
  model.initialize(4);
  std::mt19937_64 rng(5);
  auto in = random_input<float>(model.config(), 12, rng);
  const auto base = model.forward(in);
  auto other_speaker = in;
  other_speaker.speaker = -in.speaker;
  EXPECT_GT((model.forward(other_speaker) - base).cwiseAbs().maxCoeff(), 1e-4f);
  auto other_pitch = in;
  for (auto& v : other_pitch.logf0) v += 0.7f;
  EXPECT_GT((model.forward(other_pitch) - base).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(VoiceFilterTest, EvalModeIsDeterministic) {
  VoiceFilterModel a(small_config()), b(small_config());
  a.initialize(6);
  b.initialize(6);
  std::mt19937_64 rng(7);
  const auto in = random_input<float>(a.config(), 20, rng);
  EXPECT_EQ(a.forward(in), a.forward(in));
  EXPECT_EQ(a.forward(in), b.forward(in));
}

TEST(VoiceFilterTest, ConditioningLengthMismatchIsAnError) {
  VoiceFilterModel model(small_config());
  model.initialize(1);
  std::mt19937_64 rng(8);
  auto in = random_input<float>(model.config(), 10, rng);
  in.logf0.pop_back();
  EXPECT_THROW(model.forward(in), DataError);
  in = random_input<float>(model.config(), 10, rng);
  in.speaker = RowVec<float>::Ones(3);
  EXPECT_THROW(model.forward(in), DataError);
}

TEST(L1LossTest, Examples) {
  MelSpectrogram a, b;
  a.frames = Eigen::MatrixXf::Random(5, 80);
  EXPECT_EQ(l1_loss(a, a), 0.0);
  b.frames = a.frames.array() + 0.5f;
  EXPECT_NEAR(l1_loss(b, a), 0.5, 1e-6);
  Mat<double> p(2, 2), q = Mat<double>::Zero(2, 2);
  p << 1, -1, 0, 2;
  EXPECT_EQ(l1_loss<double>(p, q), 1.0);
}

TEST(L1LossTest, ShapeMismatchIsAnError) {
  EXPECT_THROW(l1_loss<double>(Mat<double>::Zero(2, 3), Mat<double>::Zero(3, 2)), DataError);
}

TEST(VoiceFilterGradientTest, ZeroResidualGivesZeroGradient) {
  VoiceFilterNet<double> model(small_config());
  model.initialize(10);
  std::mt19937_64 rng(11);
  std::vector<VfInput<double>> batch = {random_input<double>(model.config(), 6, rng),
                                        random_input<double>(model.config(), 9, rng)};
  std::vector<Mat<double>> targets;
  for (const auto& in : batch) targets.push_back(model.forward(in));
  const auto r = model.loss_and_gradients(batch, targets, NormMode::kRunning);
  EXPECT_LT(r.loss, 1e-12);
  for (std::size_t i = 0; i < r.grads.size(); ++i)
    EXPECT_LE(r.grads[i].cwiseAbs().maxCoeff(), 1e-9) << r.grads.name(i);
}

// Central differences on a random sample of elements of every tensor.
void check_sampled_gradients(NormMode mode, std::uint64_t seed) {
  VoiceFilterConfig cfg = small_config();
  cfg.mel_bins = 6;
  cfg.channels = 4;
  cfg.embed_dim = 3;
  cfg.lstm_hidden = 4;
  cfg.dense_units = 5;
  cfg.conv_layers = 3;
  cfg.kernel_size = 3;
  cfg.condition_after = 2;
  VoiceFilterNet<double> model(cfg);
  model.initialize(seed);
  std::mt19937_64 rng(seed + 100);
  std::vector<VfInput<double>> batch = {random_input<double>(cfg, 5, rng), random_input<double>(cfg, 7, rng)};
  std::vector<Mat<double>> targets;
  std::normal_distribution<double> g(-3.0, 1.0);
  for (const auto& in : batch) {
    Mat<double> t(in.mel.rows(), cfg.mel_bins);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = g(rng);
    targets.push_back(t);
  }
  const auto analytic = model.loss_and_gradients(batch, targets, mode);
  const double h = 1e-6;
  int compared = 0;
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    std::uniform_int_distribution<Eigen::Index> pick(0, model.params()[p].size() - 1);
    for (int s = 0; s < 4; ++s) {
      const Eigen::Index i = pick(rng);
      auto probe = [&](double delta) {
        VoiceFilterNet<double> m = model;
        m.params()[p].data()[i] += delta;
        return m.loss_and_gradients(batch, targets, mode);
      };
      const auto plus = probe(h), minus = probe(-h);
      if (plus.kink_signature != analytic.kink_signature || minus.kink_signature != analytic.kink_signature)
        continue;
      const double fd = (plus.loss - minus.loss) / (2 * h);
      const double an = analytic.grads[p].data()[i];
      EXPECT_NEAR(an, fd, 1e-5 * std::max(1.0, std::abs(fd))) << model.params().name(p) << "[" << i << "]";
      ++compared;
    }
  }
  EXPECT_GT(compared, 40);
}

TEST(VoiceFilterGradientTest, BatchStatisticsMatchCentralDifferences) {
  check_sampled_gradients(NormMode::kBatch, 1);
  check_sampled_gradients(NormMode::kBatch, 2);
}

TEST(VoiceFilterGradientTest, RunningStatisticsMatchCentralDifferences) {
  check_sampled_gradients(NormMode::kRunning, 3);
  check_sampled_gradients(NormMode::kRunning, 4);
}

TEST(VoiceFilterTest, RunningStatisticsUpdateRule) {
  VoiceFilterConfig cfg = small_config();
  cfg.bn_momentum = 0.9;
  VoiceFilterModel model(cfg);
  model.initialize(1);
  const auto before_mean = model.buffers()[model.buffers().index_of("bn0.running_mean")];
  const auto before_var = model.buffers()[model.buffers().index_of("bn0.running_var")];
  std::vector<RowVec<float>> mean, var;
  for (int l = 0; l < cfg.conv_layers; ++l) {
    mean.push_back(RowVec<float>::Constant(cfg.channels, 2.0f));
    var.push_back(RowVec<float>::Constant(cfg.channels, 3.0f));
  }
  model.update_running_stats(mean, var);
  const auto& after_mean = model.buffers()[model.buffers().index_of("bn0.running_mean")];
  const auto& after_var = model.buffers()[model.buffers().index_of("bn0.running_var")];
  for (int c = 0; c < cfg.channels; ++c) {
    EXPECT_NEAR(after_mean(0, c), 0.9f * before_mean(0, c) + 0.1f * 2.0f, 1e-6f);
    EXPECT_NEAR(after_var(0, c), 0.9f * before_var(0, c) + 0.1f * 3.0f, 1e-6f);
  }
}

TEST(VoiceFilterConfigTest, JsonRoundTripAndUnknownKeys) {
  const VoiceFilterConfig c = small_config();
  EXPECT_EQ(VoiceFilterConfig::from_json(c.to_json()), c);
  auto j = c.to_json();
  j["dropout"] = 0.1;
  EXPECT_THROW(VoiceFilterConfig::from_json(j), UsageError);
}

}  // namespace
}  // namespace vf
