#include "vf/embedder.h"

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "vf/toy_voices.h"
#include "vf/util.h"

namespace vf {
namespace {

using SpeakerMelMap = std::map<std::string, std::vector<Eigen::MatrixXf>>;

// Natural toy-voice mels split into a training and a held-out half.
struct ToyMels {
  SpeakerMelMap train, held_out;
};

const ToyMels& toy_mels() {
  static const ToyMels mels = [] {
    const AnalysisConfig cfg;
    ToyDatasetSpec spec;
    spec.background_speakers = 4;
    spec.utterances_per_speaker = 12;
    spec.target_utterances = 2;
    spec.test_utterances = 0;
    spec.seed = 5;
    const ToyDataset d = make_toy_dataset(spec, cfg);
    ToyMels out;
    std::map<std::string, int> seen;
    for (const auto& a : d.background) {
      auto mel = mel_spectrogram(d.audio.at(a.utterance_id), cfg).frames;
      auto& dst = seen[a.speaker_id]++ < 8 ? out.train : out.held_out;
      dst[a.speaker_id].push_back(std::move(mel));
    }
    return out;
  }();
  return mels;
}

EmbedderConfig small_config() {
  EmbedderConfig c;
  c.channels = 32;
  c.embed_dim = 16;
  return c;
}

TEST(Ge2eTest, OneHotSpeakersHandComputed) {
  Mat<double> e(4, 2);
  e << 1, 0, 1, 0, 0, 1, 0, 1;
  const auto r = ge2e_loss<double>(e, 2, 2, 1.0, 0.0);
  // Own centroid at cosine 1, the other at cosine 0.
  EXPECT_NEAR(r.loss, -1.0 + std::log(std::exp(1.0) + 1.0), 1e-12);
}

TEST(Ge2eTest, IdenticalEmbeddingsGiveLnN) {
  for (int n : {2, 3, 5}) {
    Mat<double> e = Mat<double>::Zero(n * 3, 4);
    e.col(0).setOnes();
    const auto r = ge2e_loss<double>(e, n, 3, 2.5, -1.0);
    EXPECT_NEAR(r.loss, std::log(static_cast<double>(n)), 1e-12);
  }
}

TEST(Ge2eTest, TooFewSpeakersOrUtterances) {
  Mat<double> e = Mat<double>::Identity(3, 3);
  EXPECT_THROW(ge2e_loss<double>(e, 1, 3, 1.0, 0.0), DataError);
  EXPECT_THROW(ge2e_loss<double>(e, 3, 1, 1.0, 0.0), DataError);
}

TEST(Ge2eTest, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    Mat<double> e(3 * 3, 5);
    for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = g(rng);
    for (Eigen::Index r = 0; r < e.rows(); ++r) e.row(r).normalize();
    const double w = 3.0 + trial, b = -2.0;
    const auto res = ge2e_loss<double>(e, 3, 3, w, b);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      Mat<double> p = e, m = e;
      p.data()[i] += h;
      m.data()[i] -= h;
      const double fd = (ge2e_loss<double>(p, 3, 3, w, b).loss - ge2e_loss<double>(m, 3, 3, w, b).loss) / (2 * h);
      EXPECT_NEAR(res.d_embeddings.data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
    const double fw = (ge2e_loss<double>(e, 3, 3, w + h, b).loss - ge2e_loss<double>(e, 3, 3, w - h, b).loss) / (2 * h);
    const double fb = (ge2e_loss<double>(e, 3, 3, w, b + h).loss - ge2e_loss<double>(e, 3, 3, w, b - h).loss) / (2 * h);
    EXPECT_NEAR(res.d_w, fw, 1e-6);
    EXPECT_NEAR(res.d_b, fb, 1e-6);
  }
}

TEST(CentroidTest, Examples) {
  Eigen::VectorXf e(2);
  e << 0.6f, 0.8f;
  EXPECT_TRUE(centroid({e}).isApprox(e));
  EXPECT_TRUE(centroid({e, e}).isApprox(e));
  Eigen::VectorXf x(2), y(2);
  x << 1, 0;
  y << 0, 1;
  const Eigen::VectorXf c = centroid({x, y});
  EXPECT_NEAR(c(0), 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_NEAR(c(1), 1.0 / std::sqrt(2.0), 1e-7);
}

TEST(CentroidTest, EmptyOrCancellingSetsAreErrors) {
  EXPECT_THROW(centroid({}), DataError);
  Eigen::VectorXf x(2);
  x << 1, 0;
  EXPECT_THROW(centroid({x, Eigen::VectorXf(-x)}), DataError);
}

TEST(EmbedderTest, OutputIsUnitNormAndDeterministic) {
  EmbedderModel model(small_config());
  model.initialize(3);
  std::mt19937 rng(4);
  std::normal_distribution<float> g(-4.0f, 2.0f);
  for (int t : {4, 5, 17, 80}) {
    MelSpectrogram m;
    m.frames.resize(t, 80);
    for (Eigen::Index i = 0; i < m.frames.size(); ++i) m.frames.data()[i] = g(rng);
    const Eigen::VectorXf e = embed(m, model);
    EXPECT_EQ(e.size(), 16);
    EXPECT_NEAR(e.norm(), 1.0f, 1e-5f);
    EXPECT_EQ(e, embed(m, model));
  }
}

TEST(EmbedderTest, TooShortInputIsAnError) {
  EmbedderModel model(small_config());
  model.initialize(3);
  MelSpectrogram m;
  m.frames = Eigen::MatrixXf::Zero(3, 80);
  EXPECT_THROW(embed(m, model), DataError);
}

TEST(EmbedderTest, OneSpeakerCannotTrain) {
  SpeakerMelMap one;
  one["a"] = toy_mels().train.begin()->second;
  EXPECT_THROW(train_embedder(one, small_config(), {}), DataError);
}

class TrainedEmbedderTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    EmbedderTrainConfig t;
    t.steps = 200;
    t.seed = 9;
    trained_ = new EmbedderTrainResult(train_embedder(toy_mels().train, small_config(), t));
    t.steps = 0;
    initial_ = new EmbedderTrainResult(train_embedder(toy_mels().train, small_config(), t));
  }
  static void TearDownTestSuite() {
    delete trained_;
    delete initial_;
  }
  static EmbedderTrainResult* trained_;
  static EmbedderTrainResult* initial_;
};

EmbedderTrainResult* TrainedEmbedderTest::trained_ = nullptr;
EmbedderTrainResult* TrainedEmbedderTest::initial_ = nullptr;

TEST_F(TrainedEmbedderTest, HeldOutLossHalves) {
  const double before = ge2e_batch_loss(initial_->model, toy_mels().held_out, 4);
  const double after = ge2e_batch_loss(trained_->model, toy_mels().held_out, 4);
  EXPECT_LE(after, 0.5 * before) << "before " << before << " after " << after;
}

TEST_F(TrainedEmbedderTest, SameSpeakerCloserThanOtherSpeakers) {
  std::vector<std::pair<std::string, Eigen::VectorXf>> e;
  for (const auto& [spk, mels] : toy_mels().held_out)
    for (const auto& m : mels) {
      MelSpectrogram mel;
      mel.frames = m;
      e.emplace_back(spk, embed(mel, trained_->model));
    }
  double intra = 0.0, inter = 0.0;
  int ni = 0, nx = 0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = i + 1; j < e.size(); ++j) {
      const double c = e[i].second.dot(e[j].second);
      if (e[i].first == e[j].first) {
        intra += c;
        ++ni;
      } else {
        inter += c;
        ++nx;
      }
    }
  EXPECT_GT(intra / ni, inter / nx);
}

TEST_F(TrainedEmbedderTest, SeededTrainingIsReproducible) {
  EmbedderTrainConfig t;
  t.steps = 200;
  t.seed = 9;
  const auto again = train_embedder(toy_mels().train, small_config(), t);
  EXPECT_EQ(parameter_digest(again.model.params()), parameter_digest(trained_->model.params()));
  EXPECT_EQ(again.loss_history, trained_->loss_history);
}

TEST(EmbeddingsCsvTest, Layout) {
  Eigen::VectorXf a(2);
  a << 0.5f, -1.0f;
  EXPECT_EQ(embeddings_to_csv({"u1"}, {a}), "id,e0,e1\nu1,0.5,-1\n");
}

}  // namespace
}  // namespace vf
