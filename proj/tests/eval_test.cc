#include "vf/eval.h"

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "vf/util.h"

namespace vf {
namespace {

Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng, double ridge = 0.05) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(d, d + 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return a * a.transpose() / (d + 2) + ridge * Eigen::MatrixXd::Identity(d, d);
}

Eigen::VectorXd random_vec(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = g(rng);
  return v;
}

// Fréchet distance through Eigen's self-adjoint solver.
double reference_frechet(const GaussianFit& a, const GaussianFit& b) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a.cov);
  const Eigen::MatrixXd ra = ea.operatorSqrt();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(ra * b.cov * ra);
  const double cross = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
}

GaussianFit gauss1(double mu, double sigma) {
  return {Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, sigma * sigma)};
}

TEST(CsedTest, Examples) {
  Eigen::VectorXf c(3), o(3);
  c << 0, 0.6f, 0.8f;
  o << 1, 0, 0;
  EXPECT_NEAR(csed({c, c}, {c}), 0.0, 1e-7);
  EXPECT_NEAR(csed({o}, {c}), 1.0, 1e-7);
  EXPECT_NEAR(csed({c, Eigen::VectorXf(-c)}, {c}), 1.0, 1e-7);
  EXPECT_THROW(csed({}, {c}), DataError);
  EXPECT_THROW(csed({c}, {}), DataError);
}

TEST(CsedTest, RangeAndRotationInvariance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Eigen::VectorXf> s, r;
    for (int i = 0; i < 5; ++i) {
      s.push_back(random_vec(6, rng).cast<float>().normalized());
      r.push_back(random_vec(6, rng).cast<float>().normalized());
    }
    const double d = csed(s, r);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 2.0);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_spd(6, rng));
    const Eigen::MatrixXf q = Eigen::MatrixXd(qr.householderQ()).cast<float>();
    for (auto& v : s) v = q * v;
    for (auto& v : r) v = q * v;
    EXPECT_NEAR(csed(s, r), d, 1e-5);
  }
}

TEST(FrechetTest, OneDimensionalExamples) {
  EXPECT_NEAR(frechet_distance(gauss1(0, 1), gauss1(1, 1)), 1.0, 1e-12);
  EXPECT_NEAR(frechet_distance(gauss1(0, 1), gauss1(0, 2)), 1.0, 1e-12);
}

TEST(FrechetTest, OneDimensionalClosedForm) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> mu(-10, 10), sd(0.01, 5);
  for (int i = 0; i < 1000; ++i) {
    const double m1 = mu(rng), m2 = mu(rng), s1 = sd(rng), s2 = sd(rng);
    const double expected = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
    EXPECT_NEAR(frechet_distance(gauss1(m1, s1), gauss1(m2, s2)), expected, 1e-10);
  }
}

TEST(FrechetTest, MatchesDenseEigenOracle) {
  std::mt19937_64 rng(9);
  for (int d = 1; d <= 8; ++d) {
    for (int trial = 0; trial < 10; ++trial) {
      const GaussianFit a{random_vec(d, rng), random_spd(d, rng)};
      const GaussianFit b{random_vec(d, rng), random_spd(d, rng)};
      const double expected = reference_frechet(a, b);
      EXPECT_NEAR(frechet_distance(a, b), expected, 1e-9 * std::max(1.0, expected)) << "dim " << d;
    }
  }
}

TEST(FrechetTest, IdentitySymmetryAndTranslation) {
  std::mt19937_64 rng(10);
  for (int d : {1, 3, 8, 16}) {
    const GaussianFit a{random_vec(d, rng), random_spd(d, rng)};
    const GaussianFit b{random_vec(d, rng), random_spd(d, rng, 1e-4)};
    EXPECT_NEAR(frechet_distance(a, a), 0.0, 1e-10);
    EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-8);
    const Eigen::VectorXd shift = random_vec(d, rng);
    const GaussianFit as{a.mean + shift, a.cov}, bs{b.mean + shift, b.cov};
    EXPECT_NEAR(frechet_distance(as, bs), frechet_distance(a, b), 1e-8);
  }
}

TEST(FrechetTest, SingularCovariances) {
  const GaussianFit zero{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Zero(3, 3)};
  GaussianFit rank1 = zero;
  rank1.cov(0, 0) = 4.0;
  EXPECT_NEAR(frechet_distance(zero, rank1), 4.0, 1e-12);
  EXPECT_NEAR(frechet_distance(rank1, rank1), 0.0, 1e-12);
}

TEST(FrechetTest, DimensionMismatchIsAnError) {
  EXPECT_THROW(frechet_distance(gauss1(0, 1), GaussianFit{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)}),
               DataError);
}

TEST(JacobiTest, ReconstructsTheMatrix) {
  std::mt19937_64 rng(12);
  for (int d : {1, 2, 5, 12}) {
    const Eigen::MatrixXd a = random_spd(d, rng) - 0.5 * Eigen::MatrixXd::Identity(d, d);
    const SymmetricEigen e = jacobi_eigen(a);
    const Eigen::MatrixXd back = e.vectors * e.values.asDiagonal() * e.vectors.transpose();
    EXPECT_LT((back - a).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((e.vectors.transpose() * e.vectors - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12);
    for (int i = 1; i < d; ++i) EXPECT_LE(e.values(i - 1), e.values(i));
  }
}

TEST(PsdSqrtTest, SquaresBack) {
  std::mt19937_64 rng(13);
  const Eigen::MatrixXd a = random_spd(6, rng);
  const Eigen::MatrixXd r = psd_sqrt(a);
  EXPECT_LT((r * r - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(psd_sqrt(-Eigen::MatrixXd::Identity(2, 2)), DataError);
}

TEST(FitGaussianTest, UnbiasedCovarianceAndShrinkage) {
  Eigen::MatrixXd x(4, 2);
  x << 1, 2, 3, 4, 5, 0, 7, 2;
  const GaussianFit f = fit_gaussian(x);
  EXPECT_NEAR(f.mean(0), 4.0, 1e-12);
  EXPECT_NEAR(f.mean(1), 2.0, 1e-12);
  EXPECT_NEAR(f.cov(0, 0), 20.0 / 3.0, 1e-12);
  EXPECT_NEAR(f.cov(1, 1), 8.0 / 3.0, 1e-12);
  EXPECT_NEAR(f.cov(0, 1), -4.0 / 3.0, 1e-12);
  // Two rows in three dimensions: the diagonal gets the shrinkage term.
  Eigen::MatrixXd y(2, 3);
  y << 1, 1, 1, 1, 1, 1;
  const GaussianFit g = fit_gaussian(y);
  EXPECT_NEAR(g.cov(2, 2), kCovarianceShrinkage, 1e-15);
}

MelSpectrogram random_mel(int frames, std::mt19937_64& rng) {
  std::normal_distribution<float> g(-4.0f, 1.0f);
  MelSpectrogram m;
  m.frames.resize(frames, 80);
  for (Eigen::Index i = 0; i < m.frames.size(); ++i) m.frames.data()[i] = g(rng);
  return m;
}

FeatureExtractor first_bins(int dims, double offset = 0.0) {
  return [dims, offset](const MelSpectrogram& m) {
    return Eigen::MatrixXd(m.frames.leftCols(dims).cast<double>().array() + offset);
  };
}

TEST(CfsdTest, SameSetIsZero) {
  std::mt19937_64 rng(14);
  SpeakerMels set;
  for (const char* spk : {"a", "b"})
    for (int i = 0; i < 3; ++i) set[spk].push_back(random_mel(20, rng));
  EXPECT_NEAR(cfsd(set, set, first_bins(6)), 0.0, 1e-8);
  EXPECT_NEAR(cfsd(set, set, first_bins(6), true), 0.0, 1e-8);
}

TEST(CfsdTest, MeanShiftAddsCSquaredTimesDim) {
  std::mt19937_64 rng(15);
  SpeakerMels set;
  for (int i = 0; i < 4; ++i) set["a"].push_back(random_mel(30, rng));
  const double c = 0.3;
  const int dims = 5;
  // The shifted side goes through an extractor that adds c to every feature.
  const auto base = first_bins(dims);
  const auto shifted = first_bins(dims, c);
  auto pooled = [&](const FeatureExtractor& f) {
    std::vector<Eigen::MatrixXd> rows;
    Eigen::Index n = 0;
    for (const auto& m : set["a"]) {
      rows.push_back(f(m));
      n += rows.back().rows();
    }
    Eigen::MatrixXd all(n, dims);
    Eigen::Index at = 0;
    for (const auto& r : rows) {
      all.middleRows(at, r.rows()) = r;
      at += r.rows();
    }
    return fit_gaussian(all);
  };
  EXPECT_NEAR(frechet_distance(pooled(base), pooled(shifted)), c * c * dims, 1e-9);
}

TEST(CfsdTest, AveragesOverSharedSpeakers) {
  std::mt19937_64 rng(16);
  SpeakerMels ref, synth;
  for (int i = 0; i < 3; ++i) {
    ref["a"].push_back(random_mel(20, rng));
    ref["b"].push_back(random_mel(20, rng));
    synth["a"].push_back(random_mel(20, rng));
  }
  synth["c"].push_back(random_mel(20, rng));
  const SpeakerMels ref_a = {{"a", ref["a"]}}, synth_a = {{"a", synth["a"]}};
  EXPECT_NEAR(cfsd(ref, synth, first_bins(4)), cfsd(ref_a, synth_a, first_bins(4)), 1e-12);
  EXPECT_EQ(cfsd(ref, synth, first_bins(4), false, 1), cfsd(ref, synth, first_bins(4), false, 3));
  EXPECT_THROW(cfsd({}, synth, first_bins(4)), DataError);
}

}  // namespace
}  // namespace vf
