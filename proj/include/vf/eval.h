// Objective metrics (CSED, Fréchet distance, cFSD) and MUSHRA statistics.
#ifndef VF_EVAL_H_
#define VF_EVAL_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "vf/dsp.h"
#include "vf/embedder.h"

namespace vf {

// Mean over `synth` of 1 - cos(e, c) where c is the centroid of `ref`.
// Result lies in [0, 2]. Throws DataError on an empty set.
double csed(const std::vector<Eigen::VectorXf>& synth, const std::vector<Eigen::VectorXf>& ref);

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline constexpr double kCovarianceShrinkage = 1e-3;

// Mean and unbiased covariance of the rows of `samples` (N x D). With fewer
// than D + 1 rows the covariance gets `shrinkage` added to its diagonal.
GaussianFit fit_gaussian(const Eigen::MatrixXd& samples, double shrinkage = kCovarianceShrinkage);

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns
};

// Cyclic Jacobi rotations. Throws NumericalError when the off-diagonal mass
// has not vanished after `max_sweeps`.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, int max_sweeps = 64);

// Square root of a symmetric PSD matrix; eigenvalues down to -1e-8 (relative
// to the largest) are clipped to 0, anything more negative is a DataError.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), clamped at 0. The
// cross term is evaluated as Tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)) in both
// argument orders and averaged, so the result is exactly symmetric.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

// Maps a mel to per-frame feature rows.
using FeatureExtractor = std::function<Eigen::MatrixXd(const MelSpectrogram&)>;

// Second-conv activations of the speaker embedder.
FeatureExtractor embedder_frame_features(const EmbedderModel& model);

// Speaker id -> mels.
using SpeakerMels = std::map<std::string, std::vector<MelSpectrogram>>;

// Fréchet distance between Gaussian fits of pooled frame features. By default
// computed per speaker (on speakers present on both sides) and averaged; with
// `pooled` every frame of each side goes into one fit.
double cfsd(const SpeakerMels& ref, const SpeakerMels& synth, const FeatureExtractor& extractor, bool pooled = false,
            int threads = 1);

// ---------------------------------------------------------------- MUSHRA

struct MushraRecord {
  std::string listener_id;
  std::string system_id;
  std::string utterance_id;
  double score = 0.0;
};

// Header listener_id,system_id,utterance_id,score. Rejects scores outside
// [0, 100] and duplicate (listener, system, utterance) triples.
std::vector<MushraRecord> parse_mushra_csv(const std::string& text);

struct MushraSystemSummary {
  std::string system_id;
  std::size_t ratings = 0;
  double mean = 0.0;
  // 1.96 x standard error (sample standard deviation); 0 for one rating.
  double half_width = 0.0;
};

// Per-system summaries sorted by system id.
std::vector<MushraSystemSummary> mushra_summary(const std::vector<MushraRecord>& records);

// "67.96 ± 0.86"
std::string format_mean_ci(double mean, double half_width);

// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);
// P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct TTestResult {
  std::size_t pairs = 0;
  double mean_difference = 0.0;
  double t = 0.0;
  double p = 1.0;
  // Zero variance of the differences: p is 1 when they are all zero and 0
  // otherwise.
  bool degenerate = false;
};

// Paired two-sided t-test on x[i] - y[i]. Needs at least two pairs.
TTestResult paired_ttest(const std::vector<double>& x, const std::vector<double>& y);

// Step-down Holm-Bonferroni; flags are true for rejected hypotheses and are
// returned in input order.
std::vector<bool> holm_bonferroni(const std::vector<double>& pvalues, double alpha);

struct MushraComparison {
  std::string system_a;
  std::string system_b;
  TTestResult test;
  bool significant = false;
};

struct MushraReport {
  double alpha = 0.05;
  std::vector<MushraSystemSummary> systems;
  // Every system pair with at least two shared (listener, utterance) ratings.
  std::vector<MushraComparison> comparisons;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

MushraReport mushra_report(const std::vector<MushraRecord>& records, double alpha = 0.05);

}  // namespace vf

#endif  // VF_EVAL_H_
