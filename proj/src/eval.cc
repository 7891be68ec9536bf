#include "vf/eval.h"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {

double csed(const std::vector<Eigen::VectorXf>& synth, const std::vector<Eigen::VectorXf>& ref) {
  if (synth.empty() || ref.empty()) throw DataError("csed: empty embedding set");
  const Eigen::VectorXd c = centroid(ref).cast<double>();
  double total = 0.0;
  for (const auto& e : synth) {
    if (e.size() != c.size()) throw DataError("csed: embedding dimensions differ");
    const Eigen::VectorXd v = e.cast<double>();
    const double n = v.norm();
    if (!(n > 0.0)) throw DataError("csed: zero embedding");
    total += 1.0 - std::clamp(v.dot(c) / n, -1.0, 1.0);
  }
  return total / static_cast<double>(synth.size());
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& samples, double shrinkage) {
  const auto n = samples.rows();
  const auto d = samples.cols();
  if (n == 0 || d == 0) throw DataError("fit_gaussian: no samples");
  if (!samples.allFinite()) throw NumericalError("fit_gaussian: non-finite features");
  GaussianFit g;
  g.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mean.transpose();
  g.cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  if (n < d + 1) g.cov.diagonal().array() += shrinkage;
  return g;
}

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, int max_sweeps) {
  const auto n = input.rows();
  if (n != input.cols()) throw DataError("jacobi_eigen: matrix is not square");
  if (!input.allFinite()) throw NumericalError("jacobi_eigen: non-finite matrix");
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

  auto off_diagonal = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  bool converged = off_diagonal() <= 1e-15 * scale;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        // Rotation angle that annihilates a(p, q); the smaller root keeps
        // the update stable.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal() <= 1e-15 * scale;
  }
  if (!converged) throw NumericalError(fmt::format("jacobi_eigen: no convergence after {} sweeps", max_sweeps));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
  SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values(i) = a(order[i], order[i]);
    out.vectors.col(i) = v.col(order[i]);
  }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  const auto e = jacobi_eigen(m);
  const double top = std::max(1.0, e.values.cwiseAbs().maxCoeff());
  Eigen::VectorXd root(e.values.size());
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    const double lambda = e.values(i);
    if (lambda < -1e-8 * top) throw DataError(fmt::format("matrix is not positive semi-definite (eigenvalue {})", lambda));
    root(i) = std::sqrt(std::max(lambda, 0.0));
  }
  return e.vectors * root.asDiagonal() * e.vectors.transpose();
}

namespace {

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd ra = psd_sqrt(a);
  const Eigen::MatrixXd inner = ra * b * ra;
  const auto e = jacobi_eigen(0.5 * (inner + inner.transpose()));
  double tr = 0.0;
  for (Eigen::Index i = 0; i < e.values.size(); ++i) tr += std::sqrt(std::max(e.values(i), 0.0));
  return tr;
}

}  // namespace

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  const auto d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || a.cov.cols() != d || b.cov.rows() != d || b.cov.cols() != d)
    throw DataError("frechet_distance: dimension mismatch");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  const double cross = 0.5 * (trace_sqrt_product(a.cov, b.cov) + trace_sqrt_product(b.cov, a.cov));
  const double dist = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(dist, 0.0);
}

FeatureExtractor embedder_frame_features(const EmbedderModel& model) {
  return [&model](const MelSpectrogram& m) -> Eigen::MatrixXd { return model.frame_activations(m.frames).cast<double>(); };
}

namespace {

Eigen::MatrixXd stack_features(const std::vector<const MelSpectrogram*>& mels, const FeatureExtractor& extractor) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index rows = 0;
  for (const auto* m : mels) {
    parts.push_back(extractor(*m));
    if (!parts.empty() && parts.back().cols() != parts.front().cols())
      throw DataError("cfsd: feature extractor returned inconsistent widths");
    rows += parts.back().rows();
  }
  if (parts.empty() || rows == 0) throw DataError("cfsd: no feature frames");
  Eigen::MatrixXd out(rows, parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

std::vector<const MelSpectrogram*> flatten(const SpeakerMels& s) {
  std::vector<const MelSpectrogram*> out;
  for (const auto& [id, mels] : s)
    for (const auto& m : mels) out.push_back(&m);
  return out;
}

}  // namespace

double cfsd(const SpeakerMels& ref, const SpeakerMels& synth, const FeatureExtractor& extractor, bool pooled,
            int threads) {
  if (flatten(ref).empty() || flatten(synth).empty()) throw DataError("cfsd: empty set");
  if (pooled)
    return frechet_distance(fit_gaussian(stack_features(flatten(ref), extractor)),
                            fit_gaussian(stack_features(flatten(synth), extractor)));

  std::vector<std::string> speakers;
  for (const auto& [id, mels] : ref)
    if (!mels.empty() && synth.count(id) && !synth.at(id).empty()) speakers.push_back(id);
  if (speakers.empty()) throw DataError("cfsd: no speaker present on both sides");
  std::vector<double> per(speakers.size());
  parallel_for(speakers.size(), threads, [&](std::size_t i) {
    std::vector<const MelSpectrogram*> r, s;
    for (const auto& m : ref.at(speakers[i])) r.push_back(&m);
    for (const auto& m : synth.at(speakers[i])) s.push_back(&m);
    per[i] = frechet_distance(fit_gaussian(stack_features(r, extractor)), fit_gaussian(stack_features(s, extractor)));
  });
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(per.size());
}

}  // namespace vf
