// Invariant self-checks: analytic gradients against central differences,
// Fréchet closed forms, Holm-Bonferroni against closed testing, and the
// t-test and f0 renormalization conventions.
#ifndef VF_VERIFY_H_
#define VF_VERIFY_H_

#include <cstdint>
#include <string>
#include <vector>

namespace vf {

struct GradCheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-3;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-5;
  // Probes whose +/- eps evaluation flips a ReLU or an L1 residual sign are
  // skipped; the check fails if more than this fraction is skipped.
  double max_skip_fraction = 0.05;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  double max_rel_error = 0.0;
  std::string worst;  // parameter element with the largest error
  bool passed = false;
};

// Every parameter element of a small double-precision Voice Filter. Even
// seeds use batch statistics, odd seeds the running statistics.
GradCheckReport check_voice_filter_gradients(std::uint64_t seed, const GradCheckOptions& opt = {});
// Every parameter element of a small embedder under the GE2E loss, including
// the GE2E scale and bias.
GradCheckReport check_embedder_gradients(std::uint64_t seed, const GradCheckOptions& opt = {});

// Holm-Bonferroni as a closed testing procedure with Bonferroni local tests:
// H_i is rejected iff every intersection hypothesis containing i has
// min p <= alpha / |S|. Exponential in the number of hypotheses.
std::vector<bool> holm_by_closed_testing(const std::vector<double>& pvalues, double alpha);

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<SelfCheck> run_self_checks(std::uint64_t seed, int instances);

}  // namespace vf

#endif  // VF_VERIFY_H_
