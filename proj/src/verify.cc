#include "vf/verify.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "vf/embedder.h"
#include "vf/eval.h"
#include "vf/pitch.h"
#include "vf/voice_filter.h"

namespace vf {

namespace {

struct Evaluation {
  double loss = 0.0;
  std::uint64_t signature = 0;
};

// Walks every element of `params`, comparing `analytic` with the central
// difference of `evaluate`.
GradCheckReport finite_difference_check(ParameterSet<double>& params, const ParameterSet<double>& analytic,
                                        std::uint64_t base_signature, const std::function<Evaluation()>& evaluate,
                                        const GradCheckOptions& opt) {
  GradCheckReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + opt.eps;
      const auto plus = evaluate();
      p.data()[k] = saved - opt.eps;
      const auto minus = evaluate();
      p.data()[k] = saved;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++rep.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * opt.eps);
      const double a = analytic[i].data()[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opt.floor});
      ++rep.checked;
      if (rel > opt.tolerance) ++rep.failed;
      if (rel > rep.max_rel_error || rep.worst.empty()) {
        rep.max_rel_error = rel;
        rep.worst = fmt::format("{}[{}] analytic {:.6g} numeric {:.6g}", params.name(i), k, a, numeric);
      }
    }
  }
  const double total = static_cast<double>(rep.checked + rep.skipped);
  rep.passed = rep.checked > 0 && rep.failed == 0 && static_cast<double>(rep.skipped) <= opt.max_skip_fraction * total;
  return rep;
}

Mat<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Mat<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

}  // namespace

GradCheckReport check_voice_filter_gradients(std::uint64_t seed, const GradCheckOptions& opt) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  VoiceFilterConfig cfg;
  cfg.mel_bins = 6;
  cfg.channels = 4;
  cfg.embed_dim = 3;
  cfg.lstm_hidden = 3;
  cfg.dense_units = 5;
  cfg.conv_layers = 3;
  cfg.kernel_size = 3;
  cfg.condition_after = 1 + static_cast<int>(seed % 2);
  VoiceFilterNet<double> net(cfg);
  net.initialize(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  // Move biases and normalization parameters away from their neutral
  // initial values so every term of the gradient is exercised.
  for (std::size_t i = 0; i < net.params().size(); ++i)
    for (Eigen::Index k = 0; k < net.params()[i].size(); ++k) net.params()[i].data()[k] += u(rng);
  const NormMode mode = seed % 2 == 0 ? NormMode::kBatch : NormMode::kRunning;
  std::uniform_real_distribution<double> var(0.5, 2.0);
  for (int l = 0; l < cfg.conv_layers; ++l) {
    net.buffers()[2 * l] = random_matrix(1, cfg.channels, rng, 0.5);
    for (Eigen::Index k = 0; k < cfg.channels; ++k) net.buffers()[2 * l + 1](0, k) = var(rng);
  }

  std::vector<VfInput<double>> batch;
  std::vector<Mat<double>> targets;
  std::uniform_int_distribution<int> frames(4, 8);
  std::bernoulli_distribution voiced(0.7);
  for (int b = 0; b < 2; ++b) {
    const int T = frames(rng);
    VfInput<double> in;
    in.mel = random_matrix(T, cfg.mel_bins, rng);
    in.speaker = random_matrix(1, cfg.embed_dim, rng);
    in.speaker /= in.speaker.norm();
    for (int t = 0; t < T; ++t) {
      const bool v = voiced(rng);
      in.logf0.push_back(5.0 + u(rng));
      in.voicing.push_back(v ? 1.0 : 0.0);
    }
    batch.push_back(std::move(in));
    targets.push_back(random_matrix(T, cfg.mel_bins, rng));
  }

  const auto base = net.loss_and_gradients(batch, targets, mode);
  return finite_difference_check(
      net.params(), base.grads, base.kink_signature,
      [&] {
        const auto r = net.loss_and_gradients(batch, targets, mode);
        return Evaluation{r.loss, r.kink_signature};
      },
      opt);
}

GradCheckReport check_embedder_gradients(std::uint64_t seed, const GradCheckOptions& opt) {
  std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + 5);
  EmbedderConfig cfg{.mel_bins = 5, .channels = 4, .kernel_size = 3, .embed_dim = 3};
  SpeakerEmbedderNet<double> net(cfg);
  net.initialize(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (std::size_t i = 0; i < net.params().size(); ++i)
    for (Eigen::Index k = 0; k < net.params()[i].size(); ++k) net.params()[i].data()[k] += u(rng);
  net.params()[net.w_index()](0, 0) = 2.0 + 3.0 * (u(rng) + 0.2);
  net.buffers()[0] = random_matrix(1, cfg.mel_bins, rng, 0.3);
  for (Eigen::Index k = 0; k < cfg.mel_bins; ++k) net.buffers()[1](0, k) = 0.8 + (u(rng) + 0.2);

  const int speakers = 3, utterances = 2;
  std::uniform_int_distribution<int> frames(6, 10);
  std::vector<Mat<double>> mels;
  for (int s = 0; s < speakers; ++s) {
    const Mat<double> offset = random_matrix(1, cfg.mel_bins, rng);
    for (int m = 0; m < utterances; ++m) {
      Mat<double> x = random_matrix(frames(rng), cfg.mel_bins, rng, 0.5);
      x.rowwise() += offset.row(0);
      mels.push_back(std::move(x));
    }
  }
  std::vector<const Mat<double>*> batch;
  for (const auto& m : mels) batch.push_back(&m);

  ParameterSet<double> grads;
  net.loss_and_gradients(batch, speakers, utterances, &grads);
  const auto signature = net.kink_signature(batch);
  return finite_difference_check(
      net.params(), grads, signature,
      [&] {
        return Evaluation{net.loss_and_gradients(batch, speakers, utterances, nullptr), net.kink_signature(batch)};
      },
      opt);
}

std::vector<bool> holm_by_closed_testing(const std::vector<double>& pvalues, double alpha) {
  const std::size_t m = pvalues.size();
  if (m > 20) throw UsageError("closed testing enumeration is limited to 20 hypotheses");
  std::vector<bool> reject(m, true);
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    double min_p = 1.0;
    int size = 0;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1u << i)) {
        min_p = std::min(min_p, pvalues[i]);
        ++size;
      }
    if (min_p <= alpha / size) continue;
    for (std::size_t i = 0; i < m; ++i)
      if (mask & (1u << i)) reject[i] = false;
  }
  return reject;
}

std::vector<SelfCheck> run_self_checks(std::uint64_t seed, int instances) {
  std::vector<SelfCheck> out;
  auto grad_check = [&](const std::string& name, auto&& fn) {
    SelfCheck c{name, true, {}};
    std::size_t checked = 0, skipped = 0;
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      const auto rep = fn(seed + static_cast<std::uint64_t>(i));
      checked += rep.checked;
      skipped += rep.skipped;
      worst = std::max(worst, rep.max_rel_error);
      if (!rep.passed) {
        c.passed = false;
        c.detail = fmt::format("instance {}: {} failed, {} skipped, worst {}", i, rep.failed, rep.skipped, rep.worst);
      }
    }
    if (c.passed)
      c.detail = fmt::format("{} elements checked, {} skipped at kinks, max rel error {:.2e}", checked, skipped, worst);
    out.push_back(std::move(c));
  };
  grad_check("voice filter gradients", [](std::uint64_t s) { return check_voice_filter_gradients(s); });
  grad_check("embedder and GE2E gradients", [](std::uint64_t s) { return check_embedder_gradients(s); });

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  {
    SelfCheck c{"Fréchet distance 1-D closed form", true, {}};
    double worst = 0.0;
    for (int i = 0; i < 200 * instances; ++i) {
      const double m1 = 3.0 * normal(rng), m2 = 3.0 * normal(rng);
      const double s1 = 0.1 + 2.0 * unit(rng), s2 = 0.1 + 2.0 * unit(rng);
      GaussianFit a{Eigen::VectorXd::Constant(1, m1), Eigen::MatrixXd::Constant(1, 1, s1 * s1)};
      GaussianFit b{Eigen::VectorXd::Constant(1, m2), Eigen::MatrixXd::Constant(1, 1, s2 * s2)};
      const double expect = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
      worst = std::max(worst, std::abs(frechet_distance(a, b) - expect));
    }
    c.passed = worst <= 1e-10;
    c.detail = fmt::format("max abs error {:.2e}", worst);
    out.push_back(std::move(c));
  }
  {
    SelfCheck c{"Fréchet distance identity and symmetry", true, {}};
    double self = 0.0, asym = 0.0;
    for (int i = 0; i < 20 * instances; ++i) {
      const int d = 2 + static_cast<int>(unit(rng) * 7);
      auto fit = [&] {
        Eigen::MatrixXd x(3 * d, d);
        for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = normal(rng);
        return fit_gaussian(x);
      };
      const auto a = fit(), b = fit();
      self = std::max(self, frechet_distance(a, a));
      asym = std::max(asym, std::abs(frechet_distance(a, b) - frechet_distance(b, a)));
    }
    c.passed = self <= 1e-8 && asym <= 1e-8;
    c.detail = fmt::format("max FD(a,a) {:.2e}, max asymmetry {:.2e}", self, asym);
    out.push_back(std::move(c));
  }
  {
    SelfCheck c{"Holm-Bonferroni against closed testing", true, {}};
    std::size_t cases = 0;
    for (int rep = 0; rep < instances && c.passed; ++rep) {
      for (std::size_t m = 1; m <= 5 && c.passed; ++m) {
        std::vector<double> p(m);
        for (auto& v : p) v = unit(rng) < 0.2 ? 0.01 * std::floor(unit(rng) * 5.0) : 0.06 * unit(rng);
        std::sort(p.begin(), p.end());
        do {
          ++cases;
          if (holm_bonferroni(p, 0.05) != holm_by_closed_testing(p, 0.05)) {
            c.passed = false;
            c.detail = fmt::format("mismatch for m = {}", m);
            break;
          }
        } while (std::next_permutation(p.begin(), p.end()));
      }
    }
    if (c.passed) c.detail = fmt::format("{} orderings agree", cases);
    out.push_back(std::move(c));
  }
  {
    SelfCheck c{"paired t-test conventions", true, {}};
    const std::vector<double> x{10, 20, 35, 41};
    const auto same = paired_ttest(x, x);
    const auto shifted = paired_ttest({2, 3, 4, 5}, {1, 2, 3, 4});
    c.passed = same.p == 1.0 && shifted.p == 0.0 && shifted.degenerate;
    c.detail = fmt::format("x = y gives p = {}, constant shift gives p = {}", same.p, shifted.p);
    out.push_back(std::move(c));
  }
  {
    SelfCheck c{"f0 renormalization moments", true, {}};
    double worst = 0.0;
    for (int i = 0; i < 10 * instances; ++i) {
      LogF0 src;
      for (int t = 0; t < 50; ++t) {
        const bool v = unit(rng) < 0.7 || t == 0 || t == 1;
        src.voiced.push_back(v);
        src.values.push_back(v ? 4.5 + 0.3 * normal(rng) : 0.0);
      }
      const F0Stats tgt{5.0 + normal(rng) * 0.2, 0.05 + 0.3 * unit(rng)};
      const auto out_f0 = renormalize_f0(src, log_f0_stats({src}), tgt);
      const auto got = log_f0_stats({out_f0});
      worst = std::max({worst, std::abs(got.mean - tgt.mean), std::abs(got.stddev - tgt.stddev)});
    }
    c.passed = worst <= 1e-6;
    c.detail = fmt::format("max moment error {:.2e}", worst);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace vf
