#include "vf/optim.h"

#include <cmath>

#include <fmt/core.h>

namespace vf {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw UsageError("ADAM betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw UsageError("ADAM epsilon must be positive");
}

AdamState AdamState::for_params(const ParameterSet<float>& p) { return {0, p.zeros_like(), p.zeros_like()}; }

double global_norm(const ParameterSet<float>& grads) {
  double sum = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (Eigen::Index j = 0; j < grads[i].size(); ++j) {
      const double g = grads[i](j);
      sum += g * g;
    }
  return std::sqrt(sum);
}

double adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v))
    throw DataError("adam: parameter, gradient and state shapes differ");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!grads[i].allFinite()) throw NumericalError(fmt::format("adam: non-finite gradient for '{}'", grads.name(i)));

  const double norm = global_norm(grads);
  const double clip = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double gj = g(j) * clip;
      const double mj = cfg.beta1 * m(j) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v(j) + (1.0 - cfg.beta2) * gj * gj;
      m(j) = static_cast<float>(mj);
      v(j) = static_cast<float>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      p(j) = static_cast<float>(p(j) - cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
  return norm;
}

}  // namespace vf
