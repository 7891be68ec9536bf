// ADAM with bias correction and optional global-norm clipping.
#ifndef VF_OPTIM_H_
#define VF_OPTIM_H_

#include <cstdint>

#include "vf/params.h"

namespace vf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Gradients are rescaled when their global L2 norm exceeds this; <= 0 disables.
  double grad_clip = 5.0;

  void validate() const;
};

struct AdamState {
  std::int64_t step = 0;
  ParameterSet<float> m;
  ParameterSet<float> v;

  static AdamState for_params(const ParameterSet<float>& p);
};

// Global L2 norm over every gradient tensor.
double global_norm(const ParameterSet<float>& grads);

// One update in place. Throws NumericalError on non-finite gradients.
// Returns the gradient norm before clipping.
double adam_step(ParameterSet<float>& params, const ParameterSet<float>& grads, AdamState& state,
                 const AdamConfig& cfg);

}  // namespace vf

#endif  // VF_OPTIM_H_
