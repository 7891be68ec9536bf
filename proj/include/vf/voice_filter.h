// The Voice Filter conversion network.
//
// mel (T x 80)
//   -> 6 x [conv1d k=5 same-padding -> batch-norm -> ReLU]
//        (speaker embedding, log-f0 and voicing mask are concatenated to the
//         output of the third block)
//   -> uni-directional LSTM -> dense + ReLU -> linear projection to 80 bins.
//
// The class is templated on the scalar type: float for training and
// inference, double for gradient verification.
#ifndef VF_VOICE_FILTER_H_
#define VF_VOICE_FILTER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "vf/dsp.h"
#include "vf/params.h"
#include "vf/pitch.h"

namespace vf {

struct VoiceFilterConfig {
  int mel_bins = 80;
  int channels = 512;
  int embed_dim = 256;
  int lstm_hidden = 512;
  int dense_units = 1024;
  int conv_layers = 6;
  int kernel_size = 5;
  // Conditioning is appended to the output of this many conv blocks.
  int condition_after = 3;
  double bn_momentum = 0.99;
  double bn_eps = 1e-5;

  void validate() const;
  nlohmann::json to_json() const;
  static VoiceFilterConfig from_json(const nlohmann::json& j);
  bool operator==(const VoiceFilterConfig&) const = default;
};

// Batch-norm statistics source: per-batch statistics (background training)
// or the stored running statistics (inference and fine-tuning).
enum class NormMode { kBatch, kRunning };

template <class S>
struct VfInput {
  Mat<S> mel;             // T x mel_bins
  RowVec<S> speaker;      // 1 x embed_dim, broadcast over frames
  std::vector<S> logf0;   // T
  std::vector<S> voicing;  // T, 0 or 1
};

template <class S>
struct VfLossResult {
  double loss = 0.0;
  ParameterSet<S> grads;
  std::vector<Mat<S>> outputs;
  // Per conv block batch statistics (empty in kRunning mode).
  std::vector<RowVec<S>> batch_mean, batch_var;
  // Hash of every ReLU on/off state and L1 residual sign; used to detect
  // finite-difference probes that straddle a kink.
  std::uint64_t kink_signature = 0;
};

template <class S>
class VoiceFilterNet {
 public:
  explicit VoiceFilterNet(VoiceFilterConfig cfg);

  // Deterministic random initialization.
  void initialize(std::uint64_t seed);

  const VoiceFilterConfig& config() const { return cfg_; }
  ParameterSet<S>& params() { return params_; }
  const ParameterSet<S>& params() const { return params_; }
  // Running batch-norm statistics: bn<l>.running_mean / bn<l>.running_var.
  ParameterSet<S>& buffers() { return buffers_; }
  const ParameterSet<S>& buffers() const { return buffers_; }

  // Inference with running statistics.
  Mat<S> forward(const VfInput<S>& in) const;
  std::vector<Mat<S>> forward_batch(std::span<const VfInput<S>> batch, NormMode mode) const;

  // Mean absolute error over every frame and bin of the batch, and its
  // gradient with respect to every parameter. Does not modify the model.
  VfLossResult<S> loss_and_gradients(std::span<const VfInput<S>> batch, std::span<const Mat<S>> targets,
                                     NormMode mode) const;

  // running = momentum * running + (1 - momentum) * batch.
  void update_running_stats(const std::vector<RowVec<S>>& mean, const std::vector<RowVec<S>>& var);

  template <class T>
  VoiceFilterNet<T> cast() const {
    VoiceFilterNet<T> out(cfg_);
    out.params() = params_.template cast<T>();
    out.buffers() = buffers_.template cast<T>();
    return out;
  }

 private:
  struct Cache;
  double run(std::span<const VfInput<S>> batch, NormMode mode, Cache& cache) const;
  void check_input(const VfInput<S>& in) const;

  VoiceFilterConfig cfg_;
  ParameterSet<S> params_;
  ParameterSet<S> buffers_;
};

using VoiceFilterModel = VoiceFilterNet<float>;

extern template class VoiceFilterNet<float>;
extern template class VoiceFilterNet<double>;

// Unit-norm speaker vector plus the per-frame log-f0 feature.
struct ConditioningInput {
  Eigen::VectorXf speaker;
  LogF0 f0;
};

template <class S>
VfInput<S> make_vf_input(const MelSpectrogram& mel, const ConditioningInput& cond);

// Eval-mode conversion: output has the input's frame count and 80 bins.
MelSpectrogram vf_forward(const VoiceFilterModel& model, const MelSpectrogram& mel, const ConditioningInput& cond);

// Mean absolute difference over all entries.
double l1_loss(const MelSpectrogram& pred, const MelSpectrogram& target);
template <class S>
double l1_loss(const Mat<S>& pred, const Mat<S>& target);

}  // namespace vf

#endif  // VF_VOICE_FILTER_H_
