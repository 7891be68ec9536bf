// Utterance-level speaker embeddings trained with the generalized
// end-to-end (GE2E) softmax loss.
//
// mel -> input normalization -> conv(k=3, stride 2) + ReLU
//     -> conv(k=3, stride 2) + ReLU -> mean over time -> affine -> L2 normalize
#ifndef VF_EMBEDDER_H_
#define VF_EMBEDDER_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "vf/dsp.h"
#include "vf/optim.h"
#include "vf/params.h"

namespace vf {

struct EmbedderConfig {
  int mel_bins = 80;
  int channels = 64;
  int kernel_size = 3;
  int embed_dim = 256;

  void validate() const;
  nlohmann::json to_json() const;
  static EmbedderConfig from_json(const nlohmann::json& j);
  bool operator==(const EmbedderConfig&) const = default;
};

template <class S>
struct Ge2eResult {
  double loss = 0.0;      // mean over the N*M utterance terms
  Mat<S> d_embeddings;    // same shape as the input embeddings
  S d_w = 0;
  S d_b = 0;
};

// GE2E softmax loss. `embeddings` holds N*M rows ordered speaker-major
// (row j*M + i is utterance i of speaker j). For the own-speaker column the
// centroid excludes the utterance itself.
template <class S>
Ge2eResult<S> ge2e_loss(const Mat<S>& embeddings, int speakers, int utterances, S w, S b);

template <class S>
class SpeakerEmbedderNet {
 public:
  explicit SpeakerEmbedderNet(EmbedderConfig cfg);

  void initialize(std::uint64_t seed);
  // Per-bin input normalization fitted on training mels.
  void fit_input_normalization(const std::vector<const Eigen::MatrixXf*>& mels);

  const EmbedderConfig& config() const { return cfg_; }
  ParameterSet<S>& params() { return params_; }
  const ParameterSet<S>& params() const { return params_; }
  ParameterSet<S>& buffers() { return buffers_; }
  const ParameterSet<S>& buffers() const { return buffers_; }

  S ge2e_w() const { return params_[w_index()](0, 0); }
  S ge2e_b() const { return params_[b_index()](0, 0); }

  // Unit-norm embedding; needs at least 4 frames.
  RowVec<S> embed(const Mat<S>& mel) const;
  // Frame activations of the second conv block (ceil(ceil(T/2)/2) x channels).
  Mat<S> frame_activations(const Mat<S>& mel) const;

  // GE2E loss over a batch of N speakers x M utterances (speaker-major) and its
  // gradient for every parameter, including the GE2E scale and bias.
  double loss_and_gradients(const std::vector<const Mat<S>*>& mels, int speakers, int utterances,
                            ParameterSet<S>* grads) const;
  // Hash of every ReLU on/off state over the batch.
  std::uint64_t kink_signature(const std::vector<const Mat<S>*>& mels) const;

  template <class T>
  SpeakerEmbedderNet<T> cast() const {
    SpeakerEmbedderNet<T> out(cfg_);
    out.params() = params_.template cast<T>();
    out.buffers() = buffers_.template cast<T>();
    return out;
  }

  std::size_t w_index() const { return 6; }
  std::size_t b_index() const { return 7; }

 private:
  struct Trace;
  RowVec<S> run(const Mat<S>& mel, Trace* trace) const;
  void backward(const Trace& trace, const RowVec<S>& d_embedding, ParameterSet<S>& grads) const;

  EmbedderConfig cfg_;
  ParameterSet<S> params_;
  ParameterSet<S> buffers_;
};

using EmbedderModel = SpeakerEmbedderNet<float>;

extern template class SpeakerEmbedderNet<float>;
extern template class SpeakerEmbedderNet<double>;

Eigen::VectorXf embed(const MelSpectrogram& m, const EmbedderModel& model);

// L2-normalized arithmetic mean. Throws DataError on an empty set or a
// (near) zero-norm mean.
Eigen::VectorXf centroid(const std::vector<Eigen::VectorXf>& embeddings);

// One row per embedding: "id,e0,...,e{D-1}".
std::string embeddings_to_csv(const std::vector<std::string>& ids, const std::vector<Eigen::VectorXf>& embeddings);

struct EmbedderTrainConfig {
  int steps = 400;
  int utterances_per_speaker = 4;
  AdamConfig adam{.learning_rate = 3e-3};
  std::uint64_t seed = 1;
};

struct EmbedderTrainResult {
  EmbedderModel model;
  std::vector<double> loss_history;
};

// `utterances` maps speaker id -> natural mels. Needs at least two speakers
// with at least two utterances each.
EmbedderTrainResult train_embedder(const std::map<std::string, std::vector<Eigen::MatrixXf>>& utterances,
                                   const EmbedderConfig& cfg, const EmbedderTrainConfig& train);

// GE2E loss of a fixed batch (all speakers, first M utterances each).
double ge2e_batch_loss(const EmbedderModel& model,
                       const std::map<std::string, std::vector<Eigen::MatrixXf>>& utterances, int per_speaker);

}  // namespace vf

#endif  // VF_EMBEDDER_H_
