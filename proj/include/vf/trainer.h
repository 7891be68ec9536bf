// Background (one-to-many) training and few-shot fine-tuning.
#ifndef VF_TRAINER_H_
#define VF_TRAINER_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "vf/corpus.h"
#include "vf/embedder.h"
#include "vf/optim.h"
#include "vf/voice_filter.h"

namespace vf {

struct TrainConfig {
  int steps = 20000;
  int finetune_steps = 1000;
  int batch_size = 8;
  AdamConfig adam;
  // 0 means reuse adam.learning_rate.
  double finetune_learning_rate = 0.0;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Called after every optimizer step with (step index, batch loss).
using StepCallback = std::function<void(int, double)>;

struct BackgroundResult {
  VoiceFilterModel model;
  AdamState optimizer;
  std::vector<double> loss_history;
};

// Mean of the first and last `window` losses.
double running_mean_head(const std::vector<double>& losses, std::size_t window = 100);
double running_mean_tail(const std::vector<double>& losses, std::size_t window = 100);

// Utterance-level speaker embedding of every pair's natural target mel.
std::vector<Eigen::VectorXf> utterance_embeddings(const std::vector<ParallelUtterancePair>& pairs,
                                                  const EmbedderModel& embedder, int threads = 1);

// One-to-many training over every speaker in the corpus. Each utterance is
// conditioned on its own target embedding and natural target log-f0.
// Batch-norm uses batch statistics. All pairs are validated before the
// first step.
BackgroundResult train_background(const std::vector<ParallelUtterancePair>& corpus, const EmbedderModel& embedder,
                                  const VoiceFilterConfig& model_cfg, const TrainConfig& cfg,
                                  const StepCallback& on_step = {});

struct FinetuneResult {
  VoiceFilterModel model;
  Eigen::VectorXf centroid;
  double pre_loss = 0.0;   // eval-mode L1 over the target set before adaptation
  double post_loss = 0.0;  // and after
  double total_seconds = 0.0;
  std::vector<double> loss_history;
};

// Adapts every parameter for cfg.finetune_steps on one speaker's data, always
// conditioning on the centroid of that speaker's utterance embeddings.
// Batch-norm keeps the background running statistics.
FinetuneResult finetune(const VoiceFilterModel& background, const std::vector<ParallelUtterancePair>& target,
                        const EmbedderModel& embedder, const TrainConfig& cfg, const StepCallback& on_step = {});

// Eval-mode L1 over every frame and bin of `pairs`, conditioned on `speaker`
// and each pair's natural target log-f0.
double evaluate_l1(const VoiceFilterModel& model, const std::vector<ParallelUtterancePair>& pairs,
                   const Eigen::VectorXf& speaker, int threads = 1);

}  // namespace vf

#endif  // VF_TRAINER_H_
