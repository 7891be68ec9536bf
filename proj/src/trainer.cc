#include "vf/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {

void TrainConfig::validate() const {
  if (steps < 0 || finetune_steps < 0) throw UsageError("step counts must be non-negative");
  if (batch_size < 1) throw UsageError("batch_size must be positive");
  if (finetune_learning_rate < 0.0) throw UsageError("finetune_learning_rate must be non-negative");
  adam.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"finetune_steps", finetune_steps},
          {"batch_size", batch_size},
          {"learning_rate", adam.learning_rate},
          {"finetune_learning_rate", finetune_learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"epsilon", adam.epsilon},
          {"grad_clip", adam.grad_clip},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "steps") c.steps = v.get<int>();
    else if (key == "finetune_steps") c.finetune_steps = v.get<int>();
    else if (key == "batch_size") c.batch_size = v.get<int>();
    else if (key == "learning_rate") c.adam.learning_rate = v.get<double>();
    else if (key == "finetune_learning_rate") c.finetune_learning_rate = v.get<double>();
    else if (key == "beta1") c.adam.beta1 = v.get<double>();
    else if (key == "beta2") c.adam.beta2 = v.get<double>();
    else if (key == "epsilon") c.adam.epsilon = v.get<double>();
    else if (key == "grad_clip") c.adam.grad_clip = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "threads") c.threads = v.get<int>();
    else throw UsageError(fmt::format("unknown train config key '{}'", key));
  }
  c.validate();
  return c;
}

double running_mean_head(const std::vector<double>& losses, std::size_t window) {
  if (losses.empty()) return 0.0;
  const std::size_t n = std::min(window, losses.size());
  return std::accumulate(losses.begin(), losses.begin() + static_cast<long>(n), 0.0) / static_cast<double>(n);
}

double running_mean_tail(const std::vector<double>& losses, std::size_t window) {
  if (losses.empty()) return 0.0;
  const std::size_t n = std::min(window, losses.size());
  return std::accumulate(losses.end() - static_cast<long>(n), losses.end(), 0.0) / static_cast<double>(n);
}

std::vector<Eigen::VectorXf> utterance_embeddings(const std::vector<ParallelUtterancePair>& pairs,
                                                  const EmbedderModel& embedder, int threads) {
  std::vector<Eigen::VectorXf> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = embed(pairs[i].target_mel, embedder); });
  return out;
}

namespace {

VfInput<float> training_input(const ParallelUtterancePair& p, const Eigen::VectorXf& speaker) {
  return make_vf_input<float>(p.source_mel, ConditioningInput{speaker, p.target_logf0});
}

// Draws batches by walking seeded permutations of the corpus.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::uint64_t seed) : order_(count), rng_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t batch) {
    batch = std::min(batch, order_.size());
    std::vector<std::size_t> out;
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

}  // namespace

BackgroundResult train_background(const std::vector<ParallelUtterancePair>& corpus, const EmbedderModel& embedder,
                                  const VoiceFilterConfig& model_cfg, const TrainConfig& cfg,
                                  const StepCallback& on_step) {
  cfg.validate();
  model_cfg.validate();
  if (corpus.empty()) throw DataError("train_background: empty corpus");
  for (const auto& p : corpus) {
    validate_pair(p);
    if (p.source_mel.num_bins() != model_cfg.mel_bins)
      throw DataError(fmt::format("pair '{}' has {} mel bins, model expects {}", p.utterance_id,
                                  p.source_mel.num_bins(), model_cfg.mel_bins));
  }
  if (embedder.config().embed_dim != model_cfg.embed_dim)
    throw DataError("train_background: embedder dimension does not match the model's conditioning width");

  const auto speakers = utterance_embeddings(corpus, embedder, cfg.threads);
  std::vector<VfInput<float>> inputs;
  inputs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) inputs.push_back(training_input(corpus[i], speakers[i]));

  BackgroundResult res{VoiceFilterModel(model_cfg), {}, {}};
  auto& model = res.model;
  model.initialize(cfg.seed);
  // Output bias starts at the per-bin mean of the targets.
  {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(model_cfg.mel_bins);
    double frames = 0.0;
    for (const auto& p : corpus) {
      sum += p.target_mel.frames.cast<double>().colwise().sum();
      frames += p.num_frames();
    }
    model.params()[model.params().index_of("out.bias")] = (sum / frames).cast<float>();
  }
  res.optimizer = AdamState::for_params(model.params());

  BatchSampler sampler(corpus.size(), cfg.seed ^ 0xBA7C4ULL);
  std::vector<VfInput<float>> batch;
  std::vector<Eigen::MatrixXf> targets;
  for (int step = 0; step < cfg.steps; ++step) {
    batch.clear();
    targets.clear();
    for (auto i : sampler.next(static_cast<std::size_t>(cfg.batch_size))) {
      batch.push_back(inputs[i]);
      targets.push_back(corpus[i].target_mel.frames);
    }
    VfLossResult<float> r;
    try {
      r = model.loss_and_gradients(batch, targets, NormMode::kBatch);
      adam_step(model.params(), r.grads, res.optimizer, cfg.adam);
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("background training aborted at step {}: {}", step, e.what()));
    }
    model.update_running_stats(r.batch_mean, r.batch_var);
    res.loss_history.push_back(r.loss);
    if (on_step) on_step(step, r.loss);
  }
  return res;
}

double evaluate_l1(const VoiceFilterModel& model, const std::vector<ParallelUtterancePair>& pairs,
                   const Eigen::VectorXf& speaker, int threads) {
  if (pairs.empty()) throw DataError("evaluate_l1: no pairs");
  std::vector<double> sums(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto out = model.forward(training_input(pairs[i], speaker));
    sums[i] = l1_loss<float>(out, pairs[i].target_mel.frames) * static_cast<double>(out.size());
  });
  double total = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    total += sums[i];
    count += static_cast<double>(pairs[i].num_frames()) * pairs[i].target_mel.num_bins();
  }
  return total / count;
}

FinetuneResult finetune(const VoiceFilterModel& background, const std::vector<ParallelUtterancePair>& target,
                        const EmbedderModel& embedder, const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  if (target.empty()) throw DataError("finetune: empty target set");
  for (const auto& p : target) validate_pair(p);

  FinetuneResult res{background, {}, 0.0, 0.0, 0.0, {}};
  res.centroid = centroid(utterance_embeddings(target, embedder, cfg.threads));
  for (const auto& p : target)
    res.total_seconds += static_cast<double>(p.num_frames()) * p.target_mel.hop_length / p.target_mel.sample_rate;

  std::vector<VfInput<float>> inputs;
  for (const auto& p : target) inputs.push_back(training_input(p, res.centroid));
  res.pre_loss = evaluate_l1(background, target, res.centroid, cfg.threads);

  AdamConfig adam = cfg.adam;
  if (cfg.finetune_learning_rate > 0.0) adam.learning_rate = cfg.finetune_learning_rate;
  AdamState state = AdamState::for_params(res.model.params());
  BatchSampler sampler(target.size(), cfg.seed ^ 0xF17E7ULL);
  std::vector<VfInput<float>> batch;
  std::vector<Eigen::MatrixXf> targets;
  for (int step = 0; step < cfg.finetune_steps; ++step) {
    batch.clear();
    targets.clear();
    for (auto i : sampler.next(static_cast<std::size_t>(cfg.batch_size))) {
      batch.push_back(inputs[i]);
      targets.push_back(target[i].target_mel.frames);
    }
    try {
      const auto r = res.model.loss_and_gradients(batch, targets, NormMode::kRunning);
      adam_step(res.model.params(), r.grads, state, adam);
      res.loss_history.push_back(r.loss);
      if (on_step) on_step(step, r.loss);
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("fine-tuning aborted at step {}: {}", step, e.what()));
    }
  }
  res.post_loss = evaluate_l1(res.model, target, res.centroid, cfg.threads);
  return res;
}

}  // namespace vf
