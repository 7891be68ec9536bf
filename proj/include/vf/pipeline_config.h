// Shared configuration file for the command-line pipeline.
#ifndef VF_PIPELINE_CONFIG_H_
#define VF_PIPELINE_CONFIG_H_

#include <cstdint>
#include <string>

#include "json.hpp"
#include "vf/dsp.h"
#include "vf/embedder.h"
#include "vf/trainer.h"
#include "vf/voice_filter.h"

namespace vf {

struct PipelinePaths {
  std::string corpus;
  std::string embedder;
  std::string background;
  std::string profile;
  std::string output;
};

struct EvalOptions {
  double alpha = 0.05;
  bool pooled = false;
};

struct PipelineConfig {
  PipelinePaths paths;
  AnalysisConfig analysis;
  VoiceFilterConfig model;
  EmbedderConfig embedder;
  TrainConfig train;
  EmbedderTrainConfig embedder_train;
  EvalOptions eval;
  std::uint64_t seed = 1;

  // Throws UsageError on inconsistent sizes.
  void validate() const;
  nlohmann::json to_json() const;
};

// Every section and key is optional; unknown keys anywhere are a UsageError.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::string& path);

}  // namespace vf

#endif  // VF_PIPELINE_CONFIG_H_
