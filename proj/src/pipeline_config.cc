#include "vf/pipeline_config.h"

#include <fmt/core.h>

#include "vf/mel_io.h"
#include "vf/util.h"

namespace vf {

void PipelineConfig::validate() const {
  analysis.validate();
  model.validate();
  embedder.validate();
  train.validate();
  embedder_train.adam.validate();
  if (model.mel_bins != analysis.mel_bins || embedder.mel_bins != analysis.mel_bins)
    throw UsageError("model, embedder and analysis mel bin counts must agree");
  if (model.embed_dim != embedder.embed_dim)
    throw UsageError("model.embed_dim must equal embedder.embed_dim");
  if (embedder_train.steps < 0 || embedder_train.utterances_per_speaker < 2)
    throw UsageError("embedder_train needs non-negative steps and at least 2 utterances per speaker");
  if (!(eval.alpha > 0.0 && eval.alpha < 1.0)) throw UsageError("eval.alpha must lie in (0, 1)");
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"paths",
           {{"corpus", paths.corpus},
            {"embedder", paths.embedder},
            {"background", paths.background},
            {"profile", paths.profile},
            {"output", paths.output}}},
          {"analysis", analysis_config_to_json(analysis)},
          {"model", model.to_json()},
          {"embedder", embedder.to_json()},
          {"train", train.to_json()},
          {"embedder_train",
           {{"steps", embedder_train.steps},
            {"utterances_per_speaker", embedder_train.utterances_per_speaker},
            {"learning_rate", embedder_train.adam.learning_rate}}},
          {"eval", {{"alpha", eval.alpha}, {"pooled", eval.pooled}}},
          {"seed", seed}};
}

namespace {

void require_object(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw UsageError(fmt::format("config section '{}' must be an object", where));
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  require_object(j, "<root>");
  PipelineConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "paths") {
        require_object(v, key);
        for (const auto& [k, p] : v.items()) {
          if (k == "corpus") c.paths.corpus = p.get<std::string>();
          else if (k == "embedder") c.paths.embedder = p.get<std::string>();
          else if (k == "background") c.paths.background = p.get<std::string>();
          else if (k == "profile") c.paths.profile = p.get<std::string>();
          else if (k == "output") c.paths.output = p.get<std::string>();
          else throw UsageError(fmt::format("unknown config key 'paths.{}'", k));
        }
      } else if (key == "analysis") {
        c.analysis = analysis_config_from_json(v);
      } else if (key == "model") {
        c.model = VoiceFilterConfig::from_json(v);
      } else if (key == "embedder") {
        c.embedder = EmbedderConfig::from_json(v);
      } else if (key == "train") {
        c.train = TrainConfig::from_json(v);
      } else if (key == "embedder_train") {
        require_object(v, key);
        for (const auto& [k, x] : v.items()) {
          if (k == "steps") c.embedder_train.steps = x.get<int>();
          else if (k == "utterances_per_speaker") c.embedder_train.utterances_per_speaker = x.get<int>();
          else if (k == "learning_rate") c.embedder_train.adam.learning_rate = x.get<double>();
          else throw UsageError(fmt::format("unknown config key 'embedder_train.{}'", k));
        }
      } else if (key == "eval") {
        require_object(v, key);
        for (const auto& [k, x] : v.items()) {
          if (k == "alpha") c.eval.alpha = x.get<double>();
          else if (k == "pooled") c.eval.pooled = x.get<bool>();
          else throw UsageError(fmt::format("unknown config key 'eval.{}'", k));
        }
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else {
        throw UsageError(fmt::format("unknown config key '{}'", key));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(fmt::format("invalid config value: {}", e.what()));
  } catch (const DataError& e) {
    // Section parsers report unknown keys as data errors.
    throw UsageError(e.what());
  }
  c.train.seed = j.contains("train") && j["train"].contains("seed") ? c.train.seed : c.seed;
  c.embedder_train.seed = c.seed;
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(fmt::format("{}: {}", path, e.what()));
  }
  return pipeline_config_from_json(j);
}

}  // namespace vf
