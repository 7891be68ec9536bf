// vfilter: command-line front end for the voice conversion pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data or validation error,
// 3 numerical failure.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "vf/checkpoint.h"
#include "vf/corpus.h"
#include "vf/dsp.h"
#include "vf/embedder.h"
#include "vf/eval.h"
#include "vf/inference.h"
#include "vf/mel_io.h"
#include "vf/pipeline_config.h"
#include "vf/pitch.h"
#include "vf/trainer.h"
#include "vf/util.h"
#include "vf/verify.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kResultSchema = "vfilter.result/1";

struct Globals {
  std::string config_path;
  bool json = false;
  bool quiet = false;
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

Globals g;

template <class... Args>
void log(fmt::format_string<Args...> f, Args&&... args) {
  if (!g.quiet) fmt::print(stderr, "{}\n", fmt::format(f, std::forward<Args>(args)...));
}

vf::PipelineConfig load_config() {
  std::string path = g.config_path;
  if (path.empty())
    if (const char* env = std::getenv("VF_CONFIG"); env && *env) path = env;
  vf::PipelineConfig cfg;
  if (!path.empty()) {
    if (!fs::exists(path)) throw vf::UsageError(fmt::format("config file '{}' does not exist", path));
    cfg = vf::load_pipeline_config(path);
  }
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.train.seed = *g.seed;
    cfg.embedder_train.seed = *g.seed;
  }
  if (g.threads < 1) throw vf::UsageError("--threads must be at least 1");
  cfg.train.threads = g.threads;
  return cfg;
}

void emit(const std::string& command, const json& result, const std::string& text) {
  if (g.json) {
    fmt::print("{}\n", json{{"schema", kResultSchema}, {"command", command}, {"ok", true}, {"result", result}}.dump(2));
  } else if (!text.empty()) {
    fmt::print("{}", text);
  }
}

std::string pick(const std::string& flag, const std::string& fallback, const char* what) {
  const std::string v = flag.empty() ? fallback : flag;
  if (v.empty()) throw vf::UsageError(fmt::format("missing {} (flag or config paths entry)", what));
  return v;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw vf::DataError(fmt::format("{} '{}' not found", what, path));
}

void require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw vf::DataError(fmt::format("{} '{}' is not a directory", what, path));
}

// Running-mean window for loss summaries: 100 steps, or half a shorter run.
std::size_t loss_window(const std::vector<double>& losses) {
  return std::max<std::size_t>(1, std::min<std::size_t>(100, losses.size() / 2));
}

std::string file_sha256(const std::string& path) { return vf::to_hex(vf::sha256(vf::read_file_bytes(path))); }

std::vector<vf::ParallelUtterancePair> load_corpora(const std::vector<std::string>& dirs) {
  std::vector<vf::ParallelUtterancePair> all;
  for (const auto& d : dirs) {
    auto pairs = vf::load_corpus(d);
    log("loaded {} pairs from {}", pairs.size(), d);
    for (auto& p : pairs) all.push_back(std::move(p));
  }
  return all;
}

void check_analysis(const vf::AnalysisConfig& corpus_cfg, const vf::AnalysisConfig& cfg, const std::string& dir) {
  if (!(corpus_cfg == cfg))
    throw vf::DataError(fmt::format("corpus '{}' was built with a different analysis configuration", dir));
}

vf::AnalysisConfig corpus_analysis(const std::string& dir) {
  return vf::analysis_config_from_json(vf::read_manifest(dir).at("analysis"));
}

vf::MelSpectrogram mel_from_file(const fs::path& p, const vf::AnalysisConfig& cfg) {
  if (p.extension() == ".mel") return vf::read_mel_file(p.string());
  const auto w = vf::load_wav(p.string());
  if (w.sample_rate != cfg.sample_rate)
    throw vf::DataError(fmt::format("{}: sample rate {} differs from the analysis rate {}", p.string(), w.sample_rate,
                                    cfg.sample_rate));
  return vf::mel_spectrogram(w, cfg);
}

std::vector<fs::path> audio_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && (e.path().extension() == ".wav" || e.path().extension() == ".mel"))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Speaker-grouped mels from a corpus directory (natural target mels), a
// directory of per-speaker subdirectories, a flat directory or single files.
vf::SpeakerMels load_speaker_mels(const std::vector<std::string>& inputs, const vf::AnalysisConfig& cfg) {
  vf::SpeakerMels out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_regular_file(p)) {
      out[""].push_back(mel_from_file(p, cfg));
    } else if (fs::is_regular_file(p / "manifest.json")) {
      for (auto& pair : vf::load_corpus(in)) out[pair.speaker_id].push_back(std::move(pair.target_mel));
    } else if (fs::is_directory(p)) {
      bool nested = false;
      std::vector<fs::path> subdirs;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_directory()) subdirs.push_back(e.path());
      std::sort(subdirs.begin(), subdirs.end());
      for (const auto& s : subdirs) {
        const auto files = audio_files(s);
        if (files.empty()) continue;
        nested = true;
        for (const auto& f : files) out[s.filename().string()].push_back(mel_from_file(f, cfg));
      }
      if (!nested)
        for (const auto& f : audio_files(p)) out[""].push_back(mel_from_file(f, cfg));
    } else {
      throw vf::DataError(fmt::format("'{}' not found", in));
    }
  }
  std::size_t n = 0;
  for (const auto& [k, v] : out) n += v.size();
  if (n == 0) throw vf::DataError("no audio or mel files found");
  return out;
}

std::vector<Eigen::VectorXf> embed_all(const vf::SpeakerMels& s, const vf::EmbedderModel& emb,
                                       std::vector<std::string>* ids = nullptr) {
  std::vector<Eigen::VectorXf> out;
  for (const auto& [k, mels] : s)
    for (std::size_t i = 0; i < mels.size(); ++i) {
      out.push_back(vf::embed(mels[i], emb));
      if (ids) ids->push_back(fmt::format("{}/{}", k.empty() ? "-" : k, i));
    }
  return out;
}

vf::EmbedderModel load_embedder(const std::string& path) {
  require_file(path, "embedder checkpoint");
  return vf::unpack_embedder(vf::load_checkpoint(path));
}

// ------------------------------------------------------------- subcommands

struct BuildCorpusArgs {
  std::string align, audio, out;
  bool strict = false;
};

int run_build_corpus(const BuildCorpusArgs& a) {
  const auto cfg = load_config();
  const auto out = pick(a.out, cfg.paths.output.empty() ? cfg.paths.corpus : cfg.paths.output, "--out");
  require_file(a.align, "alignment file");
  require_dir(a.audio, "audio directory");
  const auto alignments = vf::parse_alignments(a.align);
  std::map<std::string, vf::Waveform> audio;
  for (const auto& al : alignments) {
    const auto path = fs::path(a.audio) / (al.utterance_id + ".wav");
    if (!fs::exists(path)) continue;
    auto w = vf::load_wav(path.string());
    if (w.sample_rate != cfg.analysis.sample_rate)
      throw vf::DataError(fmt::format("{}: sample rate {} differs from the analysis rate {}", path.string(),
                                      w.sample_rate, cfg.analysis.sample_rate));
    audio.emplace(al.utterance_id, std::move(w));
  }
  const vf::ToySynthesizer synth(cfg.seed, cfg.analysis);
  vf::CorpusBuildOptions opt;
  opt.strict = a.strict;
  opt.threads = g.threads;
  const auto build = vf::build_parallel_corpus(alignments, synth, audio, cfg.analysis, opt);
  for (const auto& s : build.skipped) log("skipped {}: {}", s.utterance_id, s.reason);
  for (const auto& t : build.trims)
    log("adjusted {}: natural {} frames, alignment {}", t.utterance_id, t.natural_frames, t.alignment_frames);
  const auto manifest = vf::write_corpus(out, build, cfg.analysis, cfg.seed);
  json r = {{"out", out},
            {"pair_count", manifest["pair_count"]},
            {"total_frames", manifest["total_frames"]},
            {"speakers", manifest["speakers"]},
            {"trimmed", build.trims.size()},
            {"skipped", build.skipped.size()},
            {"manifest_hash", manifest["manifest_hash"]},
            {"seed", cfg.seed}};
  emit("build-corpus", r,
       fmt::format("wrote {} pairs to {} (manifest {})\n", build.pairs.size(), out,
                   manifest["manifest_hash"].get<std::string>()));
  return 0;
}

struct TrainEmbedderArgs {
  std::vector<std::string> corpora;
  std::string out;
  int steps = -1;
};

int run_train_embedder(const TrainEmbedderArgs& a) {
  auto cfg = load_config();
  auto corpora = a.corpora;
  if (corpora.empty() && !cfg.paths.corpus.empty()) corpora.push_back(cfg.paths.corpus);
  if (corpora.empty()) throw vf::UsageError("missing --corpus");
  const auto out = pick(a.out, cfg.paths.embedder, "--out");
  for (const auto& c : corpora) {
    require_dir(c, "corpus");
    check_analysis(corpus_analysis(c), cfg.analysis, c);
  }
  if (a.steps >= 0) cfg.embedder_train.steps = a.steps;
  std::map<std::string, std::vector<Eigen::MatrixXf>> utts;
  for (auto& p : load_corpora(corpora)) utts[p.speaker_id].push_back(std::move(p.target_mel.frames));
  log("training speaker embedder on {} speakers for {} steps", utts.size(), cfg.embedder_train.steps);
  const auto res = vf::train_embedder(utts, cfg.embedder, cfg.embedder_train);
  const json meta = {{"steps", cfg.embedder_train.steps},
                     {"seed", cfg.embedder_train.seed},
                     {"speakers", utts.size()},
                     {"loss_head", vf::running_mean_head(res.loss_history, loss_window(res.loss_history))},
                     {"loss_tail", vf::running_mean_tail(res.loss_history, loss_window(res.loss_history))}};
  vf::save_checkpoint(out, vf::pack_embedder(res.model, meta));
  json r = meta;
  r["out"] = out;
  r["sha256"] = file_sha256(out);
  emit("train-embedder", r,
       fmt::format("embedder saved to {} (GE2E loss {:.4f} -> {:.4f})\n", out, meta["loss_head"].get<double>(),
                   meta["loss_tail"].get<double>()));
  return 0;
}

struct TrainVfArgs {
  std::vector<std::string> corpora;
  std::string embedder, out;
  int steps = -1, batch_size = -1;
  double lr = -1.0;
};

int run_train_vf(const TrainVfArgs& a) {
  auto cfg = load_config();
  auto corpora = a.corpora;
  if (corpora.empty() && !cfg.paths.corpus.empty()) corpora.push_back(cfg.paths.corpus);
  if (corpora.empty()) throw vf::UsageError("missing --corpus");
  const auto emb_path = pick(a.embedder, cfg.paths.embedder, "--embedder");
  const auto out = pick(a.out, cfg.paths.background, "--out");
  if (a.steps >= 0) cfg.train.steps = a.steps;
  if (a.batch_size > 0) cfg.train.batch_size = a.batch_size;
  if (a.lr > 0.0) cfg.train.adam.learning_rate = a.lr;
  cfg.validate();
  for (const auto& c : corpora) {
    require_dir(c, "corpus");
    check_analysis(corpus_analysis(c), cfg.analysis, c);
  }
  const auto embedder = load_embedder(emb_path);
  const auto corpus = load_corpora(corpora);
  log("background training: {} pairs, {} steps, batch {}", corpus.size(), cfg.train.steps, cfg.train.batch_size);
  const auto res = vf::train_background(corpus, embedder, cfg.model, cfg.train, [&](int step, double loss) {
    if ((step + 1) % 100 == 0) log("step {:>6}  L1 {:.5f}", step + 1, loss);
  });
  const json meta = {{"stage", "background"},
                     {"train", cfg.train.to_json()},
                     {"embedder", fs::absolute(emb_path).string()},
                     {"embedder_sha256", file_sha256(emb_path)},
                     {"pairs", corpus.size()},
                     {"loss_head", vf::running_mean_head(res.loss_history, loss_window(res.loss_history))},
                     {"loss_tail", vf::running_mean_tail(res.loss_history, loss_window(res.loss_history))}};
  vf::save_checkpoint(out, vf::pack_voice_filter(res.model, &res.optimizer, meta));
  json r = meta;
  r["out"] = out;
  r["sha256"] = file_sha256(out);
  emit("train-vf", r,
       fmt::format("background model saved to {} (L1 {:.4f} -> {:.4f})\n", out, meta["loss_head"].get<double>(),
                   meta["loss_tail"].get<double>()));
  return 0;
}

// Target f0 statistics from natural target audio, source statistics from the
// synthesizer's mels in `source_dirs`.
vf::TargetVoiceProfile assemble_profile(vf::VoiceFilterModel model, const Eigen::VectorXf& centroid,
                                        const std::vector<vf::ParallelUtterancePair>& target,
                                        const std::vector<std::string>& source_dirs, const std::string& target_dir) {
  vf::TargetVoiceProfile p;
  p.model = std::move(model);
  p.centroid = centroid;
  const auto manifest = vf::read_manifest(target_dir);
  p.analysis = vf::analysis_config_from_json(manifest.at("analysis"));
  p.synth_seed = manifest.at("seed").get<std::uint64_t>();
  std::vector<vf::F0Contour> contours;
  for (const auto& t : target) contours.push_back(t.target_f0);
  p.target_f0 = vf::f0_stats(contours);
  std::vector<vf::ParallelUtterancePair> source_pairs;
  if (!source_dirs.empty()) source_pairs = load_corpora(source_dirs);
  const auto& src = source_dirs.empty() ? target : source_pairs;
  std::vector<const vf::MelSpectrogram*> mels;
  for (const auto& s : src) mels.push_back(&s.source_mel);
  p.source_f0 = vf::source_f0_stats(mels, p.analysis);
  return p;
}

std::vector<vf::ParallelUtterancePair> load_target(const std::string& dir) {
  require_dir(dir, "target directory");
  auto target = vf::load_corpus(dir);
  if (target.empty()) throw vf::DataError(fmt::format("target directory '{}' holds no pairs", dir));
  for (const auto& p : target)
    if (p.speaker_id != target.front().speaker_id)
      throw vf::DataError(fmt::format("target directory '{}' mixes speakers '{}' and '{}'", dir,
                                      target.front().speaker_id, p.speaker_id));
  return target;
}

std::string embedder_from_meta(const vf::Checkpoint& c, const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (!fallback.empty()) return fallback;
  if (c.config.contains("meta") && c.config["meta"].contains("embedder"))
    return c.config["meta"]["embedder"].get<std::string>();
  throw vf::UsageError("missing --embedder");
}

struct FinetuneArgs {
  std::string background, target_dir, embedder, out;
  std::vector<std::string> source_corpora;
  int steps = -1;
  double lr = -1.0;
};

int run_finetune(const FinetuneArgs& a) {
  auto cfg = load_config();
  const auto bg_path = pick(a.background, cfg.paths.background, "--background");
  const auto out = pick(a.out, cfg.paths.profile.empty() ? std::string("profile") : cfg.paths.profile, "--out");
  if (a.steps >= 0) cfg.train.finetune_steps = a.steps;
  if (a.lr > 0.0) cfg.train.finetune_learning_rate = a.lr;
  cfg.validate();
  require_file(bg_path, "background checkpoint");
  for (const auto& s : a.source_corpora) require_dir(s, "source corpus");
  const auto ckpt = vf::load_checkpoint(bg_path);
  const auto emb_path = embedder_from_meta(ckpt, a.embedder, cfg.paths.embedder);
  const auto embedder = load_embedder(emb_path);
  const auto background = vf::unpack_voice_filter(ckpt);
  const auto target = load_target(a.target_dir);
  log("fine-tuning on {} utterances of '{}' for {} steps", target.size(), target.front().speaker_id,
      cfg.train.finetune_steps);
  const auto res = vf::finetune(background, target, embedder, cfg.train, [&](int step, double loss) {
    if ((step + 1) % 100 == 0) log("step {:>6}  L1 {:.5f}", step + 1, loss);
  });
  auto profile = assemble_profile(res.model, res.centroid, target, a.source_corpora, a.target_dir);
  const json meta = {{"stage", "finetune"},
                     {"speaker", target.front().speaker_id},
                     {"speaker_dependent", true},
                     {"batch_norm", "running statistics frozen from background training"},
                     {"steps", cfg.train.finetune_steps},
                     {"seed", cfg.train.seed},
                     {"target_seconds", res.total_seconds},
                     {"pre_loss", res.pre_loss},
                     {"post_loss", res.post_loss},
                     {"background_sha256", file_sha256(bg_path)}};
  vf::save_profile(out, profile, meta);
  json r = meta;
  r["out"] = out;
  emit("finetune", r,
       fmt::format("profile for '{}' written to {} ({:.1f} s of target audio, L1 {:.4f} -> {:.4f})\n",
                   target.front().speaker_id, out, res.total_seconds, res.pre_loss, res.post_loss));
  return 0;
}

struct MakeProfileArgs {
  std::string model, target_dir, embedder, out;
  std::vector<std::string> source_corpora;
};

int run_make_profile(const MakeProfileArgs& a) {
  const auto cfg = load_config();
  const auto out = pick(a.out, cfg.paths.profile, "--out");
  require_file(a.model, "model checkpoint");
  const auto ckpt = vf::load_checkpoint(a.model);
  const auto embedder = load_embedder(embedder_from_meta(ckpt, a.embedder, cfg.paths.embedder));
  const auto target = load_target(a.target_dir);
  const auto c = vf::centroid(vf::utterance_embeddings(target, embedder, g.threads));
  auto profile = assemble_profile(vf::unpack_voice_filter(ckpt), c, target, a.source_corpora, a.target_dir);
  vf::save_profile(out, profile, {{"stage", "profile"}, {"speaker", target.front().speaker_id}});
  json r = {{"out", out},
            {"speaker", target.front().speaker_id},
            {"target_f0", {{"mean", profile.target_f0.mean}, {"stddev", profile.target_f0.stddev}}},
            {"source_f0", {{"mean", profile.source_f0.mean}, {"stddev", profile.source_f0.stddev}}}};
  emit("make-profile", r, fmt::format("profile written to {}\n", out));
  return 0;
}

struct InferArgs {
  std::string align, profile, out, debug_dump;
  int iters = vf::kDefaultGriffinLimIters;
};

std::string logf0_to_csv(const vf::LogF0& f) {
  std::string s = "frame_index,log_f0,voiced\n";
  for (int t = 0; t < f.num_frames(); ++t) s += fmt::format("{},{:.9g},{}\n", t, f.values[t], f.voiced[t] ? 1 : 0);
  return s;
}

int run_infer(const InferArgs& a) {
  const auto cfg = load_config();
  const auto profile_dir = pick(a.profile, cfg.paths.profile, "--profile");
  const auto out = pick(a.out, cfg.paths.output, "--out");
  if (a.iters < 1) throw vf::UsageError("--iters must be positive");
  require_file(a.align, "alignment file");
  require_dir(profile_dir, "profile directory");
  const auto alignments = vf::parse_alignments(a.align);
  if (alignments.empty()) throw vf::DataError("alignment file holds no utterances");
  const auto profile = vf::load_profile(profile_dir);
  const vf::ToySynthesizer synth(profile.synth_seed, profile.analysis);
  const bool single = alignments.size() == 1 && fs::path(out).extension() == ".wav";
  if (!single) fs::create_directories(out);
  if (!a.debug_dump.empty()) fs::create_directories(a.debug_dump);

  std::vector<json> rows(alignments.size());
  vf::parallel_for(alignments.size(), g.threads, [&](std::size_t i) {
    const auto& al = alignments[i];
    const auto source = vf::synthesize_source(al, synth);
    const auto conv = vf::convert_detailed(source, profile);
    const auto wav = vf::vocode(conv.mel, profile.analysis, a.iters);
    const auto path = single ? fs::path(out) : fs::path(out) / (al.utterance_id + ".wav");
    vf::write_wav(path.string(), wav);
    if (!a.debug_dump.empty()) {
      const fs::path d = fs::path(a.debug_dump) / al.utterance_id;
      fs::create_directories(d);
      vf::write_mel_file((d / "source.mel").string(), source, profile.analysis);
      vf::write_mel_file((d / "converted.mel").string(), conv.mel, profile.analysis);
      vf::write_text_file((d / "source_f0.csv").string(), vf::f0_to_csv(conv.source_f0));
      vf::write_text_file((d / "conditioning_logf0.csv").string(), logf0_to_csv(conv.conditioning_f0));
    }
    rows[i] = {{"utterance_id", al.utterance_id},
               {"frames", conv.mel.num_frames()},
               {"samples", wav.size()},
               {"path", path.string()}};
  });
  std::string text;
  for (const auto& r : rows)
    text += fmt::format("{}: {} frames -> {}\n", r["utterance_id"].get<std::string>(), r["frames"].get<int>(),
                        r["path"].get<std::string>());
  emit("infer", json{{"utterances", rows}, {"griffin_lim_iters", a.iters}}, text);
  return 0;
}

struct EvalArgs {
  std::string embedder, dump_embeddings;
  std::vector<std::string> synth, ref;
  bool pooled = false;
};

int run_eval_csed(const EvalArgs& a) {
  const auto cfg = load_config();
  const auto embedder = load_embedder(pick(a.embedder, cfg.paths.embedder, "--embedder"));
  std::vector<std::string> synth_ids, ref_ids;
  const auto synth = embed_all(load_speaker_mels(a.synth, cfg.analysis), embedder, &synth_ids);
  const auto ref = embed_all(load_speaker_mels(a.ref, cfg.analysis), embedder, &ref_ids);
  const double v = vf::csed(synth, ref);
  if (!a.dump_embeddings.empty()) {
    std::vector<std::string> ids;
    std::vector<Eigen::VectorXf> all;
    for (std::size_t i = 0; i < synth.size(); ++i) {
      ids.push_back("synth:" + synth_ids[i]);
      all.push_back(synth[i]);
    }
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ids.push_back("ref:" + ref_ids[i]);
      all.push_back(ref[i]);
    }
    vf::write_text_file(a.dump_embeddings, vf::embeddings_to_csv(ids, all));
  }
  emit("eval-csed", json{{"csed", v}, {"synth_count", synth.size()}, {"ref_count", ref.size()}},
       fmt::format("CSED {:.6f} ({} synthesized vs {} reference utterances)\n", v, synth.size(), ref.size()));
  return 0;
}

int run_eval_cfsd(const EvalArgs& a) {
  const auto cfg = load_config();
  const auto embedder = load_embedder(pick(a.embedder, cfg.paths.embedder, "--embedder"));
  const auto ref = load_speaker_mels(a.ref, cfg.analysis);
  const auto synth = load_speaker_mels(a.synth, cfg.analysis);
  const bool pooled = a.pooled || cfg.eval.pooled;
  const double v = vf::cfsd(ref, synth, vf::embedder_frame_features(embedder), pooled, g.threads);
  emit("eval-cfsd", json{{"cfsd", v}, {"mode", pooled ? "pooled" : "per_speaker"}, {"speakers", ref.size()}},
       fmt::format("cFSD {:.6f} ({})\n", v, pooled ? "pooled" : "per-speaker average"));
  return 0;
}

struct MushraArgs {
  std::string csv;
  double alpha = -1.0;
};

int run_eval_mushra(const MushraArgs& a) {
  const auto cfg = load_config();
  require_file(a.csv, "scores file");
  const double alpha = a.alpha > 0.0 ? a.alpha : cfg.eval.alpha;
  const auto report = vf::mushra_report(vf::parse_mushra_csv(vf::read_text_file(a.csv)), alpha);
  emit("eval-mushra", report.to_json(), report.to_table());
  return 0;
}

struct VerifyArgs {
  int instances = 3;
};

int run_verify(const VerifyArgs& a) {
  const auto cfg = load_config();
  if (a.instances < 1) throw vf::UsageError("--instances must be positive");
  const auto checks = vf::run_self_checks(cfg.seed, a.instances);
  json rows = json::array();
  std::string text;
  bool ok = true;
  for (const auto& c : checks) {
    ok = ok && c.passed;
    rows.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    text += fmt::format("{}  {}: {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
  }
  emit("verify", json{{"passed", ok}, {"checks", rows}, {"seed", cfg.seed}}, text);
  return ok ? 0 : 3;
}

void emit_error(const char* kind, const std::string& message) {
  fmt::print(stderr, "error: {}\n", message);
  if (g.json)
    fmt::print("{}\n", json{{"schema", kResultSchema}, {"ok", false}, {"error", {{"kind", kind}, {"message", message}}}}
                           .dump(2));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vfilter: low-resource voice conversion pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", g.config_path, "Pipeline config JSON (falls back to $VF_CONFIG)");
  app.add_flag("--json", g.json, "Print a machine-readable result to stdout");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress logging");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Override the config seed");

  std::function<int()> action;

  BuildCorpusArgs bc;
  auto* s = app.add_subcommand("build-corpus", "Build a frame-aligned parallel corpus");
  s->add_option("--align", bc.align, "Phone alignment file")->required();
  s->add_option("--audio", bc.audio, "Directory of <utterance>.wav natural recordings")->required();
  s->add_option("--out", bc.out, "Output corpus directory");
  s->add_flag("--strict", bc.strict, "Abort on missing audio or frame mismatch");
  s->callback([&] { action = [&] { return run_build_corpus(bc); }; });

  TrainEmbedderArgs te;
  s = app.add_subcommand("train-embedder", "Train the GE2E speaker embedder");
  s->add_option("--corpus", te.corpora, "Corpus directory (repeatable)");
  s->add_option("--out", te.out, "Output checkpoint");
  s->add_option("--steps", te.steps, "Training steps");
  s->callback([&] { action = [&] { return run_train_embedder(te); }; });

  TrainVfArgs tv;
  s = app.add_subcommand("train-vf", "Train the one-to-many background Voice Filter");
  s->add_option("--corpus", tv.corpora, "Corpus directory (repeatable)");
  s->add_option("--embedder", tv.embedder, "Speaker embedder checkpoint");
  s->add_option("--out", tv.out, "Output checkpoint");
  s->add_option("--steps", tv.steps, "Training steps");
  s->add_option("--batch-size", tv.batch_size, "Utterances per batch");
  s->add_option("--lr", tv.lr, "Learning rate");
  s->callback([&] { action = [&] { return run_train_vf(tv); }; });

  FinetuneArgs ft;
  s = app.add_subcommand("finetune", "Fine-tune on a target speaker and write a voice profile");
  s->add_option("--background", ft.background, "Background checkpoint");
  s->add_option("--target-dir", ft.target_dir, "Corpus directory of the target speaker")->required();
  s->add_option("--embedder", ft.embedder, "Speaker embedder (default: the one used for background training)");
  s->add_option("--source-corpus", ft.source_corpora, "Corpus whose source mels give the source f0 statistics");
  s->add_option("--out", ft.out, "Output profile directory");
  s->add_option("--steps", ft.steps, "Fine-tuning steps");
  s->add_option("--lr", ft.lr, "Fine-tuning learning rate");
  s->callback([&] { action = [&] { return run_finetune(ft); }; });

  MakeProfileArgs mp;
  s = app.add_subcommand("make-profile", "Assemble a voice profile from a fine-tuned checkpoint");
  s->add_option("--model", mp.model, "Fine-tuned Voice Filter checkpoint")->required();
  s->add_option("--target-dir", mp.target_dir, "Corpus directory of the target speaker")->required();
  s->add_option("--embedder", mp.embedder, "Speaker embedder checkpoint");
  s->add_option("--source-corpus", mp.source_corpora, "Corpus whose source mels give the source f0 statistics");
  s->add_option("--out", mp.out, "Output profile directory");
  s->callback([&] { action = [&] { return run_make_profile(mp); }; });

  InferArgs in;
  s = app.add_subcommand("infer", "Convert alignments to target-voice waveforms");
  s->add_option("--align", in.align, "Phone alignment file")->required();
  s->add_option("--profile", in.profile, "Voice profile directory");
  s->add_option("--out", in.out, "Output .wav (single utterance) or directory");
  s->add_option("--iters", in.iters, "Griffin-Lim iterations");
  s->add_option("--debug-dump", in.debug_dump, "Directory for intermediate mels and f0 contours");
  s->callback([&] { action = [&] { return run_infer(in); }; });

  EvalArgs ec;
  s = app.add_subcommand("eval-csed", "Cosine speaker-embedding distance");
  s->add_option("--embedder", ec.embedder, "Speaker embedder checkpoint");
  s->add_option("--synth", ec.synth, "Synthesized audio (files or directories)")->required();
  s->add_option("--ref", ec.ref, "Reference audio (files, directories or a corpus)")->required();
  s->add_option("--dump-embeddings", ec.dump_embeddings, "Write every utterance embedding to this CSV");
  s->callback([&] { action = [&] { return run_eval_csed(ec); }; });

  EvalArgs ef;
  s = app.add_subcommand("eval-cfsd", "Conditional Fréchet speech distance");
  s->add_option("--embedder", ef.embedder, "Speaker embedder checkpoint");
  s->add_option("--synth", ef.synth, "Synthesized audio (per-speaker subdirectories)")->required();
  s->add_option("--ref", ef.ref, "Reference audio (per-speaker subdirectories or a corpus)")->required();
  s->add_flag("--pooled", ef.pooled, "Single fit over all speakers");
  s->callback([&] { action = [&] { return run_eval_cfsd(ef); }; });

  MushraArgs mu;
  s = app.add_subcommand("eval-mushra", "MUSHRA means, confidence intervals and Holm-corrected t-tests");
  s->add_option("scores", mu.csv, "CSV listener_id,system_id,utterance_id,score")->required();
  s->add_option("--alpha", mu.alpha, "Family-wise significance level");
  s->callback([&] { action = [&] { return run_eval_mushra(mu); }; });

  VerifyArgs ve;
  s = app.add_subcommand("verify", "Run the invariant self-check suite");
  s->add_option("--instances", ve.instances, "Seeded instances per gradient check");
  s->callback([&] { action = [&] { return run_verify(ve); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return action();
  } catch (const vf::UsageError& e) {
    emit_error("usage", e.what());
    return 1;
  } catch (const vf::NumericalError& e) {
    emit_error("numerical", e.what());
    return 3;
  } catch (const vf::DataError& e) {
    emit_error("data", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    emit_error("data", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error("data", e.what());
    return 2;
  }
}
