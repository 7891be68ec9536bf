// Writes a toy multi-speaker dataset (alignments plus natural WAVs) in the
// layout `vfilter build-corpus` consumes:
//
//   <out>/background/{align.txt,audio/*.wav}
//   <out>/target/{align.txt,audio/*.wav}
//   <out>/test/{align.txt,audio/*.wav}

#include <filesystem>
#include <string>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "vf/corpus.h"
#include "vf/toy_voices.h"
#include "vf/util.h"

namespace fs = std::filesystem;

namespace {

void write_split(const fs::path& dir, const std::vector<vf::PhoneAlignment>& list, const vf::ToyDataset& d) {
  fs::create_directories(dir / "audio");
  std::string text;
  for (const auto& a : list) {
    text += vf::alignment_to_text(a);
    vf::write_wav((dir / "audio" / (a.utterance_id + ".wav")).string(), d.audio.at(a.utterance_id));
  }
  vf::write_text_file((dir / "align.txt").string(), text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate a toy multi-speaker dataset"};
  std::string out;
  vf::ToyDatasetSpec spec;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--speakers", spec.background_speakers, "Background speakers")->check(CLI::PositiveNumber);
  app.add_option("--utterances", spec.utterances_per_speaker, "Utterances per background speaker")
      ->check(CLI::PositiveNumber);
  app.add_option("--target-utterances", spec.target_utterances, "Adaptation utterances of the target speaker")
      ->check(CLI::PositiveNumber);
  app.add_option("--test-utterances", spec.test_utterances, "Held-out utterances of the target speaker");
  app.add_option("--seed", spec.seed, "Random seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    const vf::AnalysisConfig cfg;
    const auto d = vf::make_toy_dataset(spec, cfg);
    write_split(fs::path(out) / "background", d.background, d);
    write_split(fs::path(out) / "target", d.target, d);
    write_split(fs::path(out) / "test", d.test, d);
    fmt::print("{} background, {} target and {} test utterances written to {} (target speaker {})\n",
               d.background.size(), d.target.size(), d.test.size(), out, d.target_speaker().id);
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
