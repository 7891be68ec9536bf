#include "vf/corpus.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include <fmt/core.h>

#include "vf/mel_io.h"
#include "vf/util.h"

namespace fs = std::filesystem;

namespace vf {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform [0, 1) from successive draws of a hash stream.
class HashStream {
 public:
  explicit HashStream(std::uint64_t state) : state_(state) {}
  double uniform() {
    state_ = splitmix(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace

std::uint64_t hash_symbol(const std::string& s, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix(h ^ splitmix(seed));
}

bool toy_phone_voiced(const std::string& phone) {
  // About one phone in five is unvoiced; silence markers are unvoiced.
  if (phone == "sil" || phone == "sp") return false;
  return hash_symbol(phone, 0x5eed) % 5 != 0;
}

void validate_alignment(const PhoneAlignment& a) {
  if (a.segments.empty()) throw DataError(fmt::format("alignment '{}' has no segments", a.utterance_id));
  int expected = 0;
  for (std::size_t i = 0; i < a.segments.size(); ++i) {
    const auto& s = a.segments[i];
    if (s.start_frame != expected)
      throw DataError(fmt::format("alignment '{}': segment {} starts at {} (expected {})", a.utterance_id, i,
                                  s.start_frame, expected));
    if (s.end_frame <= s.start_frame)
      throw DataError(fmt::format("alignment '{}': segment {} has non-positive duration", a.utterance_id, i));
    expected = s.end_frame;
  }
}

std::vector<PhoneAlignment> parse_alignments_text(const std::string& text) {
  std::vector<PhoneAlignment> out;
  std::set<std::string> finished;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string utt, spk, phone;
    long start = 0, end = 0;
    if (!(fields >> utt)) continue;  // blank line
    std::string rest;
    if (!(fields >> spk >> phone >> start >> end) || (fields >> rest))
      throw DataError(fmt::format("alignment parse error at line {}: expected 5 fields", lineno));
    if (out.empty() || out.back().utterance_id != utt) {
      if (!out.empty()) finished.insert(out.back().utterance_id);
      if (finished.contains(utt))
        throw DataError(fmt::format("alignment parse error at line {}: utterance '{}' lines are not consecutive",
                                    lineno, utt));
      out.push_back({utt, spk, {}});
    }
    auto& a = out.back();
    if (a.speaker_id != spk)
      throw DataError(fmt::format("alignment parse error at line {}: speaker changes within '{}'", lineno, utt));
    if (start < 0 || end < 0)
      throw DataError(fmt::format("alignment parse error at line {}: negative frame index", lineno));
    if (end <= start) throw DataError(fmt::format("alignment parse error at line {}: non-positive duration", lineno));
    const int expected = a.total_frames();
    if (start < expected) throw DataError(fmt::format("alignment parse error at line {}: overlap", lineno));
    if (start > expected) throw DataError(fmt::format("alignment parse error at line {}: gap", lineno));
    a.segments.push_back({phone, static_cast<int>(start), static_cast<int>(end)});
  }
  return out;
}

std::vector<PhoneAlignment> parse_alignments(const std::string& path) {
  return parse_alignments_text(read_text_file(path));
}

PhoneAlignment parse_alignment(const std::string& path) {
  auto all = parse_alignments(path);
  if (all.size() != 1)
    throw DataError(fmt::format("'{}' holds {} utterances, expected exactly one", path, all.size()));
  return std::move(all.front());
}

std::string alignment_to_text(const PhoneAlignment& a) {
  std::string out;
  for (const auto& s : a.segments)
    out += fmt::format("{} {} {} {} {}\n", a.utterance_id, a.speaker_id, s.phone, s.start_frame, s.end_frame);
  return out;
}

ToySynthesizer::ToySynthesizer(std::uint64_t seed, AnalysisConfig cfg)
    : seed_(seed), cfg_(std::move(cfg)), filterbank_(mel_filterbank(cfg_)) {}

double ToySynthesizer::phone_pitch(const std::string& phone) const {
  if (!toy_phone_voiced(phone)) return 0.0;
  HashStream h(hash_symbol(phone, seed_ ^ 0x70a7c4ULL));
  return 100.0 + 40.0 * h.uniform();
}

Eigen::VectorXf ToySynthesizer::phone_template(const std::string& phone) const {
  HashStream h(hash_symbol(phone, seed_));
  const int nb = cfg_.fft_size / 2 + 1;
  const double nyquist = cfg_.sample_rate / 2.0;
  const bool voiced = toy_phone_voiced(phone);

  // Envelope: three resonances placed on the mel axis, plus a tilt.
  struct Peak {
    double center, width, gain;
  };
  std::vector<Peak> peaks;
  const double top = hz_to_mel(voiced ? 4000.0 : nyquist * 0.95);
  const double bottom = hz_to_mel(voiced ? 200.0 : 1500.0);
  for (int i = 0; i < 3; ++i) {
    const double c = mel_to_hz(bottom + (top - bottom) * (i + h.uniform()) / 3.0);
    peaks.push_back({c, 80.0 + 0.15 * c * (0.5 + h.uniform()), 0.3 + h.uniform()});
  }
  const double tilt = voiced ? 1.0 + h.uniform() : 0.3 * h.uniform();
  const double pitch = phone_pitch(phone);

  Eigen::VectorXd power(nb);
  for (int k = 0; k < nb; ++k) {
    const double f = static_cast<double>(k) * cfg_.sample_rate / cfg_.fft_size;
    double env = 0.02;
    for (const auto& p : peaks) env += p.gain * std::exp(-0.5 * std::pow((f - p.center) / p.width, 2));
    env *= std::pow(1.0 + f / 500.0, -tilt);
    double excitation = 1.0;
    if (voiced) {
      // Harmonic comb with ~12 Hz lobes, plus a little aspiration noise.
      const double nearest = std::max(1.0, std::round(f / pitch)) * pitch;
      excitation = 0.03 + std::exp(-0.5 * std::pow((f - nearest) / 12.0, 2));
    }
    power(k) = 2.0e3 * env * excitation;
  }
  const Eigen::VectorXd mel = filterbank_ * power;
  return mel.unaryExpr([&](double v) { return std::log(std::max(v, cfg_.log_floor)); }).cast<float>();
}

MelSpectrogram ToySynthesizer::synthesize(const PhoneAlignment& a) const {
  validate_alignment(a);
  MelSpectrogram m;
  m.hop_length = cfg_.hop_length;
  m.sample_rate = cfg_.sample_rate;
  m.frames.resize(a.total_frames(), cfg_.mel_bins);
  std::vector<Eigen::VectorXf> templates;
  templates.reserve(a.segments.size());
  for (const auto& s : a.segments) templates.push_back(phone_template(s.phone));
  for (std::size_t i = 0; i < a.segments.size(); ++i)
    for (int t = a.segments[i].start_frame; t < a.segments[i].end_frame; ++t)
      m.frames.row(t) = templates[i].transpose();
  // Two-frame linear cross-fade around each boundary.
  for (std::size_t i = 0; i + 1 < a.segments.size(); ++i) {
    if (a.segments[i].duration() < 2 || a.segments[i + 1].duration() < 2) continue;
    const int b = a.segments[i].end_frame;
    const auto& prev = templates[i];
    const auto& next = templates[i + 1];
    m.frames.row(b - 1) = ((2.0f / 3.0f) * prev + (1.0f / 3.0f) * next).transpose();
    m.frames.row(b) = ((1.0f / 3.0f) * prev + (2.0f / 3.0f) * next).transpose();
  }
  return m;
}

void validate_pair(const ParallelUtterancePair& p) {
  const int t = p.source_mel.num_frames();
  if (p.target_mel.num_frames() != t || p.target_f0.num_frames() != t || p.target_logf0.num_frames() != t)
    throw DataError(fmt::format("pair '{}': frame counts differ (source {}, target {}, f0 {}, log-f0 {})",
                                p.utterance_id, t, p.target_mel.num_frames(), p.target_f0.num_frames(),
                                p.target_logf0.num_frames()));
  if (t < 1) throw DataError(fmt::format("pair '{}' is empty", p.utterance_id));
  if (p.source_mel.num_bins() != p.target_mel.num_bins())
    throw DataError(fmt::format("pair '{}': mel bin counts differ", p.utterance_id));
}

CorpusBuild build_parallel_corpus(const std::vector<PhoneAlignment>& alignments, const Synthesizer& synth,
                                  const std::map<std::string, Waveform>& natural_audio, const AnalysisConfig& cfg,
                                  const CorpusBuildOptions& options) {
  cfg.validate();
  {
    std::set<std::string> ids;
    for (const auto& a : alignments)
      if (!ids.insert(a.utterance_id).second)
        throw DataError(fmt::format("duplicate utterance id '{}'", a.utterance_id));
  }

  struct Slot {
    std::optional<ParallelUtterancePair> pair;
    std::optional<CorpusTrim> trim;
    std::optional<CorpusSkip> skip;
  };
  std::vector<Slot> slots(alignments.size());

  parallel_for(alignments.size(), options.threads, [&](std::size_t i) {
    const auto& a = alignments[i];
    validate_alignment(a);
    auto reject = [&](std::string reason) {
      if (options.strict) throw DataError(fmt::format("utterance '{}': {}", a.utterance_id, reason));
      slots[i].skip = CorpusSkip{a.utterance_id, std::move(reason)};
    };
    const auto audio = natural_audio.find(a.utterance_id);
    if (audio == natural_audio.end()) return reject("missing audio");
    const Waveform& wav = audio->second;
    if (wav.sample_rate != cfg.sample_rate)
      return reject(fmt::format("sample rate {} differs from analysis rate {}", wav.sample_rate, cfg.sample_rate));

    ParallelUtterancePair p;
    p.utterance_id = a.utterance_id;
    p.speaker_id = a.speaker_id;
    p.target_mel = mel_spectrogram(wav, cfg);
    p.target_f0 = estimate_f0(wav, cfg.hop_length, options.pitch);

    const int want = a.total_frames();
    const int have = p.target_mel.num_frames();
    if (std::abs(have - want) > 1)
      return reject(fmt::format("natural audio has {} frames, alignment has {}", have, want));
    if (have != want) {
      slots[i].trim = CorpusTrim{a.utterance_id, have, want};
      Eigen::MatrixXf fixed(want, p.target_mel.num_bins());
      const int keep = std::min(have, want);
      fixed.topRows(keep) = p.target_mel.frames.topRows(keep);
      if (want > have) fixed.row(want - 1) = p.target_mel.frames.row(have - 1);
      p.target_mel.frames = std::move(fixed);
      p.target_f0.f0_hz.resize(want, p.target_f0.f0_hz.back());
      p.target_f0.voiced.resize(want, p.target_f0.voiced.back());
    }
    p.target_logf0 = log_f0(p.target_f0);
    p.source_mel = synth.synthesize(a);
    if (p.source_mel.num_frames() != want)
      throw DataError(fmt::format("synthesizer produced {} frames for '{}', expected {}", p.source_mel.num_frames(),
                                  a.utterance_id, want));
    validate_pair(p);
    slots[i].pair = std::move(p);
  });

  CorpusBuild build;
  for (auto& s : slots) {
    if (s.pair) build.pairs.push_back(std::move(*s.pair));
    if (s.trim) build.trims.push_back(*s.trim);
    if (s.skip) build.skipped.push_back(*s.skip);
  }
  auto by_id = [](const auto& x, const auto& y) { return x.utterance_id < y.utterance_id; };
  std::sort(build.pairs.begin(), build.pairs.end(), by_id);
  std::sort(build.trims.begin(), build.trims.end(), by_id);
  std::sort(build.skipped.begin(), build.skipped.end(), by_id);
  return build;
}

namespace {

struct PairFiles {
  std::vector<std::uint8_t> source, target;
  std::string f0_csv, meta;
};

std::string pair_hash(const PairFiles& f) {
  Sha256 h;
  h.update(f.source);
  h.update(f.target);
  h.update(f.f0_csv);
  h.update(f.meta);
  return to_hex(h.finish());
}

std::string manifest_digest(nlohmann::json manifest) {
  manifest.erase("manifest_hash");
  return to_hex(sha256(manifest.dump()));
}

}  // namespace

nlohmann::json write_corpus(const std::string& dir, const CorpusBuild& build, const AnalysisConfig& cfg,
                            std::uint64_t seed) {
  fs::create_directories(fs::path(dir) / "pairs");
  nlohmann::json utterances = nlohmann::json::array();
  std::set<std::string> speakers;
  long total = 0;
  for (const auto& p : build.pairs) {
    validate_pair(p);
    const fs::path pdir = fs::path(dir) / "pairs" / p.utterance_id;
    fs::create_directories(pdir);
    PairFiles files;
    files.source = encode_mel(p.source_mel);
    files.target = encode_mel(p.target_mel);
    files.f0_csv = f0_to_csv(p.target_f0);
    files.meta = nlohmann::json{{"utterance_id", p.utterance_id},
                                {"speaker_id", p.speaker_id},
                                {"frames", p.num_frames()},
                                {"mel_bins", p.source_mel.num_bins()}}
                     .dump(2) +
                 "\n";
    write_file_bytes((pdir / "source.mel").string(), files.source);
    write_file_bytes((pdir / "target.mel").string(), files.target);
    write_text_file((pdir / "f0.csv").string(), files.f0_csv);
    write_text_file((pdir / "meta.json").string(), files.meta);
    utterances.push_back({{"id", p.utterance_id},
                          {"speaker", p.speaker_id},
                          {"frames", p.num_frames()},
                          {"hash", pair_hash(files)}});
    speakers.insert(p.speaker_id);
    total += p.num_frames();
  }
  nlohmann::json trims = nlohmann::json::array();
  for (const auto& t : build.trims)
    trims.push_back({{"id", t.utterance_id}, {"natural_frames", t.natural_frames}, {"alignment_frames", t.alignment_frames}});
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& s : build.skipped) skipped.push_back({{"id", s.utterance_id}, {"reason", s.reason}});

  nlohmann::json manifest = {{"format", "vf-corpus/1"},
                             {"seed", seed},
                             {"analysis", analysis_config_to_json(cfg)},
                             {"pair_count", build.pairs.size()},
                             {"utterances", utterances},
                             {"speakers", speakers},
                             {"total_frames", total},
                             {"trims", trims},
                             {"skipped", skipped}};
  manifest["manifest_hash"] = manifest_digest(manifest);
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return manifest;
}

nlohmann::json read_manifest(const std::string& dir) {
  const auto path = (fs::path(dir) / "manifest.json").string();
  if (!fs::exists(path)) throw DataError(fmt::format("no corpus manifest at '{}'", path));
  auto manifest = nlohmann::json::parse(read_text_file(path));
  if (manifest.value("format", "") != "vf-corpus/1") throw DataError("corpus manifest: unsupported format");
  if (manifest.value("manifest_hash", "") != manifest_digest(manifest))
    throw DataError("corpus manifest: hash does not verify");
  return manifest;
}

std::vector<ParallelUtterancePair> load_corpus(const std::string& dir) {
  const auto manifest = read_manifest(dir);
  const auto cfg = analysis_config_from_json(manifest.at("analysis"));
  std::vector<ParallelUtterancePair> pairs;
  for (const auto& u : manifest.at("utterances")) {
    const std::string id = u.at("id");
    const fs::path pdir = fs::path(dir) / "pairs" / id;
    PairFiles files;
    files.source = read_file_bytes((pdir / "source.mel").string());
    files.target = read_file_bytes((pdir / "target.mel").string());
    files.f0_csv = read_text_file((pdir / "f0.csv").string());
    files.meta = read_text_file((pdir / "meta.json").string());
    if (pair_hash(files) != u.at("hash").get<std::string>())
      throw DataError(fmt::format("corpus pair '{}': content hash mismatch", id));
    ParallelUtterancePair p;
    p.utterance_id = id;
    p.speaker_id = u.at("speaker");
    p.source_mel = decode_mel(files.source, cfg.hop_length, cfg.sample_rate);
    p.target_mel = decode_mel(files.target, cfg.hop_length, cfg.sample_rate);
    p.target_f0 = f0_from_csv(files.f0_csv);
    p.target_logf0 = log_f0(p.target_f0);
    validate_pair(p);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace vf
