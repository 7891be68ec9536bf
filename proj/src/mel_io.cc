#include "vf/mel_io.h"

#include <cstring>
#include <filesystem>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {

std::vector<std::uint8_t> encode_mel(const MelSpectrogram& m) {
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>("MELF"), 4});
  w.u32(kMelFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.num_frames()));
  w.u32(static_cast<std::uint32_t>(m.num_bins()));
  for (int t = 0; t < m.num_frames(); ++t)
    for (int b = 0; b < m.num_bins(); ++b) w.f32(m.frames(t, b));
  return std::move(w.buffer());
}

MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, int hop_length, int sample_rate) {
  ByteReader r(bytes, "mel blob");
  if (std::memcmp(r.bytes(4).data(), "MELF", 4) != 0) throw DataError("mel blob: bad magic");
  const auto version = r.u32();
  if (version != kMelFormatVersion) throw DataError(fmt::format("mel blob: unsupported version {}", version));
  const auto frames = r.u32();
  const auto bins = r.u32();
  if (static_cast<std::uint64_t>(frames) * bins * 4 != r.remaining())
    throw DataError("mel blob: payload size does not match header");
  MelSpectrogram m;
  m.hop_length = hop_length;
  m.sample_rate = sample_rate;
  m.frames.resize(frames, bins);
  for (std::uint32_t t = 0; t < frames; ++t)
    for (std::uint32_t b = 0; b < bins; ++b) m.frames(t, b) = r.f32();
  return m;
}

nlohmann::json analysis_config_to_json(const AnalysisConfig& cfg) {
  return {{"sample_rate", cfg.sample_rate}, {"fft_size", cfg.fft_size},   {"window_size", cfg.window_size},
          {"hop_length", cfg.hop_length},   {"mel_bins", cfg.mel_bins},   {"fmin", cfg.fmin},
          {"fmax", cfg.fmax},               {"log_floor", cfg.log_floor}};
}

AnalysisConfig analysis_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("analysis config must be a JSON object");
  AnalysisConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (key == "sample_rate") cfg.sample_rate = value.get<int>();
    else if (key == "fft_size") cfg.fft_size = value.get<int>();
    else if (key == "window_size") cfg.window_size = value.get<int>();
    else if (key == "hop_length") cfg.hop_length = value.get<int>();
    else if (key == "mel_bins") cfg.mel_bins = value.get<int>();
    else if (key == "fmin") cfg.fmin = value.get<double>();
    else if (key == "fmax") cfg.fmax = value.get<double>();
    else if (key == "log_floor") cfg.log_floor = value.get<double>();
    else throw UsageError(fmt::format("unknown analysis config key '{}'", key));
  }
  cfg.validate();
  return cfg;
}

void write_mel_file(const std::string& path, const MelSpectrogram& m, const AnalysisConfig& cfg) {
  write_file_bytes(path, encode_mel(m));
  write_text_file(path + ".json", analysis_config_to_json(cfg).dump(2) + "\n");
}

MelSpectrogram read_mel_file(const std::string& path) {
  AnalysisConfig cfg;
  if (std::filesystem::exists(path + ".json"))
    cfg = analysis_config_from_json(nlohmann::json::parse(read_text_file(path + ".json")));
  return decode_mel(read_file_bytes(path), cfg.hop_length, cfg.sample_rate);
}

}  // namespace vf
