// MELF binary mel blobs and their JSON sidecars.
//
// Layout (little-endian): "MELF", u32 version, u32 T, u32 B, then T*B f32
// values in row-major order.
#ifndef VF_MEL_IO_H_
#define VF_MEL_IO_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vf/dsp.h"

namespace vf {

inline constexpr std::uint32_t kMelFormatVersion = 1;

std::vector<std::uint8_t> encode_mel(const MelSpectrogram& m);
// `hop_length` and `sample_rate` are not part of the blob; callers take them
// from the sidecar.
MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes, int hop_length, int sample_rate);

nlohmann::json analysis_config_to_json(const AnalysisConfig& cfg);
// Rejects unknown keys; missing keys keep their defaults.
AnalysisConfig analysis_config_from_json(const nlohmann::json& j);

// Writes `path` and `path + ".json"` carrying the analysis config.
void write_mel_file(const std::string& path, const MelSpectrogram& m, const AnalysisConfig& cfg);
MelSpectrogram read_mel_file(const std::string& path);

}  // namespace vf

#endif  // VF_MEL_IO_H_
