#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include <fmt/core.h>

#include "vf/dsp.h"
#include "vf/util.h"

namespace vf {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

}  // namespace

Waveform load_wav(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  const std::span<const std::uint8_t> b(bytes);
  auto malformed = [&](const char* why) { return DataError(fmt::format("malformed WAV '{}': {}", path, why)); };

  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw malformed("missing RIFF/WAVE header");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = le32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (size > b.size() - body) {
      if (std::memcmp(b.data() + pos, "data", 4) == 0) throw malformed("data chunk truncated");
      throw malformed("chunk truncated");
    }
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (size < 16) throw malformed("fmt chunk too short");
      format = le16(b, body);
      channels = le16(b, body + 2);
      rate = le32(b, body + 4);
      bits = le16(b, body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw malformed("extensible fmt chunk too short");
        format = le16(b, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      data = b.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw malformed("no fmt chunk");
  if (!have_data) throw malformed("no data chunk");
  if (format != kFormatPcm) throw DataError(fmt::format("unsupported WAV codec {} in '{}'", format, path));
  if (bits != 16 && bits != 32) throw DataError(fmt::format("unsupported WAV bit depth {} in '{}'", bits, path));
  if (channels == 0) throw malformed("zero channels");
  if (rate == 0) throw malformed("zero sample rate");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
  const std::size_t n = data.size() / frame_bytes;
  if (n == 0) throw DataError(fmt::format("empty audio in '{}'", path));

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = i * frame_bytes;  // first channel only
    if (bits == 16) {
      const auto v = static_cast<std::int16_t>(le16(data, at));
      w.samples[i] = static_cast<float>(v / 32768.0);
    } else {
      const auto v = static_cast<std::int32_t>(le32(data, at));
      w.samples[i] = static_cast<float>(v / 2147483648.0);
    }
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  ByteWriter out;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  auto tag = [&](const char* t) { out.bytes({reinterpret_cast<const std::uint8_t*>(t), 4}); };
  auto u16 = [&](std::uint16_t v) {
    out.u8(static_cast<std::uint8_t>(v & 0xFF));
    out.u8(static_cast<std::uint8_t>(v >> 8));
  };
  tag("RIFF");
  out.u32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  out.u32(16);
  u16(kFormatPcm);
  u16(1);
  out.u32(static_cast<std::uint32_t>(w.sample_rate));
  out.u32(static_cast<std::uint32_t>(w.sample_rate) * 2);
  u16(2);
  u16(16);
  tag("data");
  out.u32(data_bytes);
  for (float s : w.samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::clamp(std::lround(c * 32768.0), -32768L, 32767L));
    u16(static_cast<std::uint16_t>(v));
  }
  write_file_bytes(path, out.buffer());
}

}  // namespace vf
