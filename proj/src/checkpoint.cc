#include "vf/checkpoint.h"

#include <cstring>

#include <fmt/core.h>

#include "vf/util.h"

namespace vf {

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>("VFCK"), 4});
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.str(c.config.dump());
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    std::size_t n = 1;
    for (auto d : t.dims) {
      w.u32(d);
      n *= d;
    }
    if (n != t.data.size()) throw DataError(fmt::format("checkpoint tensor '{}': data size mismatch", t.name));
    for (float v : t.data) w.f32(v);
  }
  const Digest d = sha256(w.buffer());
  w.bytes(d);
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw DataError("corrupt checkpoint: file too short");
  if (std::memcmp(bytes.data(), "VFCK", 4) != 0) throw DataError("corrupt checkpoint: bad magic");
  {
    ByteReader head(bytes.subspan(4, 4), "checkpoint header");
    const auto version = head.u32();
    if (version != kCheckpointVersion)
      throw DataError(fmt::format("unsupported checkpoint version {} (expected {})", version, kCheckpointVersion));
  }
  if (bytes.size() < 8 + 32) throw DataError("corrupt checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 32);
  const Digest expect = sha256(body);
  if (std::memcmp(expect.data(), bytes.data() + body.size(), 32) != 0)
    throw DataError("corrupt checkpoint: content hash mismatch");

  ByteReader r(body, "corrupt checkpoint:");
  r.bytes(8);
  Checkpoint c;
  const auto kind = r.u8();
  if (kind != static_cast<std::uint8_t>(CheckpointKind::kVoiceFilter) &&
      kind != static_cast<std::uint8_t>(CheckpointKind::kEmbedder))
    throw DataError(fmt::format("corrupt checkpoint: unknown model kind {}", kind));
  c.kind = static_cast<CheckpointKind>(kind);
  c.config = nlohmann::json::parse(r.str());
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str();
    const auto nd = r.u32();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < nd; ++k) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    if (n * 4 > r.remaining()) throw DataError("corrupt checkpoint: tensor data truncated");
    t.data.resize(n);
    for (auto& v : t.data) v = r.f32();
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw DataError("corrupt checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) { write_file_bytes(path, encode_checkpoint(c)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

namespace {

CheckpointTensor to_tensor(const std::string& name, const Eigen::MatrixXf& m) {
  CheckpointTensor t{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index col = 0; col < m.cols(); ++col) t.data.push_back(m(r, col));
  return t;
}

void append(std::vector<CheckpointTensor>& out, const std::string& prefix, const ParameterSet<float>& p) {
  for (std::size_t i = 0; i < p.size(); ++i) out.push_back(to_tensor(prefix + p.name(i), p[i]));
}

void restore(const Checkpoint& c, const std::string& prefix, ParameterSet<float>& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto* t = c.find(prefix + p.name(i));
    if (!t) throw DataError(fmt::format("checkpoint is missing tensor '{}{}'", prefix, p.name(i)));
    if (t->dims.size() != 2 || t->dims[0] != p[i].rows() || t->dims[1] != p[i].cols())
      throw DataError(fmt::format("checkpoint tensor '{}{}' has the wrong shape", prefix, p.name(i)));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < p[i].rows(); ++r)
      for (Eigen::Index col = 0; col < p[i].cols(); ++col) p[i](r, col) = t->data[k++];
  }
}

}  // namespace

Checkpoint pack_voice_filter(const VoiceFilterModel& model, const AdamState* optimizer, const nlohmann::json& meta) {
  Checkpoint c;
  c.kind = CheckpointKind::kVoiceFilter;
  c.config = {{"kind", "voice_filter"}, {"model", model.config().to_json()}, {"meta", meta}};
  append(c.tensors, "param/", model.params());
  append(c.tensors, "buffer/", model.buffers());
  if (optimizer) {
    c.config["optimizer"] = {{"type", "adam"}, {"step", optimizer->step}};
    append(c.tensors, "adam.m/", optimizer->m);
    append(c.tensors, "adam.v/", optimizer->v);
  }
  return c;
}

VoiceFilterModel unpack_voice_filter(const Checkpoint& c, AdamState* optimizer) {
  if (c.kind != CheckpointKind::kVoiceFilter) throw DataError("checkpoint does not hold a voice filter model");
  VoiceFilterModel model(VoiceFilterConfig::from_json(c.config.at("model")));
  restore(c, "param/", model.params());
  restore(c, "buffer/", model.buffers());
  if (optimizer) {
    *optimizer = AdamState::for_params(model.params());
    if (c.config.contains("optimizer")) {
      optimizer->step = c.config["optimizer"].at("step").get<std::int64_t>();
      restore(c, "adam.m/", optimizer->m);
      restore(c, "adam.v/", optimizer->v);
    }
  }
  return model;
}

Checkpoint pack_embedder(const EmbedderModel& model, const nlohmann::json& meta) {
  Checkpoint c;
  c.kind = CheckpointKind::kEmbedder;
  c.config = {{"kind", "embedder"}, {"model", model.config().to_json()}, {"meta", meta}};
  append(c.tensors, "param/", model.params());
  append(c.tensors, "buffer/", model.buffers());
  return c;
}

EmbedderModel unpack_embedder(const Checkpoint& c) {
  if (c.kind != CheckpointKind::kEmbedder) throw DataError("checkpoint does not hold a speaker embedder");
  EmbedderModel model(EmbedderConfig::from_json(c.config.at("model")));
  restore(c, "param/", model.params());
  restore(c, "buffer/", model.buffers());
  return model;
}

}  // namespace vf
