#include "seqdiff/checkpoint.hpp"

#include "seqdiff/binary_io.hpp"
#include "seqdiff/error.hpp"

namespace seqdiff {

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out = "SDMC";
  binary::put<std::uint32_t>(out, kCheckpointVersion);
  binary::put<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.kind));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arch.size()));
  for (std::uint32_t a : ckpt.arch) binary::put(out, a);
  binary::put<std::uint64_t>(out, ckpt.parameters.size());
  for (float p : ckpt.parameters) binary::put(out, p);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  binary::Reader r(bytes, "SDMC");
  if (r.take(4, "magic") != "SDMC") throw ParseError("not a SDMC file", 0);
  const std::size_t version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kCheckpointVersion) {
    throw ParseError("SDMC: unsupported version", version_at);
  }
  Checkpoint c;
  const std::size_t kind_at = r.offset();
  const auto kind = r.get<std::uint8_t>("kind");
  if (kind > static_cast<std::uint8_t>(ModelKind::transition)) {
    throw ParseError("SDMC: unknown model kind", kind_at);
  }
  c.kind = static_cast<ModelKind>(kind);
  const auto arch_count = r.get<std::uint32_t>("arch count");
  if (arch_count > 64) throw ParseError("SDMC: implausible arch count", r.offset() - 4);
  for (std::uint32_t i = 0; i < arch_count; ++i) c.arch.push_back(r.get<std::uint32_t>("arch"));
  const std::size_t count_at = r.offset();
  const auto count = r.get<std::uint64_t>("parameter count");
  if (count > r.remaining() / sizeof(float)) throw ParseError("SDMC: parameter block truncated", count_at);
  c.parameters.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) c.parameters.push_back(r.get<float>("parameter"));
  if (r.remaining() != 0) throw ParseError("SDMC: trailing bytes", r.offset());
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  binary::write_file(path.string(), encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binary::read_file(path.string()));
}

Checkpoint denoiser_checkpoint(const DenoiserNet<float>& net) {
  Checkpoint c;
  c.kind = ModelKind::denoiser;
  c.arch = {static_cast<std::uint32_t>(net.arch().channels),
            static_cast<std::uint32_t>(net.arch().stages),
            static_cast<std::uint32_t>(net.arch().time_frequencies)};
  c.parameters.assign(net.parameters().begin(), net.parameters().end());
  return c;
}

DenoiserNet<float> denoiser_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != ModelKind::denoiser) throw IoError("checkpoint is not a denoiser");
  if (ckpt.arch.size() != 3) throw IoError("denoiser checkpoint: expected 3 arch fields");
  DenoiserArch arch{static_cast<int>(ckpt.arch[0]), static_cast<int>(ckpt.arch[1]),
                    static_cast<int>(ckpt.arch[2])};
  DenoiserNet<float> net(arch, 0);
  if (net.parameter_count() != ckpt.parameters.size()) {
    throw IoError("denoiser checkpoint: parameter count does not match architecture");
  }
  std::copy(ckpt.parameters.begin(), ckpt.parameters.end(), net.parameters().begin());
  return net;
}

}  // namespace seqdiff
