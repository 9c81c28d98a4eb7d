#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdiff/denoiser.hpp"

namespace seqdiff {

enum class ModelKind : std::uint8_t { denoiser = 0, transition = 1 };

/// SDMC model container. Layout (all integers little-endian):
///
///   "SDMC"            4 bytes
///   version           u32 (= 1)
///   kind              u8  (ModelKind)
///   arch_count        u32
///   arch              arch_count x u32   (model-specific hyperparameters)
///   parameter_count   u64
///   parameters        parameter_count x f32 (IEEE-754, little-endian)
///
/// Parameters follow the canonical flat order of the model they belong to.
struct Checkpoint {
  ModelKind kind = ModelKind::denoiser;
  std::vector<std::uint32_t> arch;
  std::vector<float> parameters;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError with the byte offset of the first malformed field.
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Denoiser arch fields: channels, stages, time_frequencies.
Checkpoint denoiser_checkpoint(const DenoiserNet<float>& net);
DenoiserNet<float> denoiser_from_checkpoint(const Checkpoint& ckpt);

}  // namespace seqdiff
