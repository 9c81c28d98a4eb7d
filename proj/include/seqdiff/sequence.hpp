#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "seqdiff/field.hpp"

namespace seqdiff {

enum class SequenceKind { ar1_gaussian, moving_blobs };

struct SequenceConfig {
  SequenceKind kind = SequenceKind::moving_blobs;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t length = 20;
  double rho = 0.9;           // AR(1) only
  double motion_level = 1.0;  // blobs: pixels per frame
  int num_blobs = 3;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on empty shapes, length 0, rho outside [0,1],
  /// negative motion, or num_blobs < 1.
  void validate() const;
};

/// Blob center as (row, col) in pixels.
using Point = std::array<double, 2>;

/// Data-space frames. Generated values are rounded to float precision so
/// that SEQF round trips are exact.
struct Sequence {
  std::vector<Field> frames;
  SequenceConfig config;
  std::vector<std::vector<Point>> centers;  // [frame][blob], blobs only
  // AR(1) frames are clamp(offset + scale * x) of the latent Gaussian x.
  double offset = 0.0;
  double scale = 1.0;
};

/// Per-pixel standard deviations ~ U[0.5, 1]; x^0 stationary, zero mean;
/// frames are clamp(0.5 + 0.1 x, 0, 1).
Sequence gen_ar1(const SequenceConfig& config);

/// Gaussian bumps with FWHM ~ U[2, 5] px and amplitude ~ U[0.5, 1] moving at
/// `motion_level` px/frame in a random direction, reflecting specularly off
/// the box that keeps each bump three standard deviations inside the frame.
/// Pixels are min(1, sum of bumps).
Sequence gen_blobs(const SequenceConfig& config);

/// Dispatches on config.kind.
Sequence generate(const SequenceConfig& config);

/// SEQF: "SEQF", u32 version = 1, u32 height, u32 width, u32 frame_count,
/// then frame-major row-major f32 values, all little-endian.
std::string encode_seqf(const std::vector<Field>& frames);
/// Throws ParseError with the byte offset of the malformed field.
std::vector<Field> decode_seqf(const std::string& bytes);
void save_sequence(const std::vector<Field>& frames, const std::filesystem::path& path);
std::vector<Field> load_sequence(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255) of one data-space frame.
std::string encode_pgm(const Field& frame);
void export_pgm(const Field& frame, const std::filesystem::path& path);

}  // namespace seqdiff
