#include "seqdiff/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "seqdiff/binary_io.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/rng.hpp"

namespace seqdiff {

namespace {

constexpr std::uint32_t kSeqfVersion = 1;
constexpr double kFwhmToSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

double to_float_precision(double v) { return static_cast<double>(static_cast<float>(v)); }

// Reflects c into [lo, hi], flipping v on each bounce.
void reflect(double& c, double& v, double lo, double hi) {
  if (hi <= lo) {
    c = 0.5 * (lo + hi);
    v = 0.0;
    return;
  }
  while (c < lo || c > hi) {
    if (c > hi) c = 2.0 * hi - c;
    else c = 2.0 * lo - c;
    v = -v;
  }
}

struct Blob {
  double sigma;
  double amplitude;
  Point center;
  Point velocity;
};

}  // namespace

void SequenceConfig::validate() const {
  if (height == 0 || width == 0) throw InvalidArgument("sequence: empty frame shape");
  if (length == 0) throw InvalidArgument("sequence: length must be at least 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("sequence: rho must lie in [0, 1]");
  if (!(motion_level >= 0.0) || !std::isfinite(motion_level)) {
    throw InvalidArgument("sequence: motion_level must be nonnegative");
  }
  if (num_blobs < 1) throw InvalidArgument("sequence: num_blobs must be positive");
}

Sequence gen_ar1(const SequenceConfig& config) {
  config.validate();
  if (config.kind != SequenceKind::ar1_gaussian) throw InvalidArgument("gen_ar1: wrong kind");
  Rng rng(derive_seed(config.seed, {0xa41}));
  const std::size_t n = config.height * config.width;
  std::vector<double> sd(n);
  for (double& s : sd) s = rng.uniform(0.5, 1.0);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = sd[i] * rng.normal();
  const double innovation = std::sqrt(1.0 - config.rho * config.rho);

  Sequence seq;
  seq.config = config;
  seq.offset = 0.5;
  seq.scale = 0.1;
  for (std::size_t t = 0; t < config.length; ++t) {
    if (t > 0) {
      for (std::size_t i = 0; i < n; ++i) x[i] = config.rho * x[i] + innovation * sd[i] * rng.normal();
    }
    Field f(config.height, config.width, 0.0, Space::data);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = to_float_precision(std::clamp(seq.offset + seq.scale * x[i], 0.0, 1.0));
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

Sequence gen_blobs(const SequenceConfig& config) {
  config.validate();
  if (config.kind != SequenceKind::moving_blobs) throw InvalidArgument("gen_blobs: wrong kind");
  Rng rng(derive_seed(config.seed, {0xb10b}));
  const double H = static_cast<double>(config.height);
  const double W = static_cast<double>(config.width);
  std::vector<Blob> blobs(static_cast<std::size_t>(config.num_blobs));
  for (Blob& b : blobs) {
    b.sigma = rng.uniform(2.0, 5.0) / kFwhmToSigma;
    b.amplitude = rng.uniform(0.5, 1.0);
    const double m = 3.0 * b.sigma;
    b.center = {rng.uniform(m, std::max(m, H - 1.0 - m)), rng.uniform(m, std::max(m, W - 1.0 - m))};
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    b.velocity = {config.motion_level * std::sin(angle), config.motion_level * std::cos(angle)};
  }

  Sequence seq;
  seq.config = config;
  for (std::size_t t = 0; t < config.length; ++t) {
    if (t > 0) {
      for (Blob& b : blobs) {
        const double m = 3.0 * b.sigma;
        b.center[0] += b.velocity[0];
        b.center[1] += b.velocity[1];
        reflect(b.center[0], b.velocity[0], m, H - 1.0 - m);
        reflect(b.center[1], b.velocity[1], m, W - 1.0 - m);
      }
    }
    Field f(config.height, config.width, 0.0, Space::data);
    std::vector<Point> centers;
    for (const Blob& b : blobs) {
      const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
      for (std::size_t r = 0; r < config.height; ++r) {
        const double dr = static_cast<double>(r) - b.center[0];
        for (std::size_t c = 0; c < config.width; ++c) {
          const double dc = static_cast<double>(c) - b.center[1];
          f(r, c) += b.amplitude * std::exp(-(dr * dr + dc * dc) * inv);
        }
      }
      centers.push_back(b.center);
    }
    for (double& v : f.values()) v = to_float_precision(std::min(1.0, v));
    seq.frames.push_back(std::move(f));
    seq.centers.push_back(std::move(centers));
  }
  return seq;
}

Sequence generate(const SequenceConfig& config) {
  return config.kind == SequenceKind::ar1_gaussian ? gen_ar1(config) : gen_blobs(config);
}

std::string encode_seqf(const std::vector<Field>& frames) {
  if (frames.empty()) throw InvalidArgument("SEQF: no frames");
  for (const Field& f : frames) require_same_shape(frames.front(), f, "SEQF");
  std::string out = "SEQF";
  binary::put<std::uint32_t>(out, kSeqfVersion);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(frames.front().height()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(frames.front().width()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(frames.size()));
  out.reserve(out.size() + frames.size() * frames.front().size() * sizeof(float));
  for (const Field& f : frames) {
    for (double v : f.values()) binary::put<float>(out, static_cast<float>(v));
  }
  return out;
}

std::vector<Field> decode_seqf(const std::string& bytes) {
  binary::Reader r(bytes, "SEQF");
  if (bytes.size() < 4 || bytes.compare(0, 4, "SEQF") != 0) throw ParseError("not a SEQF file", 0);
  r.take(4, "magic");
  const std::size_t version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kSeqfVersion) {
    throw ParseError("SEQF: unsupported version", version_at);
  }
  const std::size_t shape_at = r.offset();
  const std::size_t h = r.get<std::uint32_t>("height");
  const std::size_t w = r.get<std::uint32_t>("width");
  const std::size_t count = r.get<std::uint32_t>("frame count");
  if (h == 0 || w == 0 || count == 0) throw ParseError("SEQF: empty shape", shape_at);
  const std::size_t data_at = r.offset();
  if (r.remaining() / sizeof(float) / (h * w) < count) {
    throw ParseError("SEQF: truncated frame data", data_at);
  }
  std::vector<Field> frames;
  frames.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    Field f(h, w, 0.0, Space::data);
    for (double& v : f.values()) v = static_cast<double>(r.get<float>("frame data"));
    frames.push_back(std::move(f));
  }
  if (r.remaining() != 0) throw ParseError("SEQF: trailing bytes", r.offset());
  return frames;
}

void save_sequence(const std::vector<Field>& frames, const std::filesystem::path& path) {
  binary::write_file(path.string(), encode_seqf(frames));
}

std::vector<Field> load_sequence(const std::filesystem::path& path) {
  return decode_seqf(binary::read_file(path.string()));
}

std::string encode_pgm(const Field& frame) {
  std::string out = "P5\n" + std::to_string(frame.width()) + " " + std::to_string(frame.height()) +
                    "\n255\n";
  for (double v : frame.values()) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  return out;
}

void export_pgm(const Field& frame, const std::filesystem::path& path) {
  binary::write_file(path.string(), encode_pgm(frame));
}

}  // namespace seqdiff
