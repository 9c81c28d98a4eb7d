#include "seqdiff/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "seqdiff/error.hpp"

namespace seqdiff {

double psnr(const Field& x, const Field& reference) {
  require_same_shape(x, reference, "psnr");
  if (x.empty()) throw InvalidArgument("psnr: empty image");
  const double mse = squared_norm(x - reference) / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

std::vector<double> motion(const std::vector<Field>& frames) {
  if (frames.empty()) throw InvalidArgument("motion: empty sequence");
  std::vector<double> out(frames.size(), 0.0);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    require_same_shape(frames[t - 1], frames[t], "motion");
    double total = 0.0;
    for (std::size_t i = 0; i < frames[t].size(); ++i) total += std::abs(frames[t][i] - frames[t - 1][i]);
    out[t] = total / static_cast<double>(frames[t].size());
  }
  return out;
}

}  // namespace seqdiff
