#pragma once

#include <vector>

#include "seqdiff/field.hpp"

namespace seqdiff {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for data-space images with peak 1; kPsnrCap when MSE = 0.
double psnr(const Field& x, const Field& reference);

/// motion[t] = mean |frame_t - frame_{t-1}|, motion[0] = 0.
std::vector<double> motion(const std::vector<Field>& frames);

}  // namespace seqdiff
