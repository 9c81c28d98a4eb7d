#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "seqdiff/report.hpp"

namespace seqdiff {

enum class PlotKind { psnr_vs_steps, psnr_vs_motion, best_step_vs_motion };

/// "psnr-vs-steps", "psnr-vs-motion", "best-step-vs-motion".
std::string plot_kind_name(PlotKind kind);
PlotKind parse_plot_kind(const std::string& name);

/// Standalone SVG with axes, a legend and one polyline per strategy
/// (stroke ids "series-<strategy>"). Rows with frame 0 are ignored.
/// psnr-vs-motion uses each strategy's rows at N' = `n_prime` (or at its
/// largest N' when it has none there). Same rows give the same bytes.
std::string render_plot(const std::vector<RunRow>& rows, PlotKind kind, int n_prime = 4);

/// Reads a run CSV and writes the SVG. Malformed CSV raises ParseError.
void emit_plot(const std::filesystem::path& csv, PlotKind kind, const std::filesystem::path& svg,
               int n_prime = 4);

}  // namespace seqdiff
