#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace seqdiff {

inline constexpr const char* kRunCsvHeader =
    "sequence_id,frame,strategy,n_prime,psnr_db,motion,wall_s,seed,mask_id";

/// One reconstructed frame.
struct RunRow {
  std::uint64_t sequence_id = 0;
  int frame = 0;
  std::string strategy;
  int n_prime = 0;
  double psnr_db = 0.0;
  double motion = 0.0;
  double wall_s = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t mask_id = 0;
};

/// Sorts by (sequence_id, frame, strategy, n_prime).
void sort_rows(std::vector<RunRow>& rows);

/// Header plus one line per row, fixed-precision numbers.
std::string format_run_csv(const std::vector<RunRow>& rows);
/// Throws ParseError carrying the 1-based line number of the first bad line.
std::vector<RunRow> parse_run_csv(const std::string& text);

/// Fixed notation with `digits` decimals, independent of the locale.
std::string format_fixed(double value, int digits);

}  // namespace seqdiff
