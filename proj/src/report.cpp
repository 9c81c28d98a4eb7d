#include "seqdiff/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <tuple>

#include "seqdiff/error.hpp"

namespace seqdiff {

void sort_rows(std::vector<RunRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) {
    return std::tie(a.sequence_id, a.frame, a.strategy, a.n_prime) <
           std::tie(b.sequence_id, b.frame, b.strategy, b.n_prime);
  });
}

std::string format_fixed(double value, int digits) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, digits);
  if (ec != std::errc()) throw InvalidArgument("format_fixed: value out of range");
  std::string s(buf, end);
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string format_run_csv(const std::vector<RunRow>& rows) {
  std::string out = kRunCsvHeader;
  out += '\n';
  for (const RunRow& r : rows) {
    if (r.strategy.find_first_of(",\n\"") != std::string::npos) {
      throw InvalidArgument("run csv: strategy names may not contain separators");
    }
    out += std::to_string(r.sequence_id) + ',' + std::to_string(r.frame) + ',' + r.strategy + ',' +
           std::to_string(r.n_prime) + ',' + format_fixed(r.psnr_db, 4) + ',' +
           format_fixed(r.motion, 6) + ',' + format_fixed(r.wall_s, 6) + ',' +
           std::to_string(r.seed) + ',' + std::to_string(r.mask_id) + '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line_no, const char* column) {
  T value{};
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || s.empty()) {
    throw ParseError(std::string("run csv: bad ") + column + " '" + s + "'", line_no);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ParseError(std::string("run csv: non-finite ") + column, line_no);
  }
  return value;
}

}  // namespace

std::vector<RunRow> parse_run_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("run csv: missing header", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunCsvHeader) throw ParseError("run csv: unexpected header", 1);
  std::vector<RunRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 9) {
      throw ParseError("run csv: expected 9 fields, got " + std::to_string(f.size()), line_no);
    }
    RunRow r;
    r.sequence_id = parse_number<std::uint64_t>(f[0], line_no, "sequence_id");
    r.frame = parse_number<int>(f[1], line_no, "frame");
    if (f[2].empty()) throw ParseError("run csv: empty strategy", line_no);
    r.strategy = f[2];
    r.n_prime = parse_number<int>(f[3], line_no, "n_prime");
    r.psnr_db = parse_number<double>(f[4], line_no, "psnr_db");
    r.motion = parse_number<double>(f[5], line_no, "motion");
    r.wall_s = parse_number<double>(f[6], line_no, "wall_s");
    r.seed = parse_number<std::uint64_t>(f[7], line_no, "seed");
    r.mask_id = parse_number<std::uint64_t>(f[8], line_no, "mask_id");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace seqdiff
