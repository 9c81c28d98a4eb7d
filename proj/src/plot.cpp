#include "seqdiff/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "seqdiff/binary_io.hpp"
#include "seqdiff/error.hpp"
#include "seqdiff/sweep.hpp"

namespace seqdiff {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

std::string num(double v) { return format_fixed(v, 2); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

std::vector<Series> psnr_vs_steps(const std::vector<RunRow>& rows) {
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const RunRow& r : rows) {
    if (r.frame < 1) continue;
    auto& cell = acc[r.strategy][r.n_prime];
    cell.first += r.psnr_db;
    ++cell.second;
  }
  std::vector<Series> out;
  for (const auto& [name, cells] : acc) {
    Series s{name, {}};
    for (const auto& [n, c] : cells) s.points.push_back({static_cast<double>(n), c.first / c.second});
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Series> psnr_vs_motion(const std::vector<RunRow>& rows, int target) {
  std::map<std::string, std::set<int>> steps;
  for (const RunRow& r : rows) {
    if (r.frame >= 1) steps[r.strategy].insert(r.n_prime);
  }
  std::vector<RunRow> chosen;
  for (const RunRow& r : rows) {
    if (r.frame < 1) continue;
    const auto& available = steps[r.strategy];
    const int use = available.count(target) ? target : *available.rbegin();
    if (r.n_prime == use) chosen.push_back(r);
  }
  const auto bins = best_step_by_motion(chosen);
  std::map<std::string, Series> acc;
  for (const BestStepRow& b : bins) {
    Series& s = acc[b.strategy];
    s.name = b.strategy;
    s.points.push_back({0.5 * (b.motion_lo + b.motion_hi), b.best_psnr_db});
  }
  std::vector<Series> out;
  for (auto& [name, s] : acc) out.push_back(std::move(s));
  return out;
}

std::vector<Series> best_step_vs_motion(const std::vector<RunRow>& rows) {
  std::map<std::string, Series> acc;
  for (const BestStepRow& b : best_step_by_motion(rows)) {
    Series& s = acc[b.strategy];
    s.name = b.strategy;
    s.points.push_back({0.5 * (b.motion_lo + b.motion_hi), static_cast<double>(b.best_n_prime)});
  }
  std::vector<Series> out;
  for (auto& [name, s] : acc) out.push_back(std::move(s));
  return out;
}

}  // namespace

std::string plot_kind_name(PlotKind kind) {
  switch (kind) {
    case PlotKind::psnr_vs_steps: return "psnr-vs-steps";
    case PlotKind::psnr_vs_motion: return "psnr-vs-motion";
    case PlotKind::best_step_vs_motion: return "best-step-vs-motion";
  }
  return "unknown";
}

PlotKind parse_plot_kind(const std::string& name) {
  for (PlotKind k : {PlotKind::psnr_vs_steps, PlotKind::psnr_vs_motion, PlotKind::best_step_vs_motion}) {
    if (plot_kind_name(k) == name) return k;
  }
  throw InvalidArgument("unknown plot kind '" + name + "'");
}

std::string render_plot(const std::vector<RunRow>& rows, PlotKind kind, int n_prime) {
  std::vector<Series> series;
  std::string x_label, y_label;
  bool log_x = false;
  switch (kind) {
    case PlotKind::psnr_vs_steps:
      series = psnr_vs_steps(rows);
      x_label = "diffusion steps N'";
      y_label = "PSNR [dB]";
      log_x = true;
      break;
    case PlotKind::psnr_vs_motion:
      series = psnr_vs_motion(rows, n_prime);
      x_label = "motion (mean abs. frame difference)";
      y_label = "PSNR [dB]";
      break;
    case PlotKind::best_step_vs_motion:
      series = best_step_vs_motion(rows);
      x_label = "motion (mean abs. frame difference)";
      y_label = "best N'";
      break;
  }

  auto tx = [&](double x) { return log_x ? std::log10(std::max(x, 1e-12)) : x; };
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const Series& s : series) {
    for (auto [x, y] : s.points) {
      if (!any) {
        x0 = x1 = tx(x);
        y0 = y1 = y;
        any = true;
      }
      x0 = std::min(x0, tx(x));
      x1 = std::max(x1, tx(x));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 - x0 < 1e-9) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-9) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (tx(x) - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" +
         num(kHeight) + "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) +
         "\" y2=\"" + num(kTop + ph) + "\"/>\n";
  svg += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
         num(kTop + ph) + "\"/>\n";
  svg += "</g>\n";
  svg += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double xv = log_x ? std::pow(10.0, fx) : fx;
    svg += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(fy) + 4) + "\" text-anchor=\"end\">" +
           num(fy) + "</text>\n";
    svg += "<text x=\"" + num(kLeft + (fx - x0) / (x1 - x0) * pw) + "\" y=\"" + num(kTop + ph + 16) +
           "\" text-anchor=\"middle\">" + num(xv) + "</text>\n";
  }
  svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 18) +
         "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num(kTop + ph / 2) + ")\">" + escape(y_label) + "</text>\n";
  svg += "</g>\n";

  if (!any) {
    svg += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kTop + ph / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">no data</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : s.points) {
      if (!pts.empty()) pts += ' ';
      pts += num(px(x)) + "," + num(py(y));
    }
    svg += "<polyline id=\"series-" + escape(s.name) + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (auto [x, y] : s.points) {
      svg += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    svg += "<line x1=\"" + num(kWidth - kRight + 16) + "\" y1=\"" + num(ly) + "\" x2=\"" +
           num(kWidth - kRight + 40) + "\" y2=\"" + num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(kWidth - kRight + 46) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::filesystem::path& csv, PlotKind kind, const std::filesystem::path& svg,
               int n_prime) {
  const auto rows = parse_run_csv(binary::read_file(csv.string()));
  binary::write_file(svg.string(), render_plot(rows, kind, n_prime));
}

}  // namespace seqdiff
