// SPDX-License-Identifier: Apache-2.0
#include "oce/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string_view>

#include "oce/errors.hpp"
#include "oce/io.hpp"

namespace oce::figures {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void require_non_empty(const eval::EvaluationReport& report) {
  if (report.windows.empty()) throw ContractViolation("cannot plot an empty report");
}

std::string header(const PlotFrame& f, const std::string& title) {
  const double w = f.left + f.width + 30.0, h = f.top + f.height + 60.0;
  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
       "\" viewBox=\"0 0 " + num(w) + ' ' + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  return s;
}

std::string axes(const PlotFrame& f, const std::string& xlabel, const std::string& ylabel) {
  std::string s;
  s += "<rect x=\"" + num(f.left) + "\" y=\"" + num(f.top) + "\" width=\"" + num(f.width) +
       "\" height=\"" + num(f.height) + "\" fill=\"none\" stroke=\"black\"/>\n";
  const double step = (f.hi - f.lo) > 20.0 ? 5.0 : 2.0;
  for (double v = std::ceil(f.lo / step) * step; v <= f.hi + 1e-9; v += step) {
    s += "<line x1=\"" + num(f.x(v)) + "\" y1=\"" + num(f.top + f.height) + "\" x2=\"" + num(f.x(v)) +
         "\" y2=\"" + num(f.top + f.height + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(f.x(v)) + "\" y=\"" + num(f.top + f.height + 18) +
         "\" text-anchor=\"middle\">" + num(v) + "</text>\n";
    s += "<line x1=\"" + num(f.left - 5) + "\" y1=\"" + num(f.y(v)) + "\" x2=\"" + num(f.left) +
         "\" y2=\"" + num(f.y(v)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + num(f.left - 8) + "\" y=\"" + num(f.y(v) + 4) + "\" text-anchor=\"end\">" +
         num(v) + "</text>\n";
  }
  s += "<text x=\"" + num(f.left + f.width / 2) + "\" y=\"" + num(f.top + f.height + 40) +
       "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
  s += "<text transform=\"translate(18 " + num(f.top + f.height / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + escape(ylabel) + "</text>\n";
  return s;
}

std::string identity_line(const PlotFrame& f) {
  return "<line id=\"identity\" x1=\"" + num(f.x(f.lo)) + "\" y1=\"" + num(f.y(f.lo)) + "\" x2=\"" +
         num(f.x(f.hi)) + "\" y2=\"" + num(f.y(f.hi)) +
         "\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n";
}

}  // namespace

PlotFrame frame_for(const eval::EvaluationReport& report) {
  require_non_empty(report);
  double lo = report.windows.front().label, hi = lo;
  for (const auto& w : report.windows) {
    lo = std::min({lo, w.label, w.prediction});
    hi = std::max({hi, w.label, w.prediction});
  }
  PlotFrame f;
  f.lo = std::floor(lo - 1.0);
  f.hi = std::ceil(hi + 1.0);
  return f;
}

std::string boxplot_svg(const eval::EvaluationReport& report, const std::string& title) {
  const auto f = frame_for(report);
  const auto table = eval::per_concentration_table(report);
  std::string s = header(f, title) + axes(f, "true concentration [wt%]", "predicted concentration [wt%]");
  s += identity_line(f);
  const double half = 0.3 * f.width / (f.hi - f.lo);
  for (const auto& g : table) {
    const double cx = f.x(g.concentration);
    s += "<g class=\"box\" data-concentration=\"" + num(g.concentration) + "\" data-center-x=\"" +
         num(cx) + "\">\n";
    s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(f.y(g.whisker_low)) + "\" x2=\"" + num(cx) +
         "\" y2=\"" + num(f.y(g.q1)) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(f.y(g.q3)) + "\" x2=\"" + num(cx) + "\" y2=\"" +
         num(f.y(g.whisker_high)) + "\" stroke=\"black\"/>\n";
    s += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(f.y(g.q3)) + "\" width=\"" + num(2 * half) +
         "\" height=\"" + num(f.y(g.q1) - f.y(g.q3)) +
         "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(cx - half) + "\" y1=\"" + num(f.y(g.median)) + "\" x2=\"" +
         num(cx + half) + "\" y2=\"" + num(f.y(g.median)) + "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    for (double p : g.predictions) {
      if (p < g.whisker_low || p > g.whisker_high) {
        s += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(f.y(p)) +
             "\" r=\"1.5\" fill=\"none\" stroke=\"black\"/>\n";
      }
    }
    s += "</g>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string scatter_svg(const eval::EvaluationReport& report, const std::string& title) {
  const auto f = frame_for(report);
  std::string s = header(f, title) + axes(f, "true concentration [wt%]", "predicted concentration [wt%]");
  s += identity_line(f);
  for (const auto& w : report.windows) {
    s += "<circle cx=\"" + num(f.x(w.label)) + "\" cy=\"" + num(f.y(w.prediction)) +
         "\" r=\"1.5\" fill=\"#1f77b4\" fill-opacity=\"0.4\"/>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::filesystem::path> emit_figures(const eval::EvaluationReport& report,
                                                const std::filesystem::path& dir) {
  require_non_empty(report);
  const auto box = dir / "boxplot.svg";
  const auto scatter = dir / "scatter.svg";
  io::write_text(box, boxplot_svg(report, report.model + ": predictions per concentration"));
  io::write_text(scatter, scatter_svg(report, report.model + ": prediction vs label"));
  return {box, scatter};
}

}  // namespace oce::figures
