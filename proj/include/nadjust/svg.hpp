#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nadjust/adjust.hpp"

namespace nadjust {

struct SvgEllipse {
  EllipseSpec spec;
  std::string label;
  std::string stroke = "#1f77b4";
  bool dashed = false;
};

struct SvgMarker {
  double x = 0.0, y = 0.0;
  std::string label;
  std::string color = "#000000";
  bool cross = true;  // cross for estimates, dot otherwise
};

// Declarative figure: ellipses render in list order, so later entries sit
// on top; put the wider (adjusted) region first and the inner one second.
struct SvgFigure {
  std::string title;
  std::string x_label = "x";
  std::string y_label = "y";
  std::vector<SvgEllipse> ellipses;
  std::vector<SvgMarker> markers;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline std::string svg_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

// Standalone SVG text for the figure. Geometry uses one uniform world-to-
// screen scale on both axes so rotated ellipses keep their shape; all
// numbers are printed with fixed formatting, making the output byte-stable
// for identical input.
inline std::string render_svg(const SvgFigure& fig) {
  const double W = 640.0, H = 480.0;
  const double ml = 64.0, mr = 160.0, mt = 40.0, mb = 48.0;  // right margin hosts the legend

  // world bounding box over ellipse extents and markers
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  bool first = true;
  auto absorb = [&](double x, double y) {
    if (first) {
      x0 = x1 = x;
      y0 = y1 = y;
      first = false;
    } else {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  };
  for (const SvgEllipse& e : fig.ellipses) {
    // axis-aligned extent of the rotated ellipse: half-widths sqrt(r2*S_ii)
    const double hx = std::sqrt(std::max(0.0, e.spec.radius2 * e.spec.cov(0, 0)));
    const double hy = std::sqrt(std::max(0.0, e.spec.radius2 * e.spec.cov(1, 1)));
    absorb(e.spec.center[0] - hx, e.spec.center[1] - hy);
    absorb(e.spec.center[0] + hx, e.spec.center[1] + hy);
  }
  for (const SvgMarker& m : fig.markers) absorb(m.x, m.y);
  if (first) {
    x0 = y0 = -1.0;
    x1 = y1 = 1.0;
  }
  const double padx = 0.08 * std::max(x1 - x0, 1e-12), pady = 0.08 * std::max(y1 - y0, 1e-12);
  x0 -= padx;
  x1 += padx;
  y0 -= pady;
  y1 += pady;

  const double plot_w = W - ml - mr, plot_h = H - mt - mb;
  const double scale = std::min(plot_w / (x1 - x0), plot_h / (y1 - y0));
  const double cx_world = 0.5 * (x0 + x1), cy_world = 0.5 * (y0 + y1);
  const double cx_screen = ml + 0.5 * plot_w, cy_screen = mt + 0.5 * plot_h;
  auto sx = [&](double x) { return cx_screen + (x - cx_world) * scale; };
  auto sy = [&](double y) { return cy_screen - (y - cy_world) * scale; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"#ffffff\"/>\n";
  if (!fig.title.empty())
    out += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"15\">" + fig.title + "</text>\n";

  // frame and ticks
  out += "<rect x=\"" + detail::svg_num(ml) + "\" y=\"" + detail::svg_num(mt) + "\" width=\"" +
         detail::svg_num(plot_w) + "\" height=\"" + detail::svg_num(plot_h) +
         "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = x0 + (x1 - x0) * t / 4.0;
    const double fy = y0 + (y1 - y0) * t / 4.0;
    const double px = sx(fx), py = sy(fy);
    if (px >= ml - 0.5 && px <= ml + plot_w + 0.5) {
      out += "<line x1=\"" + detail::svg_num(px) + "\" y1=\"" + detail::svg_num(mt + plot_h) +
             "\" x2=\"" + detail::svg_num(px) + "\" y2=\"" + detail::svg_num(mt + plot_h + 5) +
             "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
      out += "<text x=\"" + detail::svg_num(px) + "\" y=\"" + detail::svg_num(mt + plot_h + 18) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
             detail::svg_tick(fx) + "</text>\n";
    }
    if (py >= mt - 0.5 && py <= mt + plot_h + 0.5) {
      out += "<line x1=\"" + detail::svg_num(ml - 5) + "\" y1=\"" + detail::svg_num(py) +
             "\" x2=\"" + detail::svg_num(ml) + "\" y2=\"" + detail::svg_num(py) +
             "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
      out += "<text x=\"" + detail::svg_num(ml - 8) + "\" y=\"" + detail::svg_num(py + 4) +
             "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
             detail::svg_tick(fy) + "</text>\n";
    }
  }
  out += "<text x=\"" + detail::svg_num(ml + 0.5 * plot_w) + "\" y=\"" + detail::svg_num(H - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + fig.x_label +
         "</text>\n";
  out += "<text x=\"18\" y=\"" + detail::svg_num(mt + 0.5 * plot_h) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 18 " +
         detail::svg_num(mt + 0.5 * plot_h) + ")\">" + fig.y_label + "</text>\n";

  for (const SvgEllipse& e : fig.ellipses) {
    const Eig2 eg = eig_sym_2x2(e.spec.cov);
    const double rx = scale * std::sqrt(std::max(0.0, e.spec.radius2 * eg.l1));
    const double ry = scale * std::sqrt(std::max(0.0, e.spec.radius2 * eg.l2));
    // screen y points down, so a world rotation by phi renders as rotate(-phi)
    const double angle = -std::atan2(eg.v1y, eg.v1x) * 180.0 / M_PI;
    out += "<ellipse cx=\"0\" cy=\"0\" rx=\"" + detail::svg_num(rx) + "\" ry=\"" +
           detail::svg_num(ry) + "\" fill=\"none\" stroke=\"" + e.stroke +
           "\" stroke-width=\"1.5\"" + (e.dashed ? " stroke-dasharray=\"6 4\"" : "") +
           " transform=\"translate(" + detail::svg_num(sx(e.spec.center[0])) + " " +
           detail::svg_num(sy(e.spec.center[1])) + ") rotate(" + detail::svg_num(angle) +
           ")\"/>\n";
  }

  for (const SvgMarker& m : fig.markers) {
    const double px = sx(m.x), py = sy(m.y);
    if (m.cross) {
      out += "<line x1=\"" + detail::svg_num(px - 5) + "\" y1=\"" + detail::svg_num(py) +
             "\" x2=\"" + detail::svg_num(px + 5) + "\" y2=\"" + detail::svg_num(py) +
             "\" stroke=\"" + m.color + "\" stroke-width=\"1.5\"/>\n";
      out += "<line x1=\"" + detail::svg_num(px) + "\" y1=\"" + detail::svg_num(py - 5) +
             "\" x2=\"" + detail::svg_num(px) + "\" y2=\"" + detail::svg_num(py + 5) +
             "\" stroke=\"" + m.color + "\" stroke-width=\"1.5\"/>\n";
    } else {
      out += "<circle cx=\"" + detail::svg_num(px) + "\" cy=\"" + detail::svg_num(py) +
             "\" r=\"3\" fill=\"" + m.color + "\"/>\n";
    }
    if (!m.label.empty())
      out += "<text x=\"" + detail::svg_num(px + 7) + "\" y=\"" + detail::svg_num(py - 5) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + m.label + "</text>\n";
  }

  // legend
  double ly = mt + 8.0;
  const double lx = W - mr + 12.0;
  for (const SvgEllipse& e : fig.ellipses) {
    if (e.label.empty()) continue;
    out += "<line x1=\"" + detail::svg_num(lx) + "\" y1=\"" + detail::svg_num(ly) + "\" x2=\"" +
           detail::svg_num(lx + 24) + "\" y2=\"" + detail::svg_num(ly) + "\" stroke=\"" + e.stroke +
           "\" stroke-width=\"1.5\"" + (e.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    out += "<text x=\"" + detail::svg_num(lx + 30) + "\" y=\"" + detail::svg_num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + e.label + "</text>\n";
    ly += 18.0;
  }
  for (const SvgMarker& m : fig.markers) {
    if (m.label.empty()) continue;
    out += std::string("<text x=\"") + detail::svg_num(lx) + "\" y=\"" + detail::svg_num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + m.color + "\">" +
           (m.cross ? "+ " : "\xE2\x80\xA2 ") + m.label + "</text>\n";
    ly += 18.0;
  }

  out += "</svg>\n";
  return out;
}

inline void emit_svg(const std::string& path, const SvgFigure& fig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write SVG file: " + path);
  out << render_svg(fig);
  if (!out) throw IoError("failed writing SVG file: " + path);
}

}  // namespace nadjust
