#include "cpfs3d/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cpfs3d {

namespace {

constexpr int kWidth = 800;
constexpr int kHeight = 560;
constexpr double kMarginL = 70, kMarginR = 20, kMarginT = 30, kMarginB = 50;

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

// Class palette, reused across scene renders and PR curves.
const char* kClassColors[] = {"#1f77b4", "#ff7f0e", "#d62728", "#9467bd",
                              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
                              "#17becf", "#aec7e8", "#ffbb78", "#f7b6d2"};

const char* class_color(int class_id) {
  const int n = static_cast<int>(sizeof(kClassColors) / sizeof(kClassColors[0]));
  return kClassColors[((class_id % n) + n) % n];
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string fmt_px(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct Frame {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const {
    const double t = x1 > x0 ? (x - x0) / (x1 - x0) : 0.5;
    return kMarginL + t * (kWidth - kMarginL - kMarginR);
  }
  double py(double y) const {
    const double t = y1 > y0 ? (y - y0) / (y1 - y0) : 0.5;
    return kHeight - kMarginB - t * (kHeight - kMarginT - kMarginB);
  }
};

void open_svg(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight
     << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" fill=\"#ffffff\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
}

void draw_axes(std::ostringstream& os, const Frame& f, const std::string& xlabel,
               const std::string& ylabel) {
  os << "<line x1=\"" << fmt_px(f.px(f.x0)) << "\" y1=\"" << fmt_px(f.py(f.y0))
     << "\" x2=\"" << fmt_px(f.px(f.x1)) << "\" y2=\"" << fmt_px(f.py(f.y0))
     << "\" stroke=\"#333\"/>\n";
  os << "<line x1=\"" << fmt_px(f.px(f.x0)) << "\" y1=\"" << fmt_px(f.py(f.y0))
     << "\" x2=\"" << fmt_px(f.px(f.x0)) << "\" y2=\"" << fmt_px(f.py(f.y1))
     << "\" stroke=\"#333\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / 5.0;
    const double y = f.y0 + (f.y1 - f.y0) * i / 5.0;
    os << "<text x=\"" << fmt_px(f.px(x)) << "\" y=\"" << fmt_px(f.py(f.y0) + 16)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
       << fmt(x) << "</text>\n";
    os << "<text x=\"" << fmt_px(f.px(f.x0) - 6) << "\" y=\"" << fmt_px(f.py(y) + 3)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
       << fmt(y) << "</text>\n";
  }
  os << "<text x=\"" << fmt_px((f.px(f.x0) + f.px(f.x1)) / 2) << "\" y=\""
     << kHeight - 10 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
     << "font-size=\"12\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << fmt_px((f.py(f.y0) + f.py(f.y1)) / 2)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
     << "transform=\"rotate(-90 16 " << fmt_px((f.py(f.y0) + f.py(f.y1)) / 2)
     << ")\">" << ylabel << "</text>\n";
}

void polyline(std::ostringstream& os, const Frame& f,
              const std::vector<std::pair<double, double>>& pts, const char* color) {
  if (pts.empty()) return;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i) os << " ";
    os << fmt_px(f.px(pts[i].first)) << "," << fmt_px(f.py(pts[i].second));
  }
  os << "\"/>\n";
}

void legend_entry(std::ostringstream& os, int slot, const char* color,
                  const std::string& label) {
  const double x = kMarginL + 10;
  const double y = kMarginT + 14 + 16.0 * slot;
  os << "<line x1=\"" << fmt_px(x) << "\" y1=\"" << fmt_px(y - 4) << "\" x2=\""
     << fmt_px(x + 18) << "\" y2=\"" << fmt_px(y - 4) << "\" stroke=\"" << color
     << "\" stroke-width=\"2\"/>\n";
  os << "<text x=\"" << fmt_px(x + 24) << "\" y=\"" << fmt_px(y)
     << "\" font-family=\"sans-serif\" font-size=\"11\">" << label << "</text>\n";
}

}  // namespace

std::string loss_curves_svg(const std::vector<StepMetrics>& metrics) {
  std::ostringstream os;
  open_svg(os, "training loss");
  if (metrics.empty()) {
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       << "fill=\"#888\">no metrics</text>\n</svg>\n";
    return os.str();
  }
  const struct {
    const char* name;
    float StepMetrics::*field;
  } series[] = {{"l_total", &StepMetrics::l_total},
                {"l_det", &StepMetrics::l_det},
                {"l_semcl", &StepMetrics::l_semcl},
                {"l_primcl", &StepMetrics::l_primcl}};

  Frame f;
  f.x0 = static_cast<double>(metrics.front().step);
  f.x1 = static_cast<double>(metrics.back().step);
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
  f.y0 = 0;
  f.y1 = 1e-6;
  for (const auto& m : metrics)
    for (const auto& s : series) f.y1 = std::max(f.y1, static_cast<double>(m.*(s.field)));
  f.y1 *= 1.05;

  draw_axes(os, f, "step", "loss");
  for (size_t si = 0; si < 4; ++si) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(metrics.size());
    for (const auto& m : metrics)
      pts.emplace_back(static_cast<double>(m.step),
                       static_cast<double>(m.*(series[si].field)));
    polyline(os, f, pts, kSeriesColors[si]);
    legend_entry(os, static_cast<int>(si), kSeriesColors[si], series[si].name);
  }
  os << "</svg>\n";
  return os.str();
}

std::string pr_curves_svg(const APReport& report) {
  std::ostringstream os;
  open_svg(os, "precision-recall (IoU 0.25)");
  Frame f;
  f.x0 = 0;
  f.x1 = 1;
  f.y0 = 0;
  f.y1 = 1.05;
  draw_axes(os, f, "recall", "precision");
  int slot = 0;
  for (const auto& c : report.per_class) {
    if (c.pr25.empty()) continue;
    std::vector<std::pair<double, double>> pts;
    // The envelope is flat from recall 0 to the first ranked point.
    pts.emplace_back(0.0, c.pr25.front().precision);
    for (const auto& p : c.pr25) pts.emplace_back(p.recall, p.precision);
    const char* color = class_color(c.class_id);
    polyline(os, f, pts, color);
    char label[64];
    std::snprintf(label, sizeof(label), "class %d (AP25 %.3f)", c.class_id, c.ap25);
    legend_entry(os, slot++, color, label);
  }
  if (slot == 0)
    os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
       << "fill=\"#888\">no evaluated classes</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string scene_svg(const PointCloudScene& scene, const std::vector<Detection>& dets) {
  std::ostringstream os;
  open_svg(os, "scene " + scene.scene_id);

  Frame f;
  f.x0 = f.y0 = 1e30;
  f.x1 = f.y1 = -1e30;
  auto widen = [&](double x, double y) {
    f.x0 = std::min(f.x0, x);
    f.x1 = std::max(f.x1, x);
    f.y0 = std::min(f.y0, y);
    f.y1 = std::max(f.y1, y);
  };
  for (int i = 0; i < scene.num_points(); ++i)
    widen(scene.points(i, 0), scene.points(i, 1));
  for (const auto& b : scene.boxes) {
    widen(b.center.x() - b.size.x() / 2, b.center.y() - b.size.y() / 2);
    widen(b.center.x() + b.size.x() / 2, b.center.y() + b.size.y() / 2);
  }
  if (f.x0 > f.x1) {
    f.x0 = f.y0 = 0;
    f.x1 = f.y1 = 1;
  }
  const double pad_x = 0.05 * (f.x1 - f.x0 + 1e-9);
  const double pad_y = 0.05 * (f.y1 - f.y0 + 1e-9);
  f.x0 -= pad_x;
  f.x1 += pad_x;
  f.y0 -= pad_y;
  f.y1 += pad_y;

  // Subsample by a deterministic stride so huge clouds stay readable.
  const int n = scene.num_points();
  const int stride = std::max(1, n / 4000);
  for (int i = 0; i < n; i += stride)
    os << "<circle cx=\"" << fmt_px(f.px(scene.points(i, 0))) << "\" cy=\""
       << fmt_px(f.py(scene.points(i, 1))) << "\" r=\"1\" fill=\"#999999\"/>\n";

  auto rect = [&](const Vec3f& center, const Vec3f& size, const char* stroke,
                  const char* cls, const char* dash) {
    const double x = f.px(center.x() - size.x() / 2);
    const double y = f.py(center.y() + size.y() / 2);
    const double w = f.px(center.x() + size.x() / 2) - x;
    const double h = f.py(center.y() - size.y() / 2) - y;
    os << "<rect";
    if (cls[0]) os << " class=\"" << cls << "\"";
    os << " x=\"" << fmt_px(x) << "\" y=\"" << fmt_px(y) << "\" width=\"" << fmt_px(w)
       << "\" height=\"" << fmt_px(h) << "\" fill=\"none\" stroke=\"" << stroke
       << "\" stroke-width=\"2\"";
    if (dash[0]) os << " stroke-dasharray=\"" << dash << "\"";
    os << "/>\n";
  };

  for (const auto& b : scene.boxes) rect(b.center, b.size, "#2e8b57", "gt", "");
  for (const auto& d : dets) {
    rect(d.center, d.size, class_color(d.class_id), "det", "5,3");
    char label[64];
    std::snprintf(label, sizeof(label), "%d:%.2f", d.class_id, d.score);
    os << "<text x=\"" << fmt_px(f.px(d.center.x() - d.size.x() / 2))
       << "\" y=\"" << fmt_px(f.py(d.center.y() + d.size.y() / 2) - 3)
       << "\" font-family=\"sans-serif\" font-size=\"9\" fill=\""
       << class_color(d.class_id) << "\">" << label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace cpfs3d
