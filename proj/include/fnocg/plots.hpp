#pragma once

#include "fnocg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fnocg {

/// Data range of one axis plus a 5% margin on each side. Log axes apply the
/// margin in log10 space and ignore non-positive values.
struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double transform(double v) const { return log ? std::log10(v) : v; }
  double t_lo() const { return transform(lo); }
  double t_hi() const { return transform(hi); }
};

inline AxisRange axis_range(const std::vector<double>& values, bool log = false) {
  std::vector<double> t;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    t.push_back(log ? std::log10(v) : v);
  }
  double lo, hi;
  if (t.empty()) {
    lo = 0.0;
    hi = 1.0;
  } else {
    lo = *std::min_element(t.begin(), t.end());
    hi = *std::max_element(t.begin(), t.end());
    if (hi == lo) {
      const double pad = lo == 0.0 ? 0.5 : 0.5 * std::abs(lo);
      lo -= pad;
      hi += pad;
    }
    const double margin = 0.05 * (hi - lo);
    lo -= margin;
    hi += margin;
  }
  AxisRange r;
  r.log = log;
  r.lo = log ? std::pow(10.0, lo) : lo;
  r.hi = log ? std::pow(10.0, hi) : hi;
  return r;
}

namespace svg {

struct Box {
  double x, y, w, h;
};

inline std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

/// Minimal SVG document builder.
class Canvas {
 public:
  Canvas(double width, double height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, const std::string& stroke = "#000", double w = 1.0,
            const std::string& extra = "") {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(w) << "\"" << extra << "/>\n";
  }
  void rect(const Box& b, const std::string& fill, const std::string& stroke = "none") {
    body_ << "<rect x=\"" << num(b.x) << "\" y=\"" << num(b.y) << "\" width=\"" << num(b.w) << "\" height=\""
          << num(b.h) << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << fill
          << "\" fill-opacity=\"0.6\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) body_ << num(x) << ',' << num(y) << ' ';
    body_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "middle", double size = 11,
            double rotate = 0.0) {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\""
          << num(size) << "\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) body_ << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
    body_ << ">" << s << "</text>\n";
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_) << "\" height=\"" << num(height_)
        << "\" viewBox=\"0 0 " << num(width_) << ' ' << num(height_) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

/// Axes frame with ticks and labels; maps data to pixels.
struct Axes {
  Box box;
  AxisRange x, y;

  double px(double v) const { return box.x + (x.transform(v) - x.t_lo()) / (x.t_hi() - x.t_lo()) * box.w; }
  double py(double v) const { return box.y + box.h - (y.transform(v) - y.t_lo()) / (y.t_hi() - y.t_lo()) * box.h; }
  bool inside(double vx, double vy) const {
    return std::isfinite(vx) && std::isfinite(vy) && (!x.log || vx > 0.0) && (!y.log || vy > 0.0);
  }

  void draw(Canvas& c, const std::string& xlabel, const std::string& ylabel, const std::string& title) const {
    c.rect(box, "none", "#333");
    auto tick_label = [](const AxisRange& r, double t) { return r.log ? "1e" + num(t) : num(t); };
    for (int i = 0; i <= 4; ++i) {
      const double tx = x.t_lo() + (x.t_hi() - x.t_lo()) * i / 4.0;
      const double sx = box.x + box.w * i / 4.0;
      c.line(sx, box.y + box.h, sx, box.y + box.h + 4);
      c.text(sx, box.y + box.h + 16, tick_label(x, tx), "middle", 9);
      const double ty = y.t_lo() + (y.t_hi() - y.t_lo()) * i / 4.0;
      const double sy = box.y + box.h - box.h * i / 4.0;
      c.line(box.x - 4, sy, box.x, sy);
      c.text(box.x - 6, sy + 3, tick_label(y, ty), "end", 9);
    }
    c.text(box.x + box.w / 2, box.y + box.h + 32, xlabel);
    c.text(box.x - 48, box.y + box.h / 2, ylabel, "middle", 11, -90);
    c.text(box.x + box.w / 2, box.y - 8, title, "middle", 12);
  }
};

}  // namespace svg

/// Scatter of `ys` against `xs` with a horizontal marginal histogram of ys
/// drawn to the right of the axes.
inline void scatter_with_histogram(svg::Canvas& c, const svg::Box& box, const std::vector<double>& xs,
                                   const std::vector<double>& ys, const std::string& xlabel, const std::string& ylabel,
                                   const std::string& title, bool log_x) {
  svg::Axes ax{box, axis_range(xs, log_x), axis_range(ys)};
  ax.draw(c, xlabel, ylabel, title);
  if (ax.y.lo < 0.0 && ax.y.hi > 0.0) c.line(box.x, ax.py(0.0), box.x + box.w, ax.py(0.0), "#999", 1.0, " stroke-dasharray=\"4 3\"");
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i) {
    if (ax.inside(xs[i], ys[i])) c.circle(ax.px(xs[i]), ax.py(ys[i]), 2.0, "#1f77b4");
  }
  constexpr int bins = 30;
  std::vector<int> counts(bins, 0);
  for (double v : ys) {
    if (!std::isfinite(v)) continue;
    const double t = (v - ax.y.lo) / (ax.y.hi - ax.y.lo);
    counts[static_cast<std::size_t>(std::clamp(static_cast<int>(t * bins), 0, bins - 1))]++;
  }
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double hist_x = box.x + box.w + 8;
  const double hist_w = 60;
  c.rect({hist_x, box.y, hist_w, box.h}, "none", "#ccc");
  for (int b = 0; b < bins; ++b) {
    const double h = box.h / bins;
    const double w = hist_w * counts[static_cast<std::size_t>(b)] / peak;
    c.rect({hist_x, box.y + box.h - (b + 1) * h, w, h}, "#ff7f0e");
  }
}

/// Writes fig1_deltas_vs_kappa.svg and fig2_convergence.svg from the records
/// (and curves.csv if it sits next to them). Returns the files written.
inline std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& records_path,
                                                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto records = read_records_csv(records_path);
  const auto deltas = compute_deltas(records);
  std::vector<double> kappa, de_fno, de_hyb, dn_hyb;
  for (const auto& d : deltas) {
    kappa.push_back(d.kappa);
    de_fno.push_back(d.d_error_fno);
    de_hyb.push_back(d.d_error_fnocg);
    dn_hyb.push_back(d.d_iterations_fnocg);
  }
  std::vector<std::filesystem::path> written;

  svg::Canvas fig1(1200, 380);
  const char* titles[3] = {"(a) FNO vs CG", "(b) FNO-CG vs CG", "(c) FNO-CG vs CG"};
  const char* ylabels[3] = {"dE_FNO", "dE_FNO-CG", "dn_FNO-CG"};
  const std::vector<double>* series[3] = {&de_fno, &de_hyb, &dn_hyb};
  for (int p = 0; p < 3; ++p) {
    const svg::Box box{70.0 + p * 390.0, 40.0, 240.0, 280.0};
    scatter_with_histogram(fig1, box, kappa, *series[p], "condition number kappa", ylabels[p], titles[p], true);
  }
  written.push_back(out_dir / "fig1_deltas_vs_kappa.svg");
  fig1.save(written.back());

  std::vector<CurveRow> curves;
  const auto curves_path = records_path.parent_path() / "curves.csv";
  if (std::filesystem::exists(curves_path)) curves = read_curves_csv(curves_path);
  std::map<std::uint64_t, std::map<Method, std::vector<double>>> by_sample;
  for (const auto& r : curves) {
    auto& v = by_sample[r.sample_id][r.method];
    if (static_cast<int>(v.size()) <= r.iteration) v.resize(static_cast<std::size_t>(r.iteration) + 1, NAN);
    v[static_cast<std::size_t>(r.iteration)] = r.relative_error;
  }
  const double panels = std::max<std::size_t>(1, by_sample.size());
  svg::Canvas fig2(70 + 330 * panels, 380);
  int p = 0;
  if (by_sample.empty()) {
    svg::Axes ax{{70, 40, 240, 280}, axis_range({}), axis_range({}, true)};
    ax.draw(fig2, "CG iteration", "relative error", "no curves");
  }
  for (const auto& [id, methods] : by_sample) {
    std::vector<double> xs, ys;
    for (const auto& [m, v] : methods) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        xs.push_back(static_cast<double>(i));
        ys.push_back(v[i]);
      }
    }
    svg::Axes ax{{70.0 + p * 330.0, 40.0, 240.0, 280.0}, axis_range(xs), axis_range(ys, true)};
    ax.draw(fig2, "CG iteration", "relative error", "sample " + std::to_string(id));
    int legend = 0;
    for (const auto& [m, v] : methods) {
      const std::string colour = m == Method::cg ? "#1f77b4" : "#d62728";
      std::vector<std::pair<double, double>> pts;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (ax.inside(static_cast<double>(i), v[i])) pts.emplace_back(ax.px(static_cast<double>(i)), ax.py(v[i]));
      }
      fig2.polyline(pts, colour);
      fig2.text(ax.box.x + ax.box.w - 4, ax.box.y + 14 + 14 * legend++, to_string(m), "end", 10);
    }
    ++p;
  }
  written.push_back(out_dir / "fig2_convergence.svg");
  fig2.save(written.back());
  return written;
}

}  // namespace fnocg
