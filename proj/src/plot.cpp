#include "autocost/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <sstream>

#include "autocost/csv.hpp"
#include "autocost/errors.hpp"

namespace autocost::plot {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

// Plot area mapping.
struct Frame {
  Range xr, yr;
  double px(double x) const {
    return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom -
           (y - yr.lo) / (yr.hi - yr.lo) * (kHeight - kTop - kBottom);
  }
};

double nice_step(double span) {
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) return m * mag;
  return 10.0 * mag;
}

std::string header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
    << kHeight << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"15\">" << escape(title)
    << "</text>\n";
  return s.str();
}

std::string axes(const Frame& f, const std::string& x_label,
                 const std::string& y_label) {
  std::ostringstream s;
  const double x0 = kLeft, x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom, y1 = kTop;
  s << "<g stroke=\"#333\" stroke-width=\"1\" fill=\"none\">"
    << "<path d=\"M" << x0 << ',' << y1 << " V" << y0 << " H" << x1
    << "\"/></g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (const bool is_x : {true, false}) {
    const Range& r = is_x ? f.xr : f.yr;
    const double step = nice_step(r.hi - r.lo);
    for (double t = std::ceil(r.lo / step) * step; t <= r.hi + 1e-9 * step; t += step) {
      const double v = std::abs(t) < 1e-12 * step ? 0.0 : t;
      std::ostringstream label;
      label << v;
      if (is_x) {
        s << "<text x=\"" << num(f.px(v)) << "\" y=\"" << y0 + 16
          << "\" text-anchor=\"middle\">" << label.str() << "</text>\n";
      } else {
        s << "<text x=\"" << x0 - 6 << "\" y=\"" << num(f.py(v) + 4)
          << "\" text-anchor=\"end\">" << label.str() << "</text>\n";
      }
    }
  }
  s << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << (y0 + y1) / 2
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (y0 + y1) / 2
    << ")\">" << escape(y_label) << "</text>\n</g>\n";
  return s.str();
}

std::string value_column(PlotKind kind) {
  return kind == PlotKind::ReturnCurve ? "avg_ep_ret" : "avg_ep_cost_ex";
}

// Blue (low) to red (high).
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(40 + 215 * t));
  const int g = static_cast<int>(std::lround(60 + 120 * (1.0 - std::abs(2 * t - 1))));
  const int b = static_cast<int>(std::lround(255 - 215 * t));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::ReturnCurve: return "return";
    case PlotKind::CostCurve: return "cost";
    case PlotKind::Heatmap: return "heatmap";
    case PlotKind::EvolutionScatter: return "evolution";
  }
  return "?";
}

PlotKind parse_plot_kind(const std::string& text) {
  for (auto k : {PlotKind::ReturnCurve, PlotKind::CostCurve, PlotKind::Heatmap,
                 PlotKind::EvolutionScatter})
    if (to_string(k) == text) return k;
  throw ConfigError("unknown plot kind '" + text +
                    "' (expected return, cost, heatmap or evolution)");
}

std::vector<Series> curves_from_csv(const std::string& text, PlotKind kind,
                                    const std::string& label) {
  const auto table = csv::parse(text);
  const std::string col = value_column(kind);
  std::vector<Series> out;
  if (table.column("n_seeds") >= 0 || table.column(col + "_mean") >= 0) {
    table.require_columns({"algo", "iter", "n_seeds", col + "_mean", col + "_std"});
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const std::string algo = table.text(i, "algo");
      if (!index.count(algo)) {
        index[algo] = out.size();
        out.push_back({label.empty() ? algo : label + " " + algo, {}, {}, {}});
      }
      Series& s = out[index[algo]];
      s.x.push_back(table.number(i, "iter"));
      s.y.push_back(table.number(i, col + "_mean"));
      if (table.number(i, "n_seeds") > 1) s.band.push_back(table.number(i, col + "_std"));
    }
    for (auto& s : out)
      if (s.band.size() != s.y.size()) s.band.clear();
    return out;
  }
  table.require_columns({"iter", col});
  Series s;
  s.label = label;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    s.x.push_back(table.number(i, "iter"));
    s.y.push_back(table.number(i, col));
  }
  out.push_back(std::move(s));
  return out;
}

std::string line_chart_svg(const std::vector<Series>& series,
                           const std::string& title, const std::string& y_label) {
  Frame f;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f.xr.add(s.x[i]);
      const double b = s.band.empty() ? 0.0 : s.band[i];
      f.yr.add(s.y[i] - b);
      f.yr.add(s.y[i] + b);
    }
  }
  f.yr.add(0.0);
  f.xr.finish();
  f.yr.finish();
  std::ostringstream svg;
  svg << header(title) << axes(f, "iteration", y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    if (!s.band.empty() && !s.x.empty()) {
      svg << "<path fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" d=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        svg << (i ? " L" : "M") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i] + s.band[i]));
      for (std::size_t i = s.x.size(); i-- > 0;)
        svg << " L" << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i] - s.band[i]));
      svg << " Z\"/>\n";
    }
    if (s.x.empty()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      svg << (i ? " " : "") << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i]));
    svg << "\"/>\n";
    svg << "<text x=\"" << kWidth - kRight - 4 << "\" y=\"" << kTop + 14 * (k + 1)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
        << color << "\">" << escape(s.label) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string heatmap_svg(const std::string& heatmap_csv_text) {
  const auto table = csv::parse(heatmap_csv_text);
  table.require_columns({"x", "y", "value"});
  std::vector<double> xs, ys, vs;
  Range xr, yr, vr;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    xs.push_back(table.number(i, "x"));
    ys.push_back(table.number(i, "y"));
    vs.push_back(table.number(i, "value"));
    xr.add(xs.back());
    yr.add(ys.back());
    vr.add(vs.back());
  }
  // Cell size from the spacing of distinct coordinates.
  auto spacing = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v.size() > 1 ? v[1] - v[0] : 1.0;
  };
  const double cw = spacing(xs), ch = spacing(ys);
  Frame f;
  f.xr.add(xr.lo - cw / 2);
  f.xr.add(xr.hi + cw / 2);
  f.yr.add(yr.lo - ch / 2);
  f.yr.add(yr.hi + ch / 2);
  f.xr.finish();
  f.yr.finish();
  const bool flat = !(vr.hi - vr.lo > 0);
  std::ostringstream svg;
  svg << header("intrinsic cost") << axes(f, "x (m)", "y (m)");
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const double t = flat ? 0.5 : (vs[i] - vr.lo) / (vr.hi - vr.lo);
    const double x0 = f.px(xs[i] - cw / 2), x1 = f.px(xs[i] + cw / 2);
    const double y0 = f.py(ys[i] + ch / 2), y1 = f.py(ys[i] - ch / 2);
    svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\""
        << num(x1 - x0) << "\" height=\"" << num(y1 - y0) << "\" fill=\""
        << ramp(t) << "\"/>\n";
  }
  if (std::isfinite(vr.lo)) {
    svg << "<text x=\"" << kWidth - kRight << "\" y=\"" << kTop - 8
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << "min " << num(vr.lo) << "  max " << num(vr.hi) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string evolution_scatter_svg(const std::string& history_csv_text) {
  const auto table = csv::parse(history_csv_text);
  table.require_columns({"stage", "candidate_id", "fitness", "mean_return", "is_survivor"});
  Frame f;
  std::vector<double> stage, fit;
  std::vector<bool> surv;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    stage.push_back(table.number(i, "stage"));
    fit.push_back(table.number(i, "fitness"));
    surv.push_back(table.number(i, "is_survivor") != 0.0);
    f.xr.add(stage.back() - 0.5);
    f.xr.add(stage.back() + 0.5);
    f.yr.add(fit.back());
  }
  f.yr.add(0.0);
  f.xr.finish();
  f.yr.finish();
  std::ostringstream svg;
  svg << header("evolution") << axes(f, "stage", "fitness (extrinsic cost)");
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\""
      << kWidth - kLeft - kRight << "\" height=\"" << kHeight - kTop - kBottom
      << "\" fill=\"#1b2a49\" fill-opacity=\"0.9\"/>\n";
  for (std::size_t i = 0; i < stage.size(); ++i) {
    // Failed candidates sit on the top edge.
    const double y = std::isfinite(fit[i]) ? f.py(fit[i]) : kTop + 3;
    svg << "<circle cx=\"" << num(f.px(stage[i])) << "\" cy=\"" << num(y)
        << "\" r=\"" << (surv[i] ? 4.5 : 3) << "\" fill=\"white\""
        << (surv[i] ? " stroke=\"#ffd700\" stroke-width=\"1.5\"" : "") << "/>\n";
  }
  svg << "<line x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\""
      << num(f.py(0.0)) << "\" y2=\"" << num(f.py(0.0))
      << "\" stroke=\"red\" stroke-width=\"1.5\"/>\n</svg>\n";
  return svg.str();
}

std::string render(PlotKind kind, const std::vector<std::string>& csv_paths) {
  if (csv_paths.empty()) throw ConfigError("plot needs at least one CSV file");
  switch (kind) {
    case PlotKind::ReturnCurve:
    case PlotKind::CostCurve: {
      std::vector<Series> all;
      for (const auto& p : csv_paths) {
        const std::string label =
            csv_paths.size() > 1 ? std::filesystem::path(p).stem().string() : "";
        auto s = curves_from_csv(csv::read_text(p), kind, label);
        all.insert(all.end(), s.begin(), s.end());
      }
      return kind == PlotKind::ReturnCurve
                 ? line_chart_svg(all, "average episodic return", "return")
                 : line_chart_svg(all, "average episodic extrinsic cost", "cost");
    }
    case PlotKind::Heatmap:
      return heatmap_svg(csv::read_text(csv_paths.front()));
    case PlotKind::EvolutionScatter:
      return evolution_scatter_svg(csv::read_text(csv_paths.front()));
  }
  return "";
}

}  // namespace autocost::plot
