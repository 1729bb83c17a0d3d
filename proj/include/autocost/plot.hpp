#ifndef AUTOCOST_PLOT_HPP_
#define AUTOCOST_PLOT_HPP_

#include <string>
#include <vector>

namespace autocost::plot {

enum class PlotKind { ReturnCurve, CostCurve, Heatmap, EvolutionScatter };

std::string to_string(PlotKind kind);
PlotKind parse_plot_kind(const std::string& text);  // "return", "cost", ...

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> band;  // half-width per point; empty for no band
};

// Reads per-run metrics CSVs or aggregate CSVs. A curve gets a shaded band
// only when it aggregates more than one seed.
std::vector<Series> curves_from_csv(const std::string& text, PlotKind kind,
                                    const std::string& label);

std::string line_chart_svg(const std::vector<Series>& series,
                           const std::string& title, const std::string& y_label);
std::string heatmap_svg(const std::string& heatmap_csv_text);
std::string evolution_scatter_svg(const std::string& history_csv_text);

// Renders the given CSV files and returns the SVG document. Schema
// problems throw ParseError naming the missing column.
std::string render(PlotKind kind, const std::vector<std::string>& csv_paths);

}  // namespace autocost::plot

#endif  // AUTOCOST_PLOT_HPP_
