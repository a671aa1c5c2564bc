#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragged/analysis.hpp"
#include "ragged/config.hpp"
#include "ragged/metrics.hpp"

namespace ragged {

/// Everything the reports say about one non-baseline curve.
struct CurveSummary {
    PerformanceCurve curve;
    std::size_t k_star = 0;
    double f1_at_k_star = 0.0;
    std::optional<StabilityReport> stability;
    std::optional<ScalabilityReport> scalability;
    std::optional<BehaviorClass> behavior;
    std::optional<ClosedBookVerdict> verdict;
    std::optional<double> gain_average;
    std::optional<double> gain_at_optimal;
    std::vector<std::string> notes;
};

bool is_baseline(const PerformanceCurve& curve);

/// Closed-book F1 for a curve: the no_context curve with the same dataset,
/// reader and variant (same retriever preferred).
std::optional<double> find_baseline(const PerformanceCurve& curve, std::span<const PerformanceCurve> all);

/// Summaries for every curve that is not a no_context baseline, in input order.
std::vector<CurveSummary> summarize_curves(std::span<const PerformanceCurve> curves, const MetricConfig& metrics);

nlohmann::ordered_json to_json(const CurveLabel& label);
nlohmann::ordered_json to_json(const StabilityReport& report);
nlohmann::ordered_json to_json(const ScalabilityReport& report);
nlohmann::ordered_json to_json(const BehaviorClass& behavior);
nlohmann::ordered_json to_json(const ClosedBookVerdict& verdict, std::span<const std::size_t> grid);
nlohmann::ordered_json to_json(const SensitivityReport& report);
nlohmann::ordered_json to_json(const RecallReport& report);

struct PlotSeries {
    std::string name;
    std::vector<CurvePoint> points;
    std::size_t k_star = 0;
};

/// Self-contained SVG line chart of F1 against k (log-scaled x axis), one
/// polyline per series and a circle marker (class "kstar") at each k*.
std::string render_svg(const std::string& title, std::span<const PlotSeries> series);

/// Markdown summary: per dataset, a closed-book comparison table (readers
/// by retrievers) and a metrics table, with links to plot files.
std::string render_markdown(std::span<const CurveSummary> summaries, const MetricConfig& metrics,
                            const std::vector<std::pair<std::string, std::string>>& plots);

/// File-name-safe form of a label component.
std::string slug(const std::string& value);

}  // namespace ragged
