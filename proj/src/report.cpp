#include "ragged/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "ragged/error.hpp"

namespace ragged {
namespace {

using ojson = nlohmann::ordered_json;

std::string fmt(const char* pattern, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, value);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

bool is_baseline(const PerformanceCurve& curve) { return curve.label.condition == "no_context"; }

std::optional<double> find_baseline(const PerformanceCurve& curve, std::span<const PerformanceCurve> all) {
    const PerformanceCurve* fallback = nullptr;
    for (const auto& other : all) {
        if (!is_baseline(other) || other.points.empty()) continue;
        const auto& a = other.label;
        const auto& b = curve.label;
        if (a.dataset != b.dataset || a.reader != b.reader || a.variant != b.variant) continue;
        if (a.retriever == b.retriever) return other.points.front().f1;
        if (fallback == nullptr) fallback = &other;
    }
    if (fallback != nullptr) return fallback->points.front().f1;
    return std::nullopt;
}

std::vector<CurveSummary> summarize_curves(std::span<const PerformanceCurve> curves, const MetricConfig& metrics) {
    std::vector<CurveSummary> out;
    for (const auto& curve : curves) {
        if (is_baseline(curve)) continue;
        CurveSummary s;
        s.curve = curve;
        s.k_star = optimal_k(curve);
        s.f1_at_k_star = *curve.f1_at(s.k_star);
        if (curve.points.size() >= 2) {
            if (s.f1_at_k_star > 0.0) {
                s.stability = rss(curve, metrics.delta);
            } else {
                s.notes.push_back("rss undefined: zero peak performance");
            }
            s.scalability = rsc(curve, metrics.epsilon);
        } else {
            s.notes.push_back("rss/rsc need at least two depths");
        }
        if (curve.points.size() >= 3) {
            s.behavior = classify_behavior(curve, metrics.behavior_threshold);
        } else {
            s.notes.push_back("behavior needs at least three depths");
        }
        if (const auto baseline = find_baseline(curve, curves)) {
            const auto grid = curve.ks();
            s.verdict = closed_book_verdict(curve, *baseline, grid);
            s.gain_average = gain_over_closed_book(curve, *baseline, grid, GainMode::average);
            s.gain_at_optimal = gain_over_closed_book(curve, *baseline, grid, GainMode::at_optimal);
        }
        out.push_back(std::move(s));
    }
    return out;
}

ojson to_json(const CurveLabel& l) {
    return {{"dataset", l.dataset}, {"retriever", l.retriever}, {"reader", l.reader}, {"condition", l.condition},
            {"variant", l.variant}};
}

ojson to_json(const StabilityReport& r) {
    ojson j;
    j["k_star"] = r.k_star;
    j["delta"] = r.delta;
    j["rss"] = r.rss ? ojson(*r.rss) : ojson(nullptr);
    j["window_points_used"] = r.window_points_used;
    j["defined"] = r.defined;
    return j;
}

ojson to_json(const ScalabilityReport& r) {
    ojson j;
    j["epsilon"] = r.epsilon;
    j["k_last_gain"] = r.k_last_gain ? ojson(*r.k_last_gain) : ojson(nullptr);
    j["rsc"] = r.rsc;
    j["gain_segments"] = ojson::array();
    for (const auto& [a, b] : r.gain_segments) j["gain_segments"].push_back({a, b});
    return j;
}

ojson to_json(const BehaviorClass& b) {
    return {{"class", to_string(b.behavior)},
            {"peak_drop", b.peak_drop},
            {"threshold_used", b.threshold_used},
            {"k_star", b.k_star}};
}

ojson to_json(const ClosedBookVerdict& v, std::span<const std::size_t> grid) {
    return {{"verdict", to_string(v.verdict)},
            {"condition_ks", v.condition_ks},
            {"no_context_f1", v.no_context_f1},
            {"rendering", render_verdict(v, grid)}};
}

ojson to_json(const SensitivityReport& r) {
    ojson j;
    j["epsilons"] = r.epsilons;
    j["deltas"] = r.deltas;
    j["invariant"] = r.invariant;
    j["f1_std_mean"] = r.f1_std_mean;
    j["f1_std_max"] = r.f1_std_max;
    j["flips"] = ojson::array();
    for (const auto& f : r.flips) {
        j["flips"].push_back({{"metric", f.metric},
                              {"epsilon", f.epsilon},
                              {"delta", f.delta},
                              {"higher_at_baseline", f.higher_at_baseline},
                              {"higher_here", f.higher_here}});
    }
    j["rankings"] = ojson::array();
    for (const auto& rk : r.rankings) {
        j["rankings"].push_back(
            {{"epsilon", rk.epsilon}, {"delta", rk.delta}, {"by_rsc", rk.by_rsc}, {"by_rss", rk.by_rss}});
    }
    return j;
}

ojson to_json(const RecallReport& r) {
    return {{"recall", r.recall}, {"scored", r.scored}, {"excluded", r.excluded}};
}

std::string slug(const std::string& value) {
    std::string out;
    for (char c : value) {
        const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                          c == '_' || c == '.';
        out.push_back(keep ? c : '_');
    }
    return out.empty() ? "_" : out;
}

std::string render_svg(const std::string& title, std::span<const PlotSeries> series) {
    constexpr double width = 720, height = 440;
    constexpr double left = 60, right = 180, top = 40, bottom = 50;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    std::set<std::size_t> ks;
    double max_f1 = 0.0;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            ks.insert(p.k);
            max_f1 = std::max(max_f1, p.f1);
        }
    }
    if (ks.empty()) throw ValidationError("plot '" + title + "' has no points");
    const double y_max = std::clamp(std::ceil(max_f1 / 10.0) * 10.0, 10.0, 100.0);
    const double lo = std::log(static_cast<double>(std::max<std::size_t>(*ks.begin(), 1)));
    const double hi = std::log(static_cast<double>(std::max<std::size_t>(*ks.rbegin(), 1)));

    auto x_of = [&](std::size_t k) {
        if (hi == lo) return left + plot_w / 2.0;
        return left + (std::log(static_cast<double>(std::max<std::size_t>(k, 1))) - lo) / (hi - lo) * plot_w;
    };
    auto y_of = [&](double f1) { return top + plot_h - f1 / y_max * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
        << "</text>\n";

    // Axes and grid.
    svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
        << "\" stroke=\"black\"/>\n";
    for (auto k : ks) {
        const auto x = fmt("%.2f", x_of(k));
        svg << "<line x1=\"" << x << "\" y1=\"" << top << "\" x2=\"" << x << "\" y2=\"" << top + plot_h
            << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<text x=\"" << x << "\" y=\"" << top + plot_h + 16 << "\" text-anchor=\"middle\">" << k << "</text>\n";
    }
    for (int i = 0; i <= 5; ++i) {
        const double v = y_max * i / 5.0;
        const auto y = fmt("%.2f", y_of(v));
        svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\"" << y
            << "\" stroke=\"#e0e0e0\"/>\n";
        svg << "<text x=\"" << left - 6 << "\" y=\"" << y << "\" text-anchor=\"end\" dominant-baseline=\"middle\">"
            << fmt("%.0f", v) << "</text>\n";
    }
    svg << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\">k (retrieved passages)</text>\n";
    svg << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << top + plot_h / 2 << ")\">F1</text>\n";

    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        svg << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t j = 0; j < s.points.size(); ++j) {
            if (j > 0) svg << ' ';
            svg << fmt("%.2f", x_of(s.points[j].k)) << ',' << fmt("%.2f", y_of(s.points[j].f1));
        }
        svg << "\"/>\n";
        for (const auto& p : s.points) {
            if (p.k != s.k_star) continue;
            svg << "<circle class=\"kstar\" cx=\"" << fmt("%.2f", x_of(p.k)) << "\" cy=\"" << fmt("%.2f", y_of(p.f1))
                << "\" r=\"5\" fill=\"" << color << "\"><title>" << xml_escape(s.name) << " k*=" << p.k << " F1="
                << fmt("%.2f", p.f1) << "</title></circle>\n";
        }
        const double ly = top + 10 + 18.0 * static_cast<double>(i);
        svg << "<line x1=\"" << left + plot_w + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + plot_w + 35
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        svg << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly << "\" dominant-baseline=\"middle\">"
            << xml_escape(s.name) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string render_markdown(std::span<const CurveSummary> summaries, const MetricConfig& metrics,
                            const std::vector<std::pair<std::string, std::string>>& plots) {
    std::map<std::string, std::vector<const CurveSummary*>> by_dataset;
    for (const auto& s : summaries) by_dataset[s.curve.label.dataset].push_back(&s);

    std::ostringstream md;
    md << "# RAG retrieval-depth report\n";
    for (const auto& [dataset, items] : by_dataset) {
        md << "\n## " << dataset << "\n";

        std::vector<std::string> retrievers;
        std::vector<std::string> rows;
        std::map<std::pair<std::string, std::string>, std::string> cells;
        for (const auto* s : items) {
            const auto& l = s->curve.label;
            if (l.condition != "top_k") continue;
            const std::string row = l.variant == "standard" ? l.reader : l.reader + " (" + l.variant + ")";
            if (std::find(retrievers.begin(), retrievers.end(), l.retriever) == retrievers.end()) {
                retrievers.push_back(l.retriever);
            }
            if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
            const auto grid = s->curve.ks();
            cells[{row, l.retriever}] = s->verdict ? render_verdict(*s->verdict, grid) : "n/a";
        }
        if (!rows.empty()) {
            md << "\n### Better than closed-book?\n\n| Reader |";
            for (const auto& r : retrievers) md << ' ' << r << " |";
            md << "\n|---|";
            for (std::size_t i = 0; i < retrievers.size(); ++i) md << "---|";
            md << '\n';
            for (const auto& row : rows) {
                md << "| " << row << " |";
                for (const auto& r : retrievers) {
                    const auto it = cells.find({row, r});
                    md << ' ' << (it == cells.end() ? "-" : it->second) << " |";
                }
                md << '\n';
            }
        }

        md << "\n### Retrieval-depth metrics\n\n";
        md << "| Retriever | Reader | Condition | Variant | k* | F1@k* | RSS (Δ=" << metrics.delta << ") | RSC (ε="
           << fmt("%g", metrics.epsilon) << ") | Last gain k | Behavior | Peak drop |\n";
        md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
        for (const auto* s : items) {
            const auto& l = s->curve.label;
            md << "| " << l.retriever << " | " << l.reader << " | " << l.condition << " | " << l.variant << " | "
               << s->k_star << " | " << fmt("%.2f", s->f1_at_k_star) << " | ";
            md << (s->stability && s->stability->rss ? fmt("%.4f", *s->stability->rss) : std::string("undefined"))
               << " | ";
            md << (s->scalability ? fmt("%.2f", s->scalability->rsc) : std::string("-")) << " | ";
            md << (s->scalability && s->scalability->k_last_gain ? std::to_string(*s->scalability->k_last_gain)
                                                                  : std::string("-"))
               << " | ";
            md << (s->behavior ? to_string(s->behavior->behavior) : std::string("-")) << " | ";
            md << (s->behavior ? fmt("%.2f", s->behavior->peak_drop) : std::string("-")) << " |\n";
        }

        bool any_plot = false;
        for (const auto& [plot_dataset, path] : plots) {
            if (plot_dataset != dataset) continue;
            if (!any_plot) md << "\n### Plots\n\n";
            any_plot = true;
            md << "![" << path << "](" << path << ")\n";
        }
    }
    return md.str();
}

}  // namespace ragged
