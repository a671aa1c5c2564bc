#include "ragged/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ragged/error.hpp"
#include "ragged/text.hpp"

namespace ragged {
namespace {

std::vector<std::string> answer_tokens(const std::string& s, const F1Options& options) {
    const std::string normalized = options.normalize ? text::normalize_answer(s) : s;
    std::vector<std::string> out;
    for (auto t : text::split_whitespace(normalized)) out.emplace_back(t);
    return out;
}

double single_f1(const std::vector<std::string>& prediction, const std::vector<std::string>& gold) {
    if (prediction.empty() && gold.empty()) return 100.0;
    if (prediction.empty() || gold.empty()) return 0.0;
    std::unordered_map<std::string_view, std::size_t> gold_counts;
    for (const auto& t : gold) ++gold_counts[t];
    std::size_t common = 0;
    for (const auto& t : prediction) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    return 100.0 * 2.0 * static_cast<double>(common) / static_cast<double>(prediction.size() + gold.size());
}

void require_points(const PerformanceCurve& curve, std::size_t n, const char* what) {
    curve.validate();
    if (curve.points.size() < n) {
        throw ValidationError(std::string(what) + " needs a curve with at least " + std::to_string(n) +
                              " points: " + curve.label.to_string());
    }
}

}  // namespace

double unigram_f1(const std::string& prediction, std::span<const std::string> gold_answers, const F1Options& options) {
    if (gold_answers.empty()) throw ValidationError("unigram_f1 needs at least one gold answer");
    const auto predicted = answer_tokens(prediction, options);
    double best = 0.0;
    for (const auto& gold : gold_answers) best = std::max(best, single_f1(predicted, answer_tokens(gold, options)));
    return best;
}

RecallReport recall_at_k(const RetrievalRun& run, const QuerySet& queries, const Corpus& corpus, std::size_t k,
                         RecallLevel level) {
    if (k < 1) throw ValidationError("recall@k needs k >= 1");
    RecallReport report;
    double total = 0.0;
    for (const auto& query : queries.queries()) {
        std::set<std::string> gold;
        if (level == RecallLevel::passage) {
            gold.insert(query.gold_passage_ids.begin(), query.gold_passage_ids.end());
        } else {
            gold.insert(query.gold_doc_ids.begin(), query.gold_doc_ids.end());
            for (const auto& pid : query.gold_passage_ids) {
                if (const auto* p = corpus.find(pid)) gold.insert(p->doc_id);
            }
        }
        if (gold.empty()) {
            ++report.excluded;
            continue;
        }
        std::set<std::string> retrieved;
        if (const auto* entries = run.entries(query.query_id)) {
            const std::size_t depth = std::min(k, entries->size());
            for (std::size_t i = 0; i < depth; ++i) {
                const auto& pid = (*entries)[i].passage_id;
                if (level == RecallLevel::passage) {
                    retrieved.insert(pid);
                } else if (const auto* p = corpus.find(pid)) {
                    retrieved.insert(p->doc_id);
                }
            }
        }
        std::size_t hits = 0;
        for (const auto& g : gold) hits += retrieved.contains(g) ? 1 : 0;
        total += static_cast<double>(hits) / static_cast<double>(gold.size());
        ++report.scored;
    }
    report.recall = report.scored == 0 ? 0.0 : 100.0 * total / static_cast<double>(report.scored);
    return report;
}

std::string CurveLabel::to_string() const {
    return dataset + "/" + retriever + "/" + reader + "/" + condition + "/" + variant;
}

void PerformanceCurve::validate() const {
    if (points.empty()) throw ValidationError("curve " + label.to_string() + " has no points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (i > 0 && points[i].k <= points[i - 1].k) {
            throw ValidationError("curve " + label.to_string() + ": k values must be strictly increasing");
        }
        if (!(points[i].f1 >= 0.0 && points[i].f1 <= 100.0)) {
            throw ValidationError("curve " + label.to_string() + ": f1 at k=" + std::to_string(points[i].k) +
                                  " outside [0, 100]");
        }
    }
}

std::optional<double> PerformanceCurve::f1_at(std::size_t k) const {
    for (const auto& p : points) {
        if (p.k == k) return p.f1;
    }
    return std::nullopt;
}

std::vector<std::size_t> PerformanceCurve::ks() const {
    std::vector<std::size_t> out;
    for (const auto& p : points) out.push_back(p.k);
    return out;
}

double mean_f1(std::span<const ReaderAnswer> answers, const QuerySet& queries, const F1Options& options) {
    if (answers.empty()) throw ValidationError("mean F1 over an empty answer set");
    double total = 0.0;
    for (const auto& a : answers) total += unigram_f1(a.answer, queries.at(a.query_id).gold_answers, options);
    return total / static_cast<double>(answers.size());
}

PerformanceCurve build_curve(std::span<const ReaderAnswer> answers, const QuerySet& queries, CurveLabel label,
                             const F1Options& options) {
    if (answers.empty()) throw ValidationError("cannot build curve " + label.to_string() + " from no answers");
    std::map<std::size_t, std::pair<double, std::size_t>> by_k;
    for (const auto& a : answers) {
        auto& [sum, count] = by_k[a.k];
        sum += unigram_f1(a.answer, queries.at(a.query_id).gold_answers, options);
        ++count;
    }
    PerformanceCurve curve{std::move(label), {}};
    for (const auto& [k, acc] : by_k) curve.points.push_back({k, acc.first / static_cast<double>(acc.second)});
    curve.validate();
    return curve;
}

std::size_t optimal_k(const PerformanceCurve& curve) {
    curve.validate();
    const CurvePoint* best = &curve.points.front();
    for (const auto& p : curve.points) {
        if (p.f1 > best->f1) best = &p;
    }
    return best->k;
}

StabilityReport rss(const PerformanceCurve& curve, std::size_t delta) {
    if (delta < 1) throw ValidationError("RSS window delta must be >= 1");
    require_points(curve, 2, "RSS");
    StabilityReport report;
    report.delta = delta;
    report.k_star = optimal_k(curve);
    const double peak = *curve.f1_at(report.k_star);
    if (peak == 0.0) throw ValidationError("RSS undefined for zero peak performance: " + curve.label.to_string());

    std::optional<double> lowest;
    for (const auto& p : curve.points) {
        if (p.k == report.k_star) continue;
        const auto distance = p.k > report.k_star ? p.k - report.k_star : report.k_star - p.k;
        if (distance > delta) continue;
        report.window_points_used.push_back(p.k);
        lowest = lowest ? std::min(*lowest, p.f1) : p.f1;
    }
    if (lowest) {
        report.defined = true;
        report.rss = *lowest / peak;
    }
    return report;
}

ScalabilityReport rsc(const PerformanceCurve& curve, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("RSC epsilon must be > 0");
    require_points(curve, 2, "RSC");
    ScalabilityReport report;
    report.epsilon = epsilon;
    const auto& pts = curve.points;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i + 1].f1 - pts[i].f1 < epsilon) break;
        report.gain_segments.emplace_back(pts[i].k, pts[i + 1].k);
        report.k_last_gain = pts[i + 1].k;
        report.rsc += 0.5 * static_cast<double>(pts[i + 1].k - pts[i].k) * (pts[i].f1 + pts[i + 1].f1);
    }
    return report;
}

double f1_standard_deviation(const PerformanceCurve& curve) {
    curve.validate();
    double mean = 0.0;
    for (const auto& p : curve.points) mean += p.f1;
    mean /= static_cast<double>(curve.points.size());
    double var = 0.0;
    for (const auto& p : curve.points) var += (p.f1 - mean) * (p.f1 - mean);
    return std::sqrt(var / static_cast<double>(curve.points.size()));
}

namespace {

struct Ranked {
    std::string label;
    std::optional<double> value;
};

std::vector<std::string> rank_order(std::vector<Ranked> items) {
    std::sort(items.begin(), items.end(), [](const Ranked& a, const Ranked& b) {
        if (a.value.has_value() != b.value.has_value()) return a.value.has_value();
        if (a.value && *a.value != *b.value) return *a.value > *b.value;
        return a.label < b.label;
    });
    std::vector<std::string> out;
    for (auto& item : items) out.push_back(std::move(item.label));
    return out;
}

void collect_flips(const std::vector<std::string>& baseline, const std::vector<std::string>& here,
                   const std::string& metric, double epsilon, std::size_t delta, std::vector<RankingChange>& flips) {
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < here.size(); ++i) position[here[i]] = i;
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        for (std::size_t j = i + 1; j < baseline.size(); ++j) {
            if (position[baseline[i]] > position[baseline[j]]) {
                flips.push_back({metric, epsilon, delta, baseline[i], baseline[j]});
            }
        }
    }
}

}  // namespace

SensitivityReport sensitivity_scan(std::span<const PerformanceCurve> curves, std::span<const double> epsilons,
                                   std::span<const std::size_t> deltas) {
    if (curves.size() < 2) throw ValidationError("sensitivity scan needs at least two curves");
    if (epsilons.empty() || deltas.empty()) throw ValidationError("sensitivity scan needs non-empty ranges");

    SensitivityReport report;
    report.epsilons.assign(epsilons.begin(), epsilons.end());
    report.deltas.assign(deltas.begin(), deltas.end());

    for (const auto& curve : curves) {
        const double sd = f1_standard_deviation(curve);
        report.f1_std_mean += sd;
        report.f1_std_max = std::max(report.f1_std_max, sd);
    }
    report.f1_std_mean /= static_cast<double>(curves.size());

    for (double epsilon : epsilons) {
        for (std::size_t delta : deltas) {
            std::vector<Ranked> by_rsc;
            std::vector<Ranked> by_rss;
            for (const auto& curve : curves) {
                by_rsc.push_back({curve.label.to_string(), rsc(curve, epsilon).rsc});
                by_rss.push_back({curve.label.to_string(), rss(curve, delta).rss});
            }
            report.rankings.push_back({epsilon, delta, rank_order(std::move(by_rsc)), rank_order(std::move(by_rss))});
        }
    }

    const auto& base = report.rankings.front();
    for (std::size_t i = 1; i < report.rankings.size(); ++i) {
        const auto& r = report.rankings[i];
        collect_flips(base.by_rsc, r.by_rsc, "rsc", r.epsilon, r.delta, report.flips);
        collect_flips(base.by_rss, r.by_rss, "rss", r.epsilon, r.delta, report.flips);
    }
    report.invariant = report.flips.empty();
    return report;
}

}  // namespace ragged
