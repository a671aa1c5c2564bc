#include "ragged/analysis.hpp"

#include <algorithm>
#include <unordered_set>

#include "ragged/error.hpp"

namespace ragged {
namespace {

std::vector<double> values_on_grid(const PerformanceCurve& curve, std::span<const std::size_t> grid) {
    curve.validate();
    if (grid.empty()) throw ValidationError("comparison grid is empty");
    std::vector<double> out;
    for (auto k : grid) {
        const auto f1 = curve.f1_at(k);
        if (!f1) {
            throw ValidationError("curve " + curve.label.to_string() + " has no point at k=" + std::to_string(k));
        }
        out.push_back(*f1);
    }
    return out;
}

std::string join_ks(std::span<const std::size_t> ks) {
    std::string out;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (i > 0) out += ", ";
        out += std::to_string(ks[i]);
    }
    return out;
}

}  // namespace

std::string to_string(SliceKind kind) {
    switch (kind) {
        case SliceKind::gold_found: return "gold_found";
        case SliceKind::no_gold: return "no_gold";
        case SliceKind::gold_page_only: return "gold_page_only";
    }
    return "gold_found";
}

std::string to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::always_better: return "always_better";
        case Verdict::always_worse: return "always_worse";
        case Verdict::conditional: return "conditional";
    }
    return "conditional";
}

std::string to_string(Behavior behavior) {
    return behavior == Behavior::peak_then_decline ? "peak_then_decline" : "improve_then_plateau";
}

SliceResult slice_queries(const RetrievalRun& run, const QuerySet& queries, const Corpus& corpus,
                          const SlicePredicate& predicate) {
    if (predicate.k < 1) throw ValidationError("slice depth k must be >= 1");
    if (run.max_k() < predicate.k) {
        throw ValidationError("run '" + run.retriever_name + "' has depth " + std::to_string(run.max_k()) +
                              ", shallower than slice k=" + std::to_string(predicate.k));
    }
    SliceResult result;
    for (const auto& query : queries.queries()) {
        if (query.gold_passage_ids.empty()) {
            result.unscored.push_back(query.query_id);
            continue;
        }
        std::unordered_set<std::string> top;
        std::unordered_set<std::string> top_docs;
        if (const auto* entries = run.entries(query.query_id)) {
            const std::size_t depth = std::min(predicate.k, entries->size());
            for (std::size_t i = 0; i < depth; ++i) {
                const auto& pid = (*entries)[i].passage_id;
                top.insert(pid);
                if (const auto* p = corpus.find(pid)) top_docs.insert(p->doc_id);
            }
        }
        const MultihopRule rule =
            predicate.multihop_rule.value_or(query.multihop ? MultihopRule::all_gold : MultihopRule::any_gold);
        std::size_t found = 0;
        for (const auto& g : query.gold_passage_ids) found += top.contains(g) ? 1 : 0;
        const bool gold_found =
            rule == MultihopRule::all_gold ? found == query.gold_passage_ids.size() : found > 0;

        bool member = false;
        switch (predicate.kind) {
            case SliceKind::gold_found: member = gold_found; break;
            case SliceKind::no_gold: member = !gold_found; break;
            case SliceKind::gold_page_only: {
                if (found > 0) break;
                std::unordered_set<std::string> gold_docs(query.gold_doc_ids.begin(), query.gold_doc_ids.end());
                for (const auto& g : query.gold_passage_ids) {
                    if (const auto* p = corpus.find(g)) gold_docs.insert(p->doc_id);
                }
                member = std::any_of(gold_docs.begin(), gold_docs.end(),
                                     [&](const std::string& d) { return top_docs.contains(d); });
                break;
            }
        }
        (member ? result.in_slice : result.out_slice).push_back(query.query_id);
    }
    return result;
}

ClosedBookVerdict closed_book_verdict(const PerformanceCurve& curve, double no_context_f1,
                                      std::span<const std::size_t> grid) {
    const auto values = values_on_grid(curve, grid);
    ClosedBookVerdict result;
    result.no_context_f1 = no_context_f1;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (values[i] > no_context_f1) result.condition_ks.push_back(grid[i]);
    }
    if (result.condition_ks.size() == grid.size()) {
        result.verdict = Verdict::always_better;
    } else if (result.condition_ks.empty()) {
        result.verdict = Verdict::always_worse;
    } else {
        result.verdict = Verdict::conditional;
    }
    return result;
}

std::string render_verdict(const ClosedBookVerdict& verdict, std::span<const std::size_t> grid) {
    switch (verdict.verdict) {
        case Verdict::always_better: return "✓";
        case Verdict::always_worse: return "✗";
        case Verdict::conditional: break;
    }
    const auto& ks = verdict.condition_ks;
    if (ks.size() == 1) return "only for k = " + std::to_string(ks.front());
    const auto first = std::find(grid.begin(), grid.end(), ks.front());
    const bool contiguous = first != grid.end() && static_cast<std::size_t>(grid.end() - first) >= ks.size() &&
                            std::equal(ks.begin(), ks.end(), first);
    if (contiguous && first + static_cast<std::ptrdiff_t>(ks.size()) == grid.end()) {
        return "only for k ≥ " + std::to_string(ks.front());
    }
    if (contiguous && first == grid.begin()) return "only for k ≤ " + std::to_string(ks.back());
    return "only for k ∈ {" + join_ks(ks) + "}";
}

BehaviorClass classify_behavior(const PerformanceCurve& curve, double threshold) {
    curve.validate();
    if (curve.points.size() < 3) {
        throw ValidationError("behavior classification needs at least 3 points: " + curve.label.to_string());
    }
    BehaviorClass result;
    result.threshold_used = threshold;
    result.k_star = optimal_k(curve);
    result.peak_drop = *curve.f1_at(result.k_star) - curve.points.back().f1;
    const bool early_peak = result.k_star < curve.points.back().k;
    result.behavior = (result.peak_drop >= threshold && early_peak) ? Behavior::peak_then_decline
                                                                     : Behavior::improve_then_plateau;
    return result;
}

RetrieverDelta retriever_delta(const PerformanceCurve& a, const PerformanceCurve& b, std::span<const std::size_t> grid) {
    const auto va = values_on_grid(a, grid);
    const auto vb = values_on_grid(b, grid);
    RetrieverDelta delta;
    for (std::size_t i = 0; i < grid.size(); ++i) delta.average_difference += va[i] - vb[i];
    delta.average_difference /= static_cast<double>(grid.size());
    delta.optimal_difference = *a.f1_at(optimal_k(a)) - *b.f1_at(optimal_k(b));
    return delta;
}

double gain_over_closed_book(const PerformanceCurve& curve, double no_context_f1, std::span<const std::size_t> grid,
                             GainMode mode) {
    const auto values = values_on_grid(curve, grid);
    if (mode == GainMode::at_optimal) return *curve.f1_at(optimal_k(curve)) - no_context_f1;
    double total = 0.0;
    for (double v : values) total += v - no_context_f1;
    return total / static_cast<double>(values.size());
}

}  // namespace ragged
