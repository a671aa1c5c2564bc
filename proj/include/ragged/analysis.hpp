#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ragged/dataset_store.hpp"
#include "ragged/metrics.hpp"
#include "ragged/retrieval.hpp"

namespace ragged {

enum class SliceKind { gold_found, no_gold, gold_page_only };
enum class MultihopRule { any_gold, all_gold };

std::string to_string(SliceKind kind);

struct SlicePredicate {
    SliceKind kind = SliceKind::gold_found;
    std::size_t k = 1;
    /// Unset: all_gold for multihop queries, any_gold otherwise.
    std::optional<MultihopRule> multihop_rule;
};

struct SliceResult {
    std::vector<std::string> in_slice;
    std::vector<std::string> out_slice;
    std::vector<std::string> unscored;  ///< queries without gold passages
};

/// Partitions queries with gold passages by what their top-k holds.
/// gold_found: any (or all, for multihop) gold passages present. no_gold:
/// the complement. gold_page_only: no gold passage but a passage from a
/// gold document. Throws ValidationError when the run is shallower than k.
SliceResult slice_queries(const RetrievalRun& run, const QuerySet& queries, const Corpus& corpus,
                          const SlicePredicate& predicate);

enum class Verdict { always_better, always_worse, conditional };

std::string to_string(Verdict verdict);

struct ClosedBookVerdict {
    Verdict verdict = Verdict::conditional;
    std::vector<std::size_t> condition_ks;  ///< depths where RAG F1 > closed-book F1
    double no_context_f1 = 0.0;
};

/// Strict comparison of curve F1 against the closed-book score at each grid depth.
ClosedBookVerdict closed_book_verdict(const PerformanceCurve& curve, double no_context_f1,
                                      std::span<const std::size_t> grid);

/// Table cell text: "✓", "✗", or "only for k ≥ 5" / "only for k ≤ 2" /
/// "only for k = 1" / "only for k ∈ {2, 10}".
std::string render_verdict(const ClosedBookVerdict& verdict, std::span<const std::size_t> grid);

enum class Behavior { improve_then_plateau, peak_then_decline };

std::string to_string(Behavior behavior);

struct BehaviorClass {
    Behavior behavior = Behavior::improve_then_plateau;
    double peak_drop = 0.0;  ///< F1(k*) - F1(k_max)
    double threshold_used = 0.0;
    std::size_t k_star = 0;
};

/// peak_then_decline iff peak_drop >= threshold and k* is below the deepest point.
BehaviorClass classify_behavior(const PerformanceCurve& curve, double threshold = 2.0);

struct RetrieverDelta {
    double average_difference = 0.0;
    double optimal_difference = 0.0;
};

/// (mean over grid of f1_a - f1_b, f1_a(k*_a) - f1_b(k*_b)).
RetrieverDelta retriever_delta(const PerformanceCurve& a, const PerformanceCurve& b, std::span<const std::size_t> grid);

enum class GainMode { average, at_optimal };

/// Gain of RAG over closed-book: mean over the grid, or at k*.
double gain_over_closed_book(const PerformanceCurve& curve, double no_context_f1, std::span<const std::size_t> grid,
                             GainMode mode);

}  // namespace ragged
