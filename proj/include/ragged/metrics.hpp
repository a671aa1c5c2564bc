#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ragged/dataset_store.hpp"
#include "ragged/reader.hpp"
#include "ragged/retrieval.hpp"

namespace ragged {

struct F1Options {
    bool normalize = true;  ///< SQuAD normalization; when off, tokens are whitespace-split only
};

/// Unigram F1 on the 0-100 scale, maximized over gold answers. Throws
/// ValidationError when gold_answers is empty.
double unigram_f1(const std::string& prediction, std::span<const std::string> gold_answers,
                  const F1Options& options = {});

enum class RecallLevel { passage, document };

struct RecallReport {
    double recall = 0.0;           ///< mean over scored queries, 0-100
    std::size_t scored = 0;
    std::size_t excluded = 0;      ///< queries with no gold ids at this level
};

/// Mean fraction of gold ids found in each query's top-k. Document level maps
/// retrieved passages to doc ids through the corpus and deduplicates.
RecallReport recall_at_k(const RetrievalRun& run, const QuerySet& queries, const Corpus& corpus, std::size_t k,
                         RecallLevel level);

struct CurveLabel {
    std::string dataset;
    std::string retriever;
    std::string reader;
    std::string condition = "top_k";
    std::string variant = "standard";

    auto operator<=>(const CurveLabel&) const = default;
    std::string to_string() const;
};

struct CurvePoint {
    std::size_t k = 0;
    double f1 = 0.0;

    bool operator==(const CurvePoint&) const = default;
};

/// Mean F1 (0-100) as a function of retrieval depth.
struct PerformanceCurve {
    CurveLabel label;
    std::vector<CurvePoint> points;

    /// Throws ValidationError if empty, k not strictly increasing, or f1 outside [0, 100].
    void validate() const;
    std::optional<double> f1_at(std::size_t k) const;
    std::vector<std::size_t> ks() const;
};

/// Mean F1 per depth over `answers` (error-flagged answers score their stored text).
PerformanceCurve build_curve(std::span<const ReaderAnswer> answers, const QuerySet& queries, CurveLabel label,
                             const F1Options& options = {});

/// Mean F1 over a set of answers; used for the no-context baseline and slices.
double mean_f1(std::span<const ReaderAnswer> answers, const QuerySet& queries, const F1Options& options = {});

/// Depth with the highest F1; ties go to the smallest k.
std::size_t optimal_k(const PerformanceCurve& curve);

struct StabilityReport {
    std::size_t k_star = 0;
    std::size_t delta = 0;
    std::optional<double> rss;         ///< unset when the window is empty
    std::vector<std::size_t> window_points_used;
    bool defined = false;
};

/// Stability: min F1 over evaluated depths in [k*-delta, k*+delta] other
/// than k*, divided by F1(k*).
StabilityReport rss(const PerformanceCurve& curve, std::size_t delta);

struct ScalabilityReport {
    double epsilon = 0.0;
    std::optional<std::size_t> k_last_gain;
    double rsc = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> gain_segments;
};

/// Scalability: trapezoid area under the curve from the first depth up to
/// the end of the initial run of consecutive gains >= epsilon.
ScalabilityReport rsc(const PerformanceCurve& curve, double epsilon);

struct RankingChange {
    std::string metric;              ///< "rsc" or "rss"
    double epsilon = 0.0;
    std::size_t delta = 0;
    std::string higher_at_baseline;  ///< curve label ranked above at the first (epsilon, delta)
    std::string higher_here;         ///< curve label ranked above at this (epsilon, delta)
};

struct SensitivityReport {
    std::vector<double> epsilons;
    std::vector<std::size_t> deltas;
    bool invariant = true;
    std::vector<RankingChange> flips;
    double f1_std_mean = 0.0;  ///< mean over curves of the per-curve F1 standard deviation
    double f1_std_max = 0.0;
    /// Ranking per (epsilon, delta) in scan order, best first.
    struct Ranking {
        double epsilon = 0.0;
        std::size_t delta = 0;
        std::vector<std::string> by_rsc;
        std::vector<std::string> by_rss;
    };
    std::vector<Ranking> rankings;
};

/// Ranks curves by RSC and RSS for every (epsilon, delta) pair and reports
/// whether both orders stay the same as at the first pair. Curves with an
/// undefined RSS rank last. Ties rank by label.
SensitivityReport sensitivity_scan(std::span<const PerformanceCurve> curves, std::span<const double> epsilons,
                                   std::span<const std::size_t> deltas);

/// Population standard deviation of a curve's F1 values.
double f1_standard_deviation(const PerformanceCurve& curve);

// curves.csv: header dataset,retriever,reader,condition,variant,k,f1; f1 with 4 decimals.
void write_curves_csv(std::ostream& out, std::span<const PerformanceCurve> curves);
std::vector<PerformanceCurve> read_curves_csv(std::istream& in, const std::string& source_name);

}  // namespace ragged
