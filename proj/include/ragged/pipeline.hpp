#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "json.hpp"
#include "ragged/config.hpp"
#include "ragged/dataset_store.hpp"
#include "ragged/metrics.hpp"
#include "ragged/reader.hpp"
#include "ragged/retrieval.hpp"

namespace ragged {

/// Files a pipeline writes under output_dir.
struct OutputLayout {
    std::filesystem::path dir;

    std::filesystem::path index() const { return dir / "index.json"; }
    std::filesystem::path run() const { return dir / "run.trec"; }
    std::filesystem::path answers() const { return dir / "answers.jsonl"; }
    std::filesystem::path curves() const { return dir / "curves.csv"; }
    std::filesystem::path metrics() const { return dir / "metrics.json"; }
    std::filesystem::path verdicts() const { return dir / "verdicts.json"; }
    std::filesystem::path behavior() const { return dir / "behavior.json"; }
    std::filesystem::path slices() const { return dir / "slices.json"; }
    std::filesystem::path report() const { return dir / "report.md"; }
    std::filesystem::path plots() const { return dir / "plots"; }
};

struct IndexResult {
    bool rebuilt = false;
    CorpusStats stats;
    std::string corpus_hash;
};

struct EvaluateResult {
    std::vector<PerformanceCurve> curves;
    nlohmann::ordered_json metrics;
    nlohmann::ordered_json verdicts;
    nlohmann::ordered_json behavior;
    nlohmann::ordered_json slices;  ///< null in curve-replay mode
};

struct ReportResult {
    std::vector<std::filesystem::path> files;
};

std::unique_ptr<ReaderBackend> make_reader_backend(const BackendConfig& backend, const QuerySet* queries);
std::unique_ptr<PassageScorer> make_scorer(const BackendConfig& backend);

/// Loads the corpus and queries, resolving gold documents; warnings go to `log`.
std::pair<Corpus, QuerySet> load_dataset(const PipelineConfig& config, std::ostream& log);

/// Builds and saves the BM25 index; a no-op when the saved index already
/// matches the corpus hash and parameters.
IndexResult cmd_index(const PipelineConfig& config, std::ostream& log);

/// Writes run.trec to depth max(k_grid): BM25 over the saved index or an
/// imported run, reranked when configured.
RetrievalRun cmd_retrieve(const PipelineConfig& config, std::ostream& log);

/// Runs every configured reader over run.trec into answers.jsonl (resumable).
SweepStats cmd_sweep(const PipelineConfig& config, std::ostream& log);

/// Builds curves (from answers, or from curves_input in replay mode) and
/// writes curves.csv, metrics.json, verdicts.json, behavior.json and, when
/// answers are available, slices.json.
EvaluateResult cmd_evaluate(const PipelineConfig& config, std::ostream& log);

/// Writes report.md and one SVG per (dataset, retriever) from curves.csv
/// (or curves_input). Throws ValidationError when there is nothing to report.
ReportResult cmd_report(const PipelineConfig& config, std::ostream& log);

}  // namespace ragged
