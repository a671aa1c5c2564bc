#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragged/dataset_store.hpp"

namespace ragged {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// Throws ValidationError unless k1 > 0 and 0 <= b <= 1.
void validate_bm25_params(const Bm25Params& params);

struct Posting {
    std::uint32_t doc = 0;  ///< position in passage_ids()
    std::uint32_t term_frequency = 0;

    bool operator==(const Posting&) const = default;
};

struct ScoredPassage {
    std::string passage_id;
    double score = 0.0;
};

/// BM25 inverted index over a corpus. Read-only after construction; search
/// is safe from any number of threads.
///
/// Score of passage d for query tokens q_1..q_n (repeated tokens count once
/// per occurrence):
///   sum_i idf(q_i) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl))
///   idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1)
class InvertedIndex {
public:
    static InvertedIndex build(const Corpus& corpus, Bm25Params params = {});

    /// Top-k passages sharing at least one token with the query, by score
    /// descending then passage_id ascending. Throws ValidationError when k < 1
    /// or the query has no tokens.
    std::vector<ScoredPassage> search(const std::string& query, std::size_t k) const;

    const std::vector<Posting>* postings(const std::string& term) const;
    const std::map<std::string, std::vector<Posting>>& all_postings() const { return postings_; }
    const std::vector<std::string>& passage_ids() const { return passage_ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
    double avg_doc_length() const { return avg_doc_length_; }
    std::size_t passage_count() const { return passage_ids_.size(); }
    const Bm25Params& params() const { return params_; }

    double idf(std::size_t document_frequency) const;

    /// Serialized as JSON; `corpus_hash` identifies the source corpus.
    void save(const std::filesystem::path& path, const std::string& corpus_hash) const;
    static InvertedIndex load(const std::filesystem::path& path, std::string* corpus_hash = nullptr);

private:
    std::map<std::string, std::vector<Posting>> postings_;
    std::vector<std::string> passage_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    Bm25Params params_;
};

struct RunEntry {
    std::string passage_id;
    double score = 0.0;
    std::size_t rank = 0;  ///< 1-based
};

/// Ranked passage lists per query for one retriever.
struct RetrievalRun {
    std::string retriever_name;
    std::map<std::string, std::vector<RunEntry>> by_query;

    std::size_t max_k() const;
    const std::vector<RunEntry>* entries(const std::string& query_id) const;
};

/// Checks contiguous ranks, non-increasing scores and unique passages per query.
void validate_run(const RetrievalRun& run);

/// Runs bm25 search for every query to the given depth.
RetrievalRun run_bm25(const InvertedIndex& index, const QuerySet& queries, std::size_t depth,
                      const std::string& retriever_name = "bm25");

/// Parses a TREC run ("query_id Q0 passage_id rank score tag" per line).
RetrievalRun parse_run(std::istream& in, const std::string& source_name, const std::string& retriever_name);
RetrievalRun import_run(const std::filesystem::path& path, const std::string& retriever_name);

/// Writes TREC format with scores to 6 decimals and the retriever name as tag.
void write_run(std::ostream& out, const RetrievalRun& run);
void export_run(const std::filesystem::path& path, const RetrievalRun& run);

struct ScoringCandidate {
    std::string passage_id;
    std::string text;
};

/// Relevance scorer used for reranking. Implementations must be callable
/// from several threads at once.
class PassageScorer {
public:
    virtual ~PassageScorer() = default;
    /// One score per candidate, aligned by position.
    virtual std::vector<double> score(const std::string& question,
                                      std::span<const ScoringCandidate> candidates) = 0;
};

/// Wraps a callable; used for tests and in-process scorers.
class FunctionScorer : public PassageScorer {
public:
    using Fn = std::function<std::vector<double>(const std::string&, std::span<const ScoringCandidate>)>;
    explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
    std::vector<double> score(const std::string& question, std::span<const ScoringCandidate> candidates) override {
        return fn_(question, candidates);
    }

private:
    Fn fn_;
};

/// Deterministic mock: score = number of distinct question tokens present in the passage.
class OverlapScorer : public PassageScorer {
public:
    std::vector<double> score(const std::string& question, std::span<const ScoringCandidate> candidates) override;
};

struct HttpEndpoint {
    std::string base_url;  ///< e.g. http://127.0.0.1:8080
    std::string path = "/";
    std::map<std::string, std::string> headers;
    int timeout_seconds = 30;
};

/// POSTs {"question","passages":[{"passage_id","text"}]} and expects {"scores":[...]}.
class HttpScorer : public PassageScorer {
public:
    explicit HttpScorer(HttpEndpoint endpoint);
    std::vector<double> score(const std::string& question, std::span<const ScoringCandidate> candidates) override;

private:
    HttpEndpoint endpoint_;
};

struct RerankOptions {
    std::size_t depth = 10;
    std::size_t parallelism = 4;
};

/// Reorders the top `depth` entries of every query by scorer score
/// (descending, original rank breaks ties). Entries below depth keep their
/// order and scores; reranked scores are shifted up when needed so the run
/// stays score-monotone. Scorer failures surface as BackendError naming the query.
RetrievalRun rerank(const RetrievalRun& run, const QuerySet& queries, const Corpus& corpus, PassageScorer& scorer,
                    const RerankOptions& options);

}  // namespace ragged
