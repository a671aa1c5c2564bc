#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ragged {

struct Passage {
    std::string passage_id;
    std::string doc_id;
    std::string title;
    std::string text;

    bool operator==(const Passage&) const = default;
};

struct Query {
    std::string query_id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<std::string> gold_passage_ids;
    std::vector<std::string> gold_doc_ids;
    bool multihop = false;

    bool operator==(const Query&) const = default;
};

struct CorpusStats {
    std::size_t passage_count = 0;
    std::size_t doc_count = 0;
    double avg_passages_per_doc = 0.0;
};

/// Immutable passage collection indexed by passage_id. Passages keep file order.
class Corpus {
public:
    Corpus() = default;
    /// Throws ValidationError on duplicate ids or invalid passages.
    explicit Corpus(std::vector<Passage> passages);

    const std::vector<Passage>& passages() const { return passages_; }
    std::size_t size() const { return passages_.size(); }
    bool empty() const { return passages_.empty(); }

    const Passage* find(const std::string& passage_id) const;
    /// Throws ValidationError for unknown ids.
    const Passage& at(const std::string& passage_id) const;
    /// Position of the passage in file order.
    std::optional<std::size_t> position(const std::string& passage_id) const;

    CorpusStats stats() const;

private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

class QuerySet {
public:
    QuerySet() = default;
    /// Throws ValidationError on duplicate ids or invalid queries.
    explicit QuerySet(std::vector<Query> queries);

    const std::vector<Query>& queries() const { return queries_; }
    std::size_t size() const { return queries_.size(); }
    const Query* find(const std::string& query_id) const;
    const Query& at(const std::string& query_id) const;

    /// Fills empty gold_doc_ids from the doc_ids of known gold passages and
    /// returns one warning per gold passage id absent from the corpus.
    /// Throws ValidationError when explicit gold_doc_ids miss the doc of a
    /// known gold passage.
    std::vector<std::string> resolve_against(const Corpus& corpus);

private:
    std::vector<Query> queries_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Checks the Passage invariants; throws ValidationError.
void validate_passage(const Passage& passage);
/// Checks the Query invariants that need no corpus; throws ValidationError.
void validate_query(const Query& query);

/// Reads corpus JSON Lines ({"passage_id","doc_id","title","text"}).
/// Errors cite 1-based line numbers; blank lines are skipped.
Corpus ingest_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, const std::string& source_name);

/// Reads query JSON Lines. gold_passage_ids, gold_doc_ids, multihop are optional.
QuerySet ingest_queries(const std::filesystem::path& path);
QuerySet parse_queries(std::istream& in, const std::string& source_name);

void write_corpus(std::ostream& out, const Corpus& corpus);
void write_queries(std::ostream& out, const QuerySet& queries);

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace ragged
