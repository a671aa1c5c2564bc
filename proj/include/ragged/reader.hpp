#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ragged/dataset_store.hpp"
#include "ragged/retrieval.hpp"

namespace ragged {

enum class PromptVariant { standard, relevant };
enum class ConditionTag { top_k, top_gold, no_context };

std::string to_string(PromptVariant variant);
std::string to_string(ConditionTag tag);
PromptVariant parse_prompt_variant(const std::string& name);
ConditionTag parse_condition_tag(const std::string& name);

struct ContextCondition {
    ConditionTag tag = ConditionTag::top_k;
    std::size_t k = 1;  ///< ignored for no_context
};

struct ContextPassage {
    std::string passage_id;
    std::string title;
    std::string text;
};

/// Instruction line for a prompt variant, without the "Instruction: " prefix.
const std::string& instruction_text(PromptVariant variant);

/// Builds the reader prompt:
///
///   Instruction: <instruction>
///   Context:
///   <title 1>
///   <text 1>
///
///   <title 2>
///   ...
///   Question: <question>
///   Answer:
///
/// The Context block is omitted when `include_context` is false. A passage
/// with an empty title contributes its text only.
std::string assemble_prompt(const std::string& question, std::span<const ContextPassage> passages,
                            PromptVariant variant, bool include_context = true);

struct TruncatedContext {
    std::vector<ContextPassage> passages;
    bool truncated = false;
    std::size_t token_count = 0;
};

/// Whitespace tokens a passage contributes to the context (title + text).
std::size_t passage_token_count(const ContextPassage& passage);

/// Keeps passages in order until `budget` whitespace tokens are used. The
/// passage that crosses the budget is cut mid-way (its kept tokens are
/// re-joined with single spaces); later passages are dropped.
TruncatedContext truncate_context(std::vector<ContextPassage> passages, std::size_t budget);

/// top_k: first k run entries. top_gold: gold passages among the first k, in
/// rank order (throws ConditionUnsatisfied when none). no_context: empty.
std::vector<ContextPassage> select_context(const Query& query, const RetrievalRun& run, const Corpus& corpus,
                                           const ContextCondition& condition);

struct DecodingConfig {
    bool greedy = true;
    int beam_size = 1;
    double temperature = 1.0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
};

struct CompletionRequest {
    std::string prompt;
    std::size_t max_tokens = 10;
    DecodingConfig decoding;
    // Harness-side metadata; never sent over the wire.
    std::string query_id;
    std::vector<std::string> context_passage_ids;
};

class ReaderBackend {
public:
    virtual ~ReaderBackend() = default;
    /// Returns generated text or throws. Must be safe to call concurrently.
    virtual std::string complete(const CompletionRequest& request) = 0;
};

/// Deterministic in-process reader.
class MockReaderBackend : public ReaderBackend {
public:
    enum class Mode {
        gold_echo,       ///< first gold answer if any gold passage is in context, else a fixed miss string
        fixed,           ///< always `fixed_text`
        first_context,   ///< first max_tokens whitespace tokens of the first context passage, or `fixed_text`
        always_fail,     ///< throws BackendError
    };

    MockReaderBackend(Mode mode, const QuerySet* queries = nullptr, std::string fixed_text = "unknown");

    std::string complete(const CompletionRequest& request) override;
    std::size_t calls() const { return calls_.load(); }

private:
    Mode mode_;
    const QuerySet* queries_;
    std::string fixed_text_;
    std::atomic<std::size_t> calls_{0};
};

/// Minimal completion API client: POST {"prompt","max_tokens","temperature",
/// "greedy","beam_size"} and read {"text"}. Bearer token, when configured,
/// comes from the named environment variable.
class HttpReaderBackend : public ReaderBackend {
public:
    HttpReaderBackend(HttpEndpoint endpoint, std::string auth_env_var = {});
    std::string complete(const CompletionRequest& request) override;

private:
    HttpEndpoint endpoint_;
    std::string auth_env_var_;
};

struct ReaderConfig {
    std::string reader_name;
    std::size_t context_token_budget = 2000;
    std::size_t max_answer_tokens = 10;
    PromptVariant prompt_variant = PromptVariant::standard;
    DecodingConfig decoding;
    RetryPolicy retry;
    std::size_t parallelism = 4;
};

/// Throws ValidationError on a non-positive budget or answer length.
void validate_reader_config(const ReaderConfig& config);

struct ReaderAnswer {
    std::string query_id;
    std::string retriever;
    std::string reader;
    ConditionTag condition = ConditionTag::top_k;
    std::size_t k = 0;  ///< 0 for no_context
    PromptVariant variant = PromptVariant::standard;
    std::string answer;
    bool truncated = false;
    std::size_t context_tokens = 0;
    std::optional<std::string> error;

    bool operator==(const ReaderAnswer&) const = default;
};

using AnswerKey = std::tuple<std::string, std::string, std::string, ConditionTag, std::size_t, PromptVariant>;
AnswerKey answer_key(const ReaderAnswer& answer);
/// Sort order for persisted answers: query_id, k, condition, variant, retriever, reader.
bool answer_order(const ReaderAnswer& lhs, const ReaderAnswer& rhs);

std::string answer_to_json_line(const ReaderAnswer& answer);
ReaderAnswer answer_from_json_line(const std::string& line);

/// Append-only answers.jsonl with a single serialized writer. A torn final
/// line (interrupted write) is dropped on open; corruption elsewhere throws.
class AnswerStore {
public:
    explicit AnswerStore(std::filesystem::path path);

    bool contains(const AnswerKey& key) const;
    void append(const ReaderAnswer& answer);
    /// Rewrites the file sorted by answer_order.
    void finalize();

    std::vector<ReaderAnswer> answers() const;
    std::size_t size() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::map<AnswerKey, ReaderAnswer> answers_;
};

std::vector<ReaderAnswer> load_answers(const std::filesystem::path& path);

struct SweepSpec {
    std::vector<std::size_t> k_grid;
    std::vector<ConditionTag> conditions{ConditionTag::top_k};
    /// Empty: the reader's own prompt_variant.
    std::vector<PromptVariant> variants;
};

struct SweepStats {
    std::size_t executed = 0;
    std::size_t skipped = 0;       ///< already persisted
    std::size_t failed = 0;        ///< recorded with an error flag
    std::size_t unsatisfied = 0;   ///< top_gold with no gold in top-k
};

/// Generates one answer per (query, k, condition, variant), skipping those
/// already in `store`. no_context runs once per query and variant (k = 0).
/// Backend failures after retries are recorded with an error and an empty
/// answer; the sweep continues.
SweepStats run_sweep(const QuerySet& queries, const Corpus& corpus, const RetrievalRun& run,
                     const ReaderConfig& config, ReaderBackend& backend, const SweepSpec& spec, AnswerStore& store);

struct TruncationMaskingReport {
    double share_with_longer_input = 0.0;
    double mean_abs_f1_delta = 0.0;
    std::size_t query_count = 0;
};

/// Compares answers for the same queries at two depths: the share whose
/// deeper context had strictly more tokens, and the mean |F1 delta|.
TruncationMaskingReport truncation_masking_check(std::span<const ReaderAnswer> at_lower_k,
                                                 std::span<const ReaderAnswer> at_higher_k,
                                                 const QuerySet& queries);

}  // namespace ragged
