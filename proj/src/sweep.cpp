#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "ragged/error.hpp"
#include "ragged/metrics.hpp"
#include "ragged/parallel.hpp"
#include "ragged/reader.hpp"
#include "ragged/text.hpp"

namespace ragged {
namespace {

struct Job {
    const Query* query = nullptr;
    ConditionTag condition = ConditionTag::top_k;
    std::size_t k = 0;
    PromptVariant variant = PromptVariant::standard;
};

std::string first_line(const std::string& generated) {
    const auto end = generated.find('\n');
    return text::trim(end == std::string::npos ? generated : generated.substr(0, end));
}

void validate_grid(const std::vector<std::size_t>& grid) {
    if (grid.empty()) throw ValidationError("k grid must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < 1) throw ValidationError("k grid values must be >= 1");
        if (i > 0 && grid[i] <= grid[i - 1]) throw ValidationError("k grid must be strictly increasing");
    }
}

}  // namespace

AnswerStore::AnswerStore(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw ValidationError("cannot read answers file: " + path_.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);

    bool torn_tail = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        ReaderAnswer answer;
        try {
            answer = answer_from_json_line(lines[i]);
        } catch (const ValidationError& e) {
            if (i + 1 == lines.size()) {
                torn_tail = true;
                break;
            }
            throw ValidationError(path_.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
        const auto key = answer_key(answer);
        if (!answers_.emplace(key, std::move(answer)).second) {
            throw ValidationError(path_.string() + ":" + std::to_string(i + 1) + ": duplicate answer record");
        }
    }
    if (torn_tail) finalize();
}

bool AnswerStore::contains(const AnswerKey& key) const {
    std::lock_guard lock(mutex_);
    return answers_.contains(key);
}

void AnswerStore::append(const ReaderAnswer& answer) {
    std::lock_guard lock(mutex_);
    if (!answers_.emplace(answer_key(answer), answer).second) return;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw ValidationError("cannot append to answers file: " + path_.string());
    out << answer_to_json_line(answer) << '\n';
    out.flush();
}

void AnswerStore::finalize() {
    std::lock_guard lock(mutex_);
    std::vector<const ReaderAnswer*> sorted;
    for (const auto& [key, a] : answers_) sorted.push_back(&a);
    std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return answer_order(*a, *b); });
    const auto tmp = std::filesystem::path(path_.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write answers file: " + path_.string());
        for (const auto* a : sorted) out << answer_to_json_line(*a) << '\n';
    }
    std::filesystem::rename(tmp, path_);
}

std::vector<ReaderAnswer> AnswerStore::answers() const {
    std::lock_guard lock(mutex_);
    std::vector<ReaderAnswer> out;
    out.reserve(answers_.size());
    for (const auto& [key, a] : answers_) out.push_back(a);
    std::sort(out.begin(), out.end(), answer_order);
    return out;
}

std::size_t AnswerStore::size() const {
    std::lock_guard lock(mutex_);
    return answers_.size();
}

std::vector<ReaderAnswer> load_answers(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("answers file not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    std::vector<ReaderAnswer> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(answer_from_json_line(line));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    std::sort(out.begin(), out.end(), answer_order);
    return out;
}

SweepStats run_sweep(const QuerySet& queries, const Corpus& corpus, const RetrievalRun& run,
                     const ReaderConfig& config, ReaderBackend& backend, const SweepSpec& spec, AnswerStore& store) {
    validate_reader_config(config);
    validate_grid(spec.k_grid);
    if (spec.conditions.empty()) throw ValidationError("sweep needs at least one context condition");
    const std::vector<PromptVariant> variants =
        spec.variants.empty() ? std::vector<PromptVariant>{config.prompt_variant} : spec.variants;

    std::vector<Job> jobs;
    std::atomic<std::size_t> skipped{0};
    std::atomic<std::size_t> unsatisfied{0};
    for (const auto& query : queries.queries()) {
        for (auto condition : spec.conditions) {
            for (auto variant : variants) {
                if (condition == ConditionTag::no_context) {
                    jobs.push_back({&query, condition, 0, variant});
                    continue;
                }
                for (auto k : spec.k_grid) jobs.push_back({&query, condition, k, variant});
            }
        }
    }

    std::vector<Job> pending;
    for (const auto& job : jobs) {
        const AnswerKey key{job.query->query_id, run.retriever_name, config.reader_name, job.condition, job.k,
                            job.variant};
        if (store.contains(key)) {
            ++skipped;
        } else {
            pending.push_back(job);
        }
    }

    std::atomic<std::size_t> executed{0};
    std::atomic<std::size_t> failed{0};
    parallel_for(pending.size(), config.parallelism, [&](std::size_t i) {
        const Job& job = pending[i];
        const Query& query = *job.query;
        std::vector<ContextPassage> selected;
        if (job.condition == ConditionTag::top_gold && query.gold_passage_ids.empty()) {
            ++unsatisfied;
            return;
        }
        try {
            selected = select_context(query, run, corpus, {job.condition, job.k});
        } catch (const ConditionUnsatisfied&) {
            ++unsatisfied;
            return;
        }
        auto context = truncate_context(std::move(selected), config.context_token_budget);

        CompletionRequest request;
        request.prompt = assemble_prompt(query.question, context.passages, job.variant,
                                         job.condition != ConditionTag::no_context);
        request.max_tokens = config.max_answer_tokens;
        request.decoding = config.decoding;
        request.query_id = query.query_id;
        for (const auto& p : context.passages) request.context_passage_ids.push_back(p.passage_id);

        ReaderAnswer answer;
        answer.query_id = query.query_id;
        answer.retriever = run.retriever_name;
        answer.reader = config.reader_name;
        answer.condition = job.condition;
        answer.k = job.k;
        answer.variant = job.variant;
        answer.truncated = context.truncated;
        answer.context_tokens = context.token_count;

        auto backoff = config.retry.initial_backoff;
        for (int attempt = 1; attempt <= config.retry.attempts; ++attempt) {
            try {
                answer.answer = first_line(backend.complete(request));
                answer.error.reset();
                break;
            } catch (const std::exception& e) {
                answer.error = std::string(e.what());
                if (attempt < config.retry.attempts && backoff.count() > 0) {
                    std::this_thread::sleep_for(backoff);
                    backoff *= 2;
                }
            }
        }
        if (answer.error) {
            answer.answer.clear();
            ++failed;
        }
        store.append(answer);
        ++executed;
    });
    store.finalize();

    return SweepStats{executed.load(), skipped.load(), failed.load(), unsatisfied.load()};
}

TruncationMaskingReport truncation_masking_check(std::span<const ReaderAnswer> at_lower_k,
                                                 std::span<const ReaderAnswer> at_higher_k,
                                                 const QuerySet& queries) {
    auto index = [](std::span<const ReaderAnswer> answers, const char* side) {
        std::map<std::string, const ReaderAnswer*> out;
        for (const auto& a : answers) {
            if (!out.emplace(a.query_id, &a).second) {
                throw ValidationError(std::string("truncation check: duplicate query '") + a.query_id + "' in " + side +
                                      " answers");
            }
        }
        return out;
    };
    const auto lo = index(at_lower_k, "lower-k");
    const auto hi = index(at_higher_k, "higher-k");
    if (lo.size() != hi.size() ||
        !std::equal(lo.begin(), lo.end(), hi.begin(), [](const auto& a, const auto& b) { return a.first == b.first; })) {
        throw ValidationError("truncation check: answer sets cover different queries");
    }
    TruncationMaskingReport report;
    report.query_count = lo.size();
    if (lo.empty()) return report;
    std::size_t longer = 0;
    double delta = 0.0;
    for (const auto& [qid, low] : lo) {
        const auto* high = hi.at(qid);
        if (high->context_tokens > low->context_tokens) ++longer;
        const auto& gold = queries.at(qid).gold_answers;
        delta += std::abs(unigram_f1(high->answer, gold) - unigram_f1(low->answer, gold));
    }
    report.share_with_longer_input = static_cast<double>(longer) / static_cast<double>(lo.size());
    report.mean_abs_f1_delta = delta / static_cast<double>(lo.size());
    return report;
}

}  // namespace ragged
