#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "httplib.h"
#include "json.hpp"
#include "ragged/error.hpp"
#include "ragged/parallel.hpp"
#include "ragged/retrieval.hpp"
#include "ragged/text.hpp"

namespace ragged {

std::vector<double> OverlapScorer::score(const std::string& question, std::span<const ScoringCandidate> candidates) {
    const auto question_tokens = text::tokenize(question);
    const std::set<std::string> wanted(question_tokens.begin(), question_tokens.end());
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const auto& candidate : candidates) {
        const auto tokens = text::tokenize(candidate.text);
        std::set<std::string> present;
        for (const auto& t : tokens) {
            if (wanted.contains(t)) present.insert(t);
        }
        scores.push_back(static_cast<double>(present.size()));
    }
    return scores;
}

HttpScorer::HttpScorer(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.base_url.empty()) throw ValidationError("reranker endpoint base_url is empty");
}

std::vector<double> HttpScorer::score(const std::string& question, std::span<const ScoringCandidate> candidates) {
    nlohmann::ordered_json request;
    request["question"] = question;
    request["passages"] = nlohmann::ordered_json::array();
    for (const auto& c : candidates) request["passages"].push_back({{"passage_id", c.passage_id}, {"text", c.text}});

    httplib::Client client(endpoint_.base_url);
    client.set_connection_timeout(endpoint_.timeout_seconds, 0);
    client.set_read_timeout(endpoint_.timeout_seconds, 0);
    httplib::Headers headers(endpoint_.headers.begin(), endpoint_.headers.end());
    const auto response = client.Post(endpoint_.path, headers, request.dump(), "application/json");
    if (!response) {
        throw BackendError("reranker request to " + endpoint_.base_url + endpoint_.path +
                           " failed: " + httplib::to_string(response.error()));
    }
    if (response->status != 200) {
        throw BackendError("reranker returned HTTP " + std::to_string(response->status));
    }
    try {
        const auto body = nlohmann::json::parse(response->body);
        auto scores = body.at("scores").get<std::vector<double>>();
        if (scores.size() != candidates.size()) {
            throw BackendError("reranker returned " + std::to_string(scores.size()) + " scores for " +
                               std::to_string(candidates.size()) + " passages");
        }
        return scores;
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("reranker response malformed: ") + e.what());
    }
}

RetrievalRun rerank(const RetrievalRun& run, const QuerySet& queries, const Corpus& corpus, PassageScorer& scorer,
                    const RerankOptions& options) {
    if (options.depth < 1) throw ValidationError("rerank depth must be >= 1");
    if (options.depth > run.max_k()) {
        throw ValidationError("rerank depth " + std::to_string(options.depth) + " exceeds run depth " +
                              std::to_string(run.max_k()));
    }

    std::vector<const std::string*> qids;
    for (const auto& [qid, entries] : run.by_query) qids.push_back(&qid);
    std::vector<std::vector<RunEntry>> reranked(qids.size());

    parallel_for(qids.size(), options.parallelism, [&](std::size_t i) {
        const std::string& qid = *qids[i];
        const auto& entries = run.by_query.at(qid);
        const std::size_t depth = std::min(options.depth, entries.size());
        const auto& question = queries.at(qid).question;

        std::vector<ScoringCandidate> candidates;
        candidates.reserve(depth);
        for (std::size_t r = 0; r < depth; ++r) {
            candidates.push_back({entries[r].passage_id, corpus.at(entries[r].passage_id).text});
        }
        std::vector<double> scores;
        try {
            scores = scorer.score(question, candidates);
        } catch (const std::exception& e) {
            throw BackendError("reranking query '" + qid + "': " + e.what());
        }
        if (scores.size() != depth) {
            throw BackendError("reranking query '" + qid + "': scorer returned " + std::to_string(scores.size()) +
                               " scores for " + std::to_string(depth) + " passages");
        }

        for (double s : scores) {
            if (!std::isfinite(s)) throw BackendError("reranking query '" + qid + "': scorer returned a non-finite score");
        }

        std::vector<std::size_t> order(depth);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

        // Keep the run score-monotone across the reranked/untouched boundary.
        double shift = 0.0;
        double floor = -std::numeric_limits<double>::infinity();
        if (depth < entries.size() && depth > 0) {
            const double lowest = scores[order.back()];
            floor = entries[depth].score;
            if (lowest < floor) shift = floor - lowest;
        }

        auto& out = reranked[i];
        out.reserve(entries.size());
        for (std::size_t r = 0; r < depth; ++r) {
            out.push_back({entries[order[r]].passage_id, std::max(scores[order[r]] + shift, floor), r + 1});
        }
        for (std::size_t r = depth; r < entries.size(); ++r) out.push_back(entries[r]);
    });

    RetrievalRun result;
    result.retriever_name = run.retriever_name + "+rerank";
    for (std::size_t i = 0; i < qids.size(); ++i) result.by_query.emplace(*qids[i], std::move(reranked[i]));
    return result;
}

}  // namespace ragged
