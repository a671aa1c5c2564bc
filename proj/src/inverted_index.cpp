#include "ragged/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "ragged/error.hpp"
#include "ragged/text.hpp"

namespace ragged {

using json = nlohmann::json;

void validate_bm25_params(const Bm25Params& params) {
    if (!(params.k1 > 0.0)) throw ValidationError("bm25 k1 must be > 0");
    if (!(params.b >= 0.0 && params.b <= 1.0)) throw ValidationError("bm25 b must lie in [0, 1]");
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, Bm25Params params) {
    validate_bm25_params(params);
    if (corpus.empty()) throw ValidationError("cannot index an empty corpus");
    if (corpus.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError("corpus too large for 32-bit passage positions");
    }

    InvertedIndex index;
    index.params_ = params;
    index.passage_ids_.reserve(corpus.size());
    index.doc_lengths_.reserve(corpus.size());

    double total_length = 0.0;
    for (std::uint32_t doc = 0; doc < corpus.size(); ++doc) {
        const auto& passage = corpus.passages()[doc];
        const auto tokens = text::tokenize(passage.text);
        index.passage_ids_.push_back(passage.passage_id);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_length += static_cast<double>(tokens.size());

        std::map<std::string_view, std::uint32_t> counts;
        for (const auto& token : tokens) ++counts[token];
        for (const auto& [term, tf] : counts) {
            index.postings_[std::string(term)].push_back(Posting{doc, tf});
        }
    }
    index.avg_doc_length_ = total_length / static_cast<double>(corpus.size());
    return index;
}

double InvertedIndex::idf(std::size_t document_frequency) const {
    const auto n = static_cast<double>(passage_ids_.size());
    const auto df = static_cast<double>(document_frequency);
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::vector<ScoredPassage> InvertedIndex::search(const std::string& query, std::size_t k) const {
    if (k < 1) throw ValidationError("search depth k must be >= 1");
    const auto tokens = text::tokenize(query);
    if (tokens.empty()) throw ValidationError("query has no tokens after tokenization: '" + query + "'");

    std::vector<double> scores(passage_ids_.size(), 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<bool> seen(passage_ids_.size(), false);
    const double k1 = params_.k1;
    const double b = params_.b;

    for (const auto& token : tokens) {
        const auto* list = postings(token);
        if (list == nullptr) continue;
        const double weight = idf(list->size());
        for (const auto& posting : *list) {
            const double tf = posting.term_frequency;
            const double norm = 1.0 - b + b * static_cast<double>(doc_lengths_[posting.doc]) / avg_doc_length_;
            scores[posting.doc] += weight * (tf * (k1 + 1.0)) / (tf + k1 * norm);
            if (!seen[posting.doc]) {
                seen[posting.doc] = true;
                touched.push_back(posting.doc);
            }
        }
    }

    const auto better = [&](std::uint32_t lhs, std::uint32_t rhs) {
        if (scores[lhs] != scores[rhs]) return scores[lhs] > scores[rhs];
        return passage_ids_[lhs] < passage_ids_[rhs];
    };
    const std::size_t take = std::min(k, touched.size());
    std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);

    std::vector<ScoredPassage> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back({passage_ids_[touched[i]], scores[touched[i]]});
    return out;
}

void InvertedIndex::save(const std::filesystem::path& path, const std::string& corpus_hash) const {
    nlohmann::ordered_json doc;
    doc["format"] = "ragged-bm25-index";
    doc["version"] = 1;
    doc["corpus_hash"] = corpus_hash;
    doc["k1"] = params_.k1;
    doc["b"] = params_.b;
    doc["passage_ids"] = passage_ids_;
    doc["doc_lengths"] = doc_lengths_;
    auto& postings = doc["postings"];
    postings = nlohmann::ordered_json::object();
    for (const auto& [term, list] : postings_) {
        auto& arr = postings[term];
        arr = nlohmann::ordered_json::array();
        for (const auto& p : list) arr.push_back({p.doc, p.term_frequency});
    }
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write index file: " + path.string());
        out << doc.dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path, std::string* corpus_hash) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open index file: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
        if (doc.at("format") != "ragged-bm25-index") throw ValidationError("not a ragged index: " + path.string());
        InvertedIndex index;
        index.params_.k1 = doc.at("k1").get<double>();
        index.params_.b = doc.at("b").get<double>();
        validate_bm25_params(index.params_);
        index.passage_ids_ = doc.at("passage_ids").get<std::vector<std::string>>();
        index.doc_lengths_ = doc.at("doc_lengths").get<std::vector<std::uint32_t>>();
        if (index.passage_ids_.empty() || index.passage_ids_.size() != index.doc_lengths_.size()) {
            throw ValidationError("index file has inconsistent passage tables: " + path.string());
        }
        double total = 0.0;
        for (auto len : index.doc_lengths_) total += static_cast<double>(len);
        index.avg_doc_length_ = total / static_cast<double>(index.doc_lengths_.size());
        for (const auto& [term, list] : doc.at("postings").items()) {
            auto& out = index.postings_[term];
            for (const auto& pair : list) {
                Posting p{pair.at(0).get<std::uint32_t>(), pair.at(1).get<std::uint32_t>()};
                if (p.doc >= index.passage_ids_.size()) {
                    throw ValidationError("index posting refers to unknown passage in " + path.string());
                }
                out.push_back(p);
            }
        }
        if (corpus_hash != nullptr) *corpus_hash = doc.at("corpus_hash").get<std::string>();
        return index;
    } catch (const json::exception& e) {
        throw ValidationError("malformed index file " + path.string() + ": " + e.what());
    }
}

RetrievalRun run_bm25(const InvertedIndex& index, const QuerySet& queries, std::size_t depth,
                      const std::string& retriever_name) {
    RetrievalRun run;
    run.retriever_name = retriever_name;
    for (const auto& query : queries.queries()) {
        if (text::tokenize(query.question).empty()) continue;
        const auto hits = index.search(query.question, depth);
        if (hits.empty()) continue;
        auto& entries = run.by_query[query.query_id];
        for (std::size_t i = 0; i < hits.size(); ++i) entries.push_back({hits[i].passage_id, hits[i].score, i + 1});
    }
    return run;
}

}  // namespace ragged
