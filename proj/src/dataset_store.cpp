#include "ragged/dataset_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "ragged/error.hpp"
#include "ragged/text.hpp"

namespace ragged {
namespace {

using json = nlohmann::json;

std::string location(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

std::string required_string(const json& record, const char* field, const std::string& where) {
    const auto it = record.find(field);
    if (it == record.end()) throw ValidationError(where + ": missing field '" + field + "'");
    if (!it->is_string()) throw ValidationError(where + ": field '" + field + "' must be a string");
    return it->get<std::string>();
}

std::vector<std::string> string_list(const json& record, const char* field, const std::string& where,
                                     bool required) {
    const auto it = record.find(field);
    if (it == record.end() || it->is_null()) {
        if (required) throw ValidationError(where + ": missing field '" + field + "'");
        return {};
    }
    if (!it->is_array()) throw ValidationError(where + ": field '" + field + "' must be an array");
    std::vector<std::string> out;
    for (const auto& item : *it) {
        if (!item.is_string()) {
            throw ValidationError(where + ": field '" + field + "' must contain only strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

json parse_line(const std::string& line, const std::string& where) {
    json record;
    try {
        record = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ValidationError(where + ": malformed JSON: " + e.what());
    }
    if (!record.is_object()) throw ValidationError(where + ": record must be a JSON object");
    return record;
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(),
                       [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

void validate_passage(const Passage& passage) {
    if (passage.passage_id.empty()) throw ValidationError("passage_id must be non-empty");
    if (passage.doc_id.empty()) {
        throw ValidationError("passage '" + passage.passage_id + "': doc_id must be non-empty");
    }
    if (text::trim(passage.text).empty()) {
        throw ValidationError("passage '" + passage.passage_id + "': text must be non-empty");
    }
}

void validate_query(const Query& query) {
    if (query.query_id.empty()) throw ValidationError("query_id must be non-empty");
    if (query.gold_answers.empty()) {
        throw ValidationError("query '" + query.query_id + "': gold_answers must be non-empty");
    }
    if (query.multihop && query.gold_passage_ids.size() < 2) {
        throw ValidationError("query '" + query.query_id +
                              "': multihop requires at least two gold_passage_ids");
    }
}

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
    by_id_.reserve(passages_.size());
    for (std::size_t i = 0; i < passages_.size(); ++i) {
        validate_passage(passages_[i]);
        if (!by_id_.emplace(passages_[i].passage_id, i).second) {
            throw ValidationError("duplicate passage_id '" + passages_[i].passage_id + "'");
        }
    }
}

const Passage* Corpus::find(const std::string& passage_id) const {
    const auto it = by_id_.find(passage_id);
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(const std::string& passage_id) const {
    const auto* passage = find(passage_id);
    if (passage == nullptr) throw ValidationError("unknown passage_id '" + passage_id + "'");
    return *passage;
}

std::optional<std::size_t> Corpus::position(const std::string& passage_id) const {
    const auto it = by_id_.find(passage_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

CorpusStats Corpus::stats() const {
    CorpusStats stats;
    stats.passage_count = passages_.size();
    std::unordered_set<std::string_view> docs;
    for (const auto& p : passages_) docs.insert(p.doc_id);
    stats.doc_count = docs.size();
    stats.avg_passages_per_doc =
        stats.doc_count == 0 ? 0.0
                             : static_cast<double>(stats.passage_count) / static_cast<double>(stats.doc_count);
    return stats;
}

CorpusStats corpus_stats(const Corpus& corpus) { return corpus.stats(); }

QuerySet::QuerySet(std::vector<Query> queries) : queries_(std::move(queries)) {
    by_id_.reserve(queries_.size());
    for (std::size_t i = 0; i < queries_.size(); ++i) {
        validate_query(queries_[i]);
        if (!by_id_.emplace(queries_[i].query_id, i).second) {
            throw ValidationError("duplicate query_id '" + queries_[i].query_id + "'");
        }
    }
}

const Query* QuerySet::find(const std::string& query_id) const {
    const auto it = by_id_.find(query_id);
    return it == by_id_.end() ? nullptr : &queries_[it->second];
}

const Query& QuerySet::at(const std::string& query_id) const {
    const auto* query = find(query_id);
    if (query == nullptr) throw ValidationError("unknown query_id '" + query_id + "'");
    return *query;
}

std::vector<std::string> QuerySet::resolve_against(const Corpus& corpus) {
    std::vector<std::string> warnings;
    for (auto& query : queries_) {
        std::set<std::string> explicit_docs(query.gold_doc_ids.begin(), query.gold_doc_ids.end());
        const bool derive = query.gold_doc_ids.empty();
        for (const auto& pid : query.gold_passage_ids) {
            const auto* passage = corpus.find(pid);
            if (passage == nullptr) {
                warnings.push_back("query '" + query.query_id + "': gold passage '" + pid +
                                   "' not in corpus");
                continue;
            }
            if (derive) {
                if (std::find(query.gold_doc_ids.begin(), query.gold_doc_ids.end(), passage->doc_id) ==
                    query.gold_doc_ids.end()) {
                    query.gold_doc_ids.push_back(passage->doc_id);
                }
            } else if (!explicit_docs.contains(passage->doc_id)) {
                throw ValidationError("query '" + query.query_id + "': gold_doc_ids missing doc '" +
                                      passage->doc_id + "' of gold passage '" + pid + "'");
            }
        }
    }
    return warnings;
}

Corpus parse_corpus(std::istream& in, const std::string& source_name) {
    std::vector<Passage> passages;
    std::unordered_map<std::string, std::size_t> first_line;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto where = location(source_name, line_no);
        const json record = parse_line(line, where);
        Passage passage{required_string(record, "passage_id", where),
                        required_string(record, "doc_id", where),
                        record.contains("title") ? required_string(record, "title", where) : std::string{},
                        required_string(record, "text", where)};
        try {
            validate_passage(passage);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        const auto [it, inserted] = first_line.emplace(passage.passage_id, line_no);
        if (!inserted) {
            throw ValidationError(source_name + ": duplicate passage_id '" + passage.passage_id +
                                  "' at lines " + std::to_string(it->second) + " and " +
                                  std::to_string(line_no));
        }
        passages.push_back(std::move(passage));
    }
    if (passages.empty()) throw ValidationError(source_name + ": corpus file is empty");
    return Corpus(std::move(passages));
}

Corpus ingest_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open corpus file: " + path.string());
    return parse_corpus(in, path.string());
}

QuerySet parse_queries(std::istream& in, const std::string& source_name) {
    std::vector<Query> queries;
    std::unordered_map<std::string, std::size_t> first_line;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const auto where = location(source_name, line_no);
        const json record = parse_line(line, where);
        Query query;
        query.query_id = required_string(record, "query_id", where);
        query.question = required_string(record, "question", where);
        query.gold_answers = string_list(record, "gold_answers", where, true);
        query.gold_passage_ids = string_list(record, "gold_passage_ids", where, false);
        query.gold_doc_ids = string_list(record, "gold_doc_ids", where, false);
        if (const auto it = record.find("multihop"); it != record.end() && !it->is_null()) {
            if (!it->is_boolean()) throw ValidationError(where + ": field 'multihop' must be a boolean");
            query.multihop = it->get<bool>();
        }
        try {
            validate_query(query);
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        const auto [it, inserted] = first_line.emplace(query.query_id, line_no);
        if (!inserted) {
            throw ValidationError(source_name + ": duplicate query_id '" + query.query_id +
                                  "' at lines " + std::to_string(it->second) + " and " +
                                  std::to_string(line_no));
        }
        queries.push_back(std::move(query));
    }
    if (queries.empty()) throw ValidationError(source_name + ": query file is empty");
    return QuerySet(std::move(queries));
}

QuerySet ingest_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open query file: " + path.string());
    return parse_queries(in, path.string());
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& p : corpus.passages()) {
        nlohmann::ordered_json record = {{"passage_id", p.passage_id}, {"doc_id", p.doc_id}, {"title", p.title}, {"text", p.text}};
        out << record.dump() << '\n';
    }
}

void write_queries(std::ostream& out, const QuerySet& queries) {
    for (const auto& q : queries.queries()) {
        nlohmann::ordered_json record = {{"query_id", q.query_id},
                       {"question", q.question},
                       {"gold_answers", q.gold_answers},
                       {"gold_passage_ids", q.gold_passage_ids},
                       {"gold_doc_ids", q.gold_doc_ids},
                       {"multihop", q.multihop}};
        out << record.dump() << '\n';
    }
}

}  // namespace ragged
