#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "ragged/error.hpp"
#include "ragged/retrieval.hpp"
#include "ragged/text.hpp"

namespace ragged {
namespace {

struct ParsedEntry {
    RunEntry entry;
    std::size_t line = 0;
};

bool parse_rank(std::string_view field, std::size_t& out) {
    if (field.empty() || field.size() > 18) return false;
    std::size_t value = 0;
    for (char c : field) {
        if (c < '0' || c > '9') return false;
        value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    out = value;
    return value >= 1;
}

bool parse_score(std::string_view field, double& out) {
    const std::string buffer(field);
    char* end = nullptr;
    errno = 0;
    out = std::strtod(buffer.c_str(), &end);
    return errno == 0 && end == buffer.c_str() + buffer.size() && std::isfinite(out);
}

}  // namespace

std::size_t RetrievalRun::max_k() const {
    std::size_t depth = 0;
    for (const auto& [qid, entries] : by_query) depth = std::max(depth, entries.size());
    return depth;
}

const std::vector<RunEntry>* RetrievalRun::entries(const std::string& query_id) const {
    const auto it = by_query.find(query_id);
    return it == by_query.end() ? nullptr : &it->second;
}

void validate_run(const RetrievalRun& run) {
    for (const auto& [qid, entries] : run.by_query) {
        std::set<std::string_view> ids;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            if (entries[i].rank != i + 1) {
                throw ValidationError("run '" + run.retriever_name + "', query '" + qid +
                                      "': ranks are not contiguous from 1");
            }
            if (i > 0 && entries[i].score > entries[i - 1].score) {
                throw ValidationError("run '" + run.retriever_name + "', query '" + qid +
                                      "': score increases at rank " + std::to_string(i + 1));
            }
            if (!ids.insert(entries[i].passage_id).second) {
                throw ValidationError("run '" + run.retriever_name + "', query '" + qid +
                                      "': duplicate passage '" + entries[i].passage_id + "'");
            }
        }
    }
}

RetrievalRun parse_run(std::istream& in, const std::string& source_name, const std::string& retriever_name) {
    std::map<std::string, std::vector<ParsedEntry>> grouped;
    std::map<std::pair<std::string, std::string>, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto fields = text::split_whitespace(line);
        if (fields.empty()) continue;
        const std::string where = source_name + ":" + std::to_string(line_no);
        if (fields.size() != 6) {
            throw ValidationError(where + ": expected 6 fields 'query_id Q0 passage_id rank score tag', got " +
                                  std::to_string(fields.size()));
        }
        ParsedEntry parsed;
        parsed.line = line_no;
        parsed.entry.passage_id = std::string(fields[2]);
        if (!parse_rank(fields[3], parsed.entry.rank)) {
            throw ValidationError(where + ": rank must be a positive integer, got '" + std::string(fields[3]) + "'");
        }
        if (!parse_score(fields[4], parsed.entry.score)) {
            throw ValidationError(where + ": score must be a finite number, got '" + std::string(fields[4]) + "'");
        }
        std::string qid(fields[0]);
        const auto [it, inserted] = seen.emplace(std::make_pair(qid, parsed.entry.passage_id), line_no);
        if (!inserted) {
            throw ValidationError(where + ": duplicate passage '" + parsed.entry.passage_id + "' for query '" + qid +
                                  "' (first at line " + std::to_string(it->second) + ")");
        }
        grouped[qid].push_back(std::move(parsed));
    }

    RetrievalRun run;
    run.retriever_name = retriever_name;
    for (auto& [qid, parsed] : grouped) {
        std::stable_sort(parsed.begin(), parsed.end(),
                         [](const ParsedEntry& a, const ParsedEntry& b) { return a.entry.rank < b.entry.rank; });
        auto& entries = run.by_query[qid];
        for (std::size_t i = 0; i < parsed.size(); ++i) {
            const auto& p = parsed[i];
            if (p.entry.rank != i + 1) {
                throw ValidationError(source_name + ":" + std::to_string(p.line) + ": non-contiguous ranks for query '" +
                                      qid + "': expected rank " + std::to_string(i + 1) + ", found " +
                                      std::to_string(p.entry.rank));
            }
            if (i > 0 && p.entry.score > parsed[i - 1].entry.score) {
                throw ValidationError(source_name + ":" + std::to_string(p.line) + ": score increases with rank for query '" +
                                      qid + "' (rank " + std::to_string(p.entry.rank) + ")");
            }
            entries.push_back(p.entry);
        }
    }
    return run;
}

RetrievalRun import_run(const std::filesystem::path& path, const std::string& retriever_name) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open run file: " + path.string());
    return parse_run(in, path.string(), retriever_name);
}

void write_run(std::ostream& out, const RetrievalRun& run) {
    const auto name_tokens = text::split_whitespace(run.retriever_name);
    if (name_tokens.size() != 1 || name_tokens[0].size() != run.retriever_name.size()) {
        throw ValidationError("retriever name must be a single non-empty token: '" + run.retriever_name + "'");
    }
    char score[64];
    for (const auto& [qid, entries] : run.by_query) {
        for (const auto& e : entries) {
            std::snprintf(score, sizeof(score), "%.6f", e.score);
            out << qid << " Q0 " << e.passage_id << ' ' << e.rank << ' ' << score << ' ' << run.retriever_name << '\n';
        }
    }
}

void export_run(const std::filesystem::path& path, const RetrievalRun& run) {
    std::ostringstream buffer;
    write_run(buffer, run);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write run file: " + path.string());
    out << buffer.str();
}

}  // namespace ragged
