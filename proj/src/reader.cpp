#include "ragged/reader.hpp"

#include <algorithm>
#include <cstdlib>
#include <unordered_set>

#include "httplib.h"
#include "json.hpp"
#include "ragged/error.hpp"
#include "ragged/text.hpp"

namespace ragged {

std::string to_string(PromptVariant variant) {
    switch (variant) {
        case PromptVariant::standard: return "standard";
        case PromptVariant::relevant: return "relevant";
    }
    return "standard";
}

std::string to_string(ConditionTag tag) {
    switch (tag) {
        case ConditionTag::top_k: return "top_k";
        case ConditionTag::top_gold: return "top_gold";
        case ConditionTag::no_context: return "no_context";
    }
    return "top_k";
}

PromptVariant parse_prompt_variant(const std::string& name) {
    if (name == "standard") return PromptVariant::standard;
    if (name == "relevant") return PromptVariant::relevant;
    throw ValidationError("unknown prompt variant '" + name + "' (expected standard or relevant)");
}

ConditionTag parse_condition_tag(const std::string& name) {
    if (name == "top_k") return ConditionTag::top_k;
    if (name == "top_gold") return ConditionTag::top_gold;
    if (name == "no_context") return ConditionTag::no_context;
    throw ValidationError("unknown context condition '" + name + "' (expected top_k, top_gold or no_context)");
}

const std::string& instruction_text(PromptVariant variant) {
    static const std::string standard =
        "Give simple short one phrase answers for the questions based on the context";
    static const std::string relevant =
        "Give simple short one phrase answers for the questions based on only the parts of the context that are "
        "relevant to the question";
    return variant == PromptVariant::relevant ? relevant : standard;
}

std::string assemble_prompt(const std::string& question, std::span<const ContextPassage> passages,
                            PromptVariant variant, bool include_context) {
    std::string prompt = "Instruction: " + instruction_text(variant) + "\n";
    if (include_context) {
        prompt += "Context:\n";
        for (std::size_t i = 0; i < passages.size(); ++i) {
            if (i > 0) prompt += "\n";
            const auto& p = passages[i];
            if (!p.title.empty()) {
                prompt += p.title;
                if (!p.text.empty()) prompt += "\n";
            }
            prompt += p.text;
            prompt += "\n";
        }
    }
    prompt += "Question: " + question + "\n";
    prompt += "Answer:";
    return prompt;
}

std::size_t passage_token_count(const ContextPassage& passage) {
    return text::count_whitespace_tokens(passage.title) + text::count_whitespace_tokens(passage.text);
}

namespace {

std::string join_tokens(const std::vector<std::string_view>& tokens, std::size_t count) {
    std::string out;
    for (std::size_t i = 0; i < count && i < tokens.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out.append(tokens[i]);
    }
    return out;
}

}  // namespace

TruncatedContext truncate_context(std::vector<ContextPassage> passages, std::size_t budget) {
    if (budget == 0) throw ValidationError("context token budget must be > 0");
    TruncatedContext result;
    for (auto& passage : passages) {
        const std::size_t n = passage_token_count(passage);
        if (result.token_count + n <= budget) {
            result.token_count += n;
            result.passages.push_back(std::move(passage));
            continue;
        }
        result.truncated = true;
        const std::size_t remaining = budget - result.token_count;
        if (remaining == 0) break;
        const auto title_tokens = text::split_whitespace(passage.title);
        ContextPassage cut{passage.passage_id, {}, {}};
        if (remaining <= title_tokens.size()) {
            cut.title = join_tokens(title_tokens, remaining);
        } else {
            cut.title = passage.title;
            cut.text = join_tokens(text::split_whitespace(passage.text), remaining - title_tokens.size());
        }
        result.token_count += remaining;
        result.passages.push_back(std::move(cut));
        break;
    }
    return result;
}

std::vector<ContextPassage> select_context(const Query& query, const RetrievalRun& run, const Corpus& corpus,
                                           const ContextCondition& condition) {
    if (condition.tag == ConditionTag::no_context) return {};
    if (condition.k < 1) throw ValidationError("context depth k must be >= 1");
    if (condition.tag == ConditionTag::top_gold && query.gold_passage_ids.empty()) {
        throw ValidationError("query '" + query.query_id + "': top_gold requires gold_passage_ids");
    }
    const auto* entries = run.entries(query.query_id);
    if (entries == nullptr) return {};

    const std::unordered_set<std::string> gold(query.gold_passage_ids.begin(), query.gold_passage_ids.end());
    std::vector<ContextPassage> out;
    const std::size_t depth = std::min(condition.k, entries->size());
    for (std::size_t i = 0; i < depth; ++i) {
        const auto& id = (*entries)[i].passage_id;
        if (condition.tag == ConditionTag::top_gold && !gold.contains(id)) continue;
        const auto& passage = corpus.at(id);
        out.push_back({passage.passage_id, passage.title, passage.text});
    }
    if (condition.tag == ConditionTag::top_gold && out.empty()) {
        throw ConditionUnsatisfied("query '" + query.query_id + "': no gold passage within top-" +
                                   std::to_string(condition.k));
    }
    return out;
}

MockReaderBackend::MockReaderBackend(Mode mode, const QuerySet* queries, std::string fixed_text)
    : mode_(mode), queries_(queries), fixed_text_(std::move(fixed_text)) {
    if (mode_ == Mode::gold_echo && queries_ == nullptr) {
        throw ValidationError("gold_echo mock reader needs the query set");
    }
}

std::string MockReaderBackend::complete(const CompletionRequest& request) {
    ++calls_;
    switch (mode_) {
        case Mode::gold_echo: {
            const auto& query = queries_->at(request.query_id);
            for (const auto& id : request.context_passage_ids) {
                if (std::find(query.gold_passage_ids.begin(), query.gold_passage_ids.end(), id) !=
                    query.gold_passage_ids.end()) {
                    return query.gold_answers.front();
                }
            }
            return fixed_text_;
        }
        case Mode::fixed: return fixed_text_;
        case Mode::first_context: {
            const auto marker = request.prompt.find("\nContext:\n");
            if (marker == std::string::npos) return fixed_text_;
            const auto start = marker + 10;
            const auto end = request.prompt.find('\n', start);
            const auto first = std::string_view(request.prompt).substr(start, end - start);
            return join_tokens(text::split_whitespace(first), request.max_tokens);
        }
        case Mode::always_fail: throw BackendError("mock backend failure");
    }
    return fixed_text_;
}

HttpReaderBackend::HttpReaderBackend(HttpEndpoint endpoint, std::string auth_env_var)
    : endpoint_(std::move(endpoint)), auth_env_var_(std::move(auth_env_var)) {
    if (endpoint_.base_url.empty()) throw ValidationError("reader endpoint base_url is empty");
}

std::string HttpReaderBackend::complete(const CompletionRequest& request) {
    nlohmann::ordered_json body;
    body["prompt"] = request.prompt;
    body["max_tokens"] = request.max_tokens;
    body["temperature"] = request.decoding.temperature;
    body["greedy"] = request.decoding.greedy;
    body["beam_size"] = request.decoding.beam_size;

    httplib::Headers headers(endpoint_.headers.begin(), endpoint_.headers.end());
    if (!auth_env_var_.empty()) {
        if (const char* token = std::getenv(auth_env_var_.c_str()); token != nullptr && *token != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }
    httplib::Client client(endpoint_.base_url);
    client.set_connection_timeout(endpoint_.timeout_seconds, 0);
    client.set_read_timeout(endpoint_.timeout_seconds, 0);
    const auto response = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!response) {
        throw BackendError("reader request to " + endpoint_.base_url + endpoint_.path +
                           " failed: " + httplib::to_string(response.error()));
    }
    if (response->status != 200) throw BackendError("reader returned HTTP " + std::to_string(response->status));
    try {
        return nlohmann::json::parse(response->body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(std::string("reader response malformed: ") + e.what());
    }
}

void validate_reader_config(const ReaderConfig& config) {
    if (config.reader_name.empty()) throw ValidationError("reader_name must be non-empty");
    if (config.context_token_budget == 0) throw ValidationError("context_token_budget must be > 0");
    if (config.max_answer_tokens == 0) throw ValidationError("max_answer_tokens must be > 0");
    if (config.retry.attempts < 1) throw ValidationError("retry attempts must be >= 1");
}

AnswerKey answer_key(const ReaderAnswer& a) {
    return {a.query_id, a.retriever, a.reader, a.condition, a.k, a.variant};
}

bool answer_order(const ReaderAnswer& lhs, const ReaderAnswer& rhs) {
    return std::tie(lhs.query_id, lhs.k, lhs.condition, lhs.variant, lhs.retriever, lhs.reader) <
           std::tie(rhs.query_id, rhs.k, rhs.condition, rhs.variant, rhs.retriever, rhs.reader);
}

std::string answer_to_json_line(const ReaderAnswer& a) {
    nlohmann::ordered_json j;
    j["query_id"] = a.query_id;
    j["retriever"] = a.retriever;
    j["reader"] = a.reader;
    j["condition"] = to_string(a.condition);
    j["k"] = a.k;
    j["variant"] = to_string(a.variant);
    j["answer"] = a.answer;
    j["truncated"] = a.truncated;
    j["context_tokens"] = a.context_tokens;
    if (a.error) j["error"] = *a.error;
    return j.dump();
}

ReaderAnswer answer_from_json_line(const std::string& line) {
    try {
        const auto j = nlohmann::json::parse(line);
        ReaderAnswer a;
        a.query_id = j.at("query_id").get<std::string>();
        a.retriever = j.at("retriever").get<std::string>();
        a.reader = j.at("reader").get<std::string>();
        a.condition = parse_condition_tag(j.at("condition").get<std::string>());
        a.k = j.at("k").get<std::size_t>();
        a.variant = parse_prompt_variant(j.at("variant").get<std::string>());
        a.answer = j.at("answer").get<std::string>();
        a.truncated = j.at("truncated").get<bool>();
        a.context_tokens = j.at("context_tokens").get<std::size_t>();
        if (const auto it = j.find("error"); it != j.end() && !it->is_null()) a.error = it->get<std::string>();
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed answer record: ") + e.what());
    }
}

}  // namespace ragged
