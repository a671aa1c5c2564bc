#include "ragged/config.hpp"

#include <fstream>

#include "ragged/error.hpp"
#include "ragged/hash.hpp"

namespace ragged {
namespace {

using json = nlohmann::json;

template <typename T>
T get_or(const json& tree, const char* key, T fallback) {
    const auto it = tree.find(key);
    if (it == tree.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("config field '") + key + "' has the wrong type");
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
    if (value.empty()) return {};
    std::filesystem::path p(value);
    return p.is_absolute() ? p : base / p;
}

BackendConfig parse_backend(const json& tree, BackendConfig defaults) {
    BackendConfig backend = std::move(defaults);
    if (tree.is_null()) return backend;
    if (!tree.is_object()) throw ValidationError("config 'backend' must be an object");
    backend.kind = get_or<std::string>(tree, "kind", backend.kind);
    backend.mock_mode = get_or<std::string>(tree, "mode", backend.mock_mode);
    backend.fixed_text = get_or<std::string>(tree, "fixed_text", backend.fixed_text);
    backend.endpoint.base_url = get_or<std::string>(tree, "url", backend.endpoint.base_url);
    backend.endpoint.path = get_or<std::string>(tree, "path", backend.endpoint.path);
    backend.endpoint.timeout_seconds = get_or<int>(tree, "timeout_seconds", backend.endpoint.timeout_seconds);
    backend.endpoint.headers = get_or<std::map<std::string, std::string>>(tree, "headers", backend.endpoint.headers);
    backend.auth_env = get_or<std::string>(tree, "auth_env", backend.auth_env);
    if (backend.kind != "mock" && backend.kind != "http") {
        throw ValidationError("backend kind must be 'mock' or 'http', got '" + backend.kind + "'");
    }
    return backend;
}

nlohmann::ordered_json backend_json(const BackendConfig& b) {
    nlohmann::ordered_json j;
    j["kind"] = b.kind;
    if (b.kind == "mock") {
        j["mode"] = b.mock_mode;
        j["fixed_text"] = b.fixed_text;
    } else {
        j["url"] = b.endpoint.base_url;
        j["path"] = b.endpoint.path;
        j["timeout_seconds"] = b.endpoint.timeout_seconds;
    }
    return j;
}

}  // namespace

std::string PipelineConfig::effective_retriever_name() const {
    return rerank ? retriever.name + "+rerank" : retriever.name;
}

PipelineConfig parse_config(const json& tree, const std::filesystem::path& base_dir) {
    if (!tree.is_object()) throw ValidationError("config root must be an object");
    PipelineConfig config;

    if (const auto it = tree.find("dataset"); it != tree.end()) {
        config.dataset = get_or<std::string>(*it, "name", config.dataset);
        config.corpus = resolve(base_dir, get_or<std::string>(*it, "corpus", ""));
        config.queries = resolve(base_dir, get_or<std::string>(*it, "queries", ""));
    }
    if (const auto it = tree.find("retriever"); it != tree.end()) {
        config.retriever.kind = get_or<std::string>(*it, "kind", config.retriever.kind);
        config.retriever.name = get_or<std::string>(*it, "name", config.retriever.kind == "bm25" ? "bm25" : "");
        config.retriever.bm25.k1 = get_or<double>(*it, "k1", config.retriever.bm25.k1);
        config.retriever.bm25.b = get_or<double>(*it, "b", config.retriever.bm25.b);
        config.retriever.run_path = resolve(base_dir, get_or<std::string>(*it, "run", ""));
    }
    if (const auto it = tree.find("rerank"); it != tree.end() && !it->is_null()) {
        RerankConfig rerank;
        rerank.depth = get_or<std::size_t>(*it, "depth", rerank.depth);
        rerank.parallelism = get_or<std::size_t>(*it, "parallelism", rerank.parallelism);
        rerank.backend = parse_backend(it->value("backend", json()), rerank.backend);
        config.rerank = rerank;
    }
    if (const auto it = tree.find("readers"); it != tree.end()) {
        if (!it->is_array()) throw ValidationError("config 'readers' must be an array");
        for (const auto& r : *it) {
            ReaderSpec spec;
            spec.reader.reader_name = get_or<std::string>(r, "name", "");
            spec.reader.context_token_budget = get_or<std::size_t>(r, "context_token_budget", 2000);
            spec.reader.max_answer_tokens = get_or<std::size_t>(r, "max_answer_tokens", 10);
            spec.reader.prompt_variant = parse_prompt_variant(get_or<std::string>(r, "prompt_variant", "standard"));
            spec.reader.decoding.temperature = get_or<double>(r, "temperature", 1.0);
            spec.reader.parallelism = get_or<std::size_t>(r, "parallelism", 4);
            spec.reader.retry.attempts = get_or<int>(r, "retry_attempts", 3);
            spec.reader.retry.initial_backoff = std::chrono::milliseconds(get_or<long>(r, "retry_backoff_ms", 200));
            spec.backend = parse_backend(r.value("backend", json()), BackendConfig{});
            config.readers.push_back(std::move(spec));
        }
    }
    config.k_grid = get_or<std::vector<std::size_t>>(tree, "k_grid", config.k_grid);
    if (const auto it = tree.find("conditions"); it != tree.end()) {
        config.conditions.clear();
        for (const auto& c : get_or<std::vector<std::string>>(tree, "conditions", {})) {
            config.conditions.push_back(parse_condition_tag(c));
        }
    }
    if (const auto it = tree.find("variants"); it != tree.end()) {
        config.variants.clear();
        for (const auto& v : get_or<std::vector<std::string>>(tree, "variants", {})) {
            config.variants.push_back(parse_prompt_variant(v));
        }
    }
    if (const auto it = tree.find("metrics"); it != tree.end()) {
        auto& m = config.metrics;
        m.epsilon = get_or<double>(*it, "epsilon", m.epsilon);
        m.delta = get_or<std::size_t>(*it, "delta", m.delta);
        m.behavior_threshold = get_or<double>(*it, "behavior_threshold", m.behavior_threshold);
        m.epsilon_range = get_or<std::vector<double>>(*it, "epsilon_range", m.epsilon_range);
        m.delta_range = get_or<std::vector<std::size_t>>(*it, "delta_range", m.delta_range);
        m.normalize_answers = get_or<bool>(*it, "normalize_answers", m.normalize_answers);
    }
    if (const auto out = get_or<std::string>(tree, "output_dir", ""); !out.empty()) {
        config.output_dir = resolve(base_dir, out);
    } else {
        config.output_dir = base_dir / config.output_dir;
    }
    if (const auto curves = get_or<std::string>(tree, "curves_input", ""); !curves.empty()) {
        config.curves_input = resolve(base_dir, curves);
    }
    return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path.string());
    json tree;
    try {
        tree = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed config " + path.string() + ": " + e.what());
    }
    return parse_config(tree, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void validate_config(const PipelineConfig& config) {
    if (config.k_grid.empty()) throw ValidationError("k_grid must be non-empty");
    for (std::size_t i = 0; i < config.k_grid.size(); ++i) {
        if (config.k_grid[i] < 1) throw ValidationError("k_grid values must be >= 1");
        if (i > 0 && config.k_grid[i] <= config.k_grid[i - 1]) {
            throw ValidationError("k_grid must be strictly increasing");
        }
    }
    if (config.retriever.kind != "bm25" && config.retriever.kind != "run") {
        throw ValidationError("retriever kind must be 'bm25' or 'run', got '" + config.retriever.kind + "'");
    }
    if (config.retriever.name.empty()) throw ValidationError("retriever name must be non-empty");
    if (config.retriever.kind == "run" && config.retriever.run_path.empty()) {
        throw ValidationError("retriever kind 'run' needs a 'run' path");
    }
    validate_bm25_params(config.retriever.bm25);
    for (const auto& r : config.readers) validate_reader_config(r.reader);
    if (!(config.metrics.epsilon > 0.0)) throw ValidationError("metrics.epsilon must be > 0");
    if (config.metrics.delta < 1) throw ValidationError("metrics.delta must be >= 1");
    if (config.metrics.epsilon_range.empty() || config.metrics.delta_range.empty()) {
        throw ValidationError("metrics epsilon_range and delta_range must be non-empty");
    }
    if (config.output_dir.empty()) throw ValidationError("output_dir must be set");
}

nlohmann::ordered_json canonical_config(const PipelineConfig& config) {
    nlohmann::ordered_json j;
    j["dataset"] = config.dataset;
    j["retriever"] = {{"kind", config.retriever.kind},
                      {"name", config.retriever.name},
                      {"k1", config.retriever.bm25.k1},
                      {"b", config.retriever.bm25.b}};
    if (config.rerank) {
        j["rerank"] = {{"depth", config.rerank->depth}, {"backend", backend_json(config.rerank->backend)}};
    }
    j["readers"] = nlohmann::ordered_json::array();
    for (const auto& r : config.readers) {
        j["readers"].push_back({{"name", r.reader.reader_name},
                                {"context_token_budget", r.reader.context_token_budget},
                                {"max_answer_tokens", r.reader.max_answer_tokens},
                                {"prompt_variant", to_string(r.reader.prompt_variant)},
                                {"temperature", r.reader.decoding.temperature},
                                {"backend", backend_json(r.backend)}});
    }
    j["k_grid"] = config.k_grid;
    j["conditions"] = nlohmann::ordered_json::array();
    for (auto c : config.conditions) j["conditions"].push_back(to_string(c));
    j["variants"] = nlohmann::ordered_json::array();
    for (auto v : config.variants) j["variants"].push_back(to_string(v));
    j["metrics"] = {{"epsilon", config.metrics.epsilon},
                    {"delta", config.metrics.delta},
                    {"behavior_threshold", config.metrics.behavior_threshold},
                    {"epsilon_range", config.metrics.epsilon_range},
                    {"delta_range", config.metrics.delta_range},
                    {"normalize_answers", config.metrics.normalize_answers}};
    j["replay"] = config.curves_input.has_value();
    return j;
}

std::string config_hash(const PipelineConfig& config) { return sha256_hex(canonical_config(config).dump()); }

}  // namespace ragged
