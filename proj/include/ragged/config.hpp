#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragged/reader.hpp"
#include "ragged/retrieval.hpp"

namespace ragged {

/// Reader or reranker backend selection.
struct BackendConfig {
    std::string kind = "mock";  ///< "mock" or "http"
    std::string mock_mode = "gold_echo";
    std::string fixed_text = "unknown";
    HttpEndpoint endpoint;
    std::string auth_env;  ///< environment variable holding a bearer token
};

struct ReaderSpec {
    ReaderConfig reader;
    BackendConfig backend;
};

struct RetrieverConfig {
    std::string kind = "bm25";  ///< "bm25" or "run"
    std::string name = "bm25";
    Bm25Params bm25;
    std::filesystem::path run_path;
};

struct RerankConfig {
    std::size_t depth = 10;
    std::size_t parallelism = 4;
    BackendConfig backend{"mock", "overlap", {}, {}, {}};
};

struct MetricConfig {
    double epsilon = 0.5;
    std::size_t delta = 5;
    double behavior_threshold = 2.0;
    std::vector<double> epsilon_range{0.5, 0.6, 0.7};
    std::vector<std::size_t> delta_range{5, 10};
    bool normalize_answers = true;
};

struct PipelineConfig {
    std::string dataset = "dataset";
    std::filesystem::path corpus;
    std::filesystem::path queries;
    RetrieverConfig retriever;
    std::optional<RerankConfig> rerank;
    std::vector<ReaderSpec> readers;
    std::vector<std::size_t> k_grid{1, 2, 5, 10, 20, 50};
    std::vector<ConditionTag> conditions{ConditionTag::top_k, ConditionTag::no_context};
    /// Empty: each reader's prompt_variant.
    std::vector<PromptVariant> variants;
    MetricConfig metrics;
    std::filesystem::path output_dir = "ragged_out";
    std::optional<std::filesystem::path> curves_input;  ///< curve-replay mode for evaluate/report

    /// Name of the run the sweep reads: retriever name, plus "+rerank" when reranking.
    std::string effective_retriever_name() const;
};

/// Parses the JSON config tree. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const nlohmann::json& tree, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Throws ValidationError on any violated invariant.
void validate_config(const PipelineConfig& config);

/// Canonical JSON of the experiment-defining fields (paths and output
/// location excluded, so the hash does not depend on where files live).
nlohmann::ordered_json canonical_config(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

}  // namespace ragged
