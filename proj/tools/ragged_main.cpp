// ragged: retrieval-depth sweeps and RAG metric reports.
//
//   ragged index    --config cfg.json     build the BM25 index
//   ragged retrieve --config cfg.json     write run.trec to max(k_grid)
//   ragged sweep    --config cfg.json     generate reader answers (resumable)
//   ragged evaluate --config cfg.json     curves.csv + metric/verdict/behavior JSON
//   ragged report   --config cfg.json     report.md + SVG plots
//
// Exit codes: 0 success, 1 validation error, 2 backend failure.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ragged/config.hpp"
#include "ragged/error.hpp"
#include "ragged/pipeline.hpp"

namespace {

struct Overrides {
    std::string output_dir;
    std::string k_grid;
    std::string curves;
    std::string run;
    double epsilon = 0.0;
    std::size_t delta = 0;
    double behavior_threshold = -1.0;
};

std::vector<std::size_t> parse_grid(const std::string& text) {
    std::vector<std::size_t> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const auto value = std::stoull(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            grid.push_back(static_cast<std::size_t>(value));
        } catch (const std::exception&) {
            throw ragged::ValidationError("--k-grid: '" + item + "' is not a positive integer");
        }
    }
    return grid;
}

void apply(const Overrides& o, ragged::PipelineConfig& config) {
    if (!o.output_dir.empty()) config.output_dir = o.output_dir;
    if (!o.k_grid.empty()) config.k_grid = parse_grid(o.k_grid);
    if (!o.curves.empty()) config.curves_input = o.curves;
    if (!o.run.empty()) {
        config.retriever.kind = "run";
        config.retriever.run_path = o.run;
    }
    if (o.epsilon > 0.0) config.metrics.epsilon = o.epsilon;
    if (o.delta > 0) config.metrics.delta = o.delta;
    if (o.behavior_threshold >= 0.0) config.metrics.behavior_threshold = o.behavior_threshold;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RAG retrieval-depth evaluation harness"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides overrides;
    const char* names[] = {"index", "retrieve", "sweep", "evaluate", "report"};
    const char* help[] = {"Build the BM25 index", "Write the TREC run to max(k_grid)",
                          "Run readers over the retrieval-depth grid", "Compute curves and metric reports",
                          "Write the markdown report and SVG plots"};
    for (int i = 0; i < 5; ++i) {
        auto* sub = app.add_subcommand(names[i], help[i]);
        sub->add_option("--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--output-dir", overrides.output_dir, "Override output_dir");
        sub->add_option("--k-grid", overrides.k_grid, "Override k_grid, e.g. 1,2,5,10,20,50");
        sub->add_option("--curves", overrides.curves, "curves.csv to replay instead of answers");
        sub->add_option("--run", overrides.run, "Import this TREC run instead of BM25");
        sub->add_option("--epsilon", overrides.epsilon, "RSC gain threshold (F1 points)");
        sub->add_option("--delta", overrides.delta, "RSS window half-width");
        sub->add_option("--behavior-threshold", overrides.behavior_threshold, "Peak-drop threshold (F1 points)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        auto config = ragged::load_config(config_path);
        apply(overrides, config);
        const std::string command = app.get_subcommands().front()->get_name();
        if (command == "index") {
            ragged::cmd_index(config, std::cerr);
        } else if (command == "retrieve") {
            ragged::cmd_retrieve(config, std::cerr);
        } else if (command == "sweep") {
            const auto stats = ragged::cmd_sweep(config, std::cerr);
            if (stats.failed > 0) {
                std::cerr << "ragged: " << stats.failed << " answers failed after retries (recorded with errors)\n";
                return 2;
            }
        } else if (command == "evaluate") {
            ragged::cmd_evaluate(config, std::cerr);
        } else {
            ragged::cmd_report(config, std::cerr);
        }
    } catch (const ragged::BackendError& e) {
        std::cerr << "ragged: backend error: " << e.what() << '\n';
        return 2;
    } catch (const ragged::ValidationError& e) {
        std::cerr << "ragged: " << e.what() << '\n';
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "ragged: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
