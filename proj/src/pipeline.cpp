#include "ragged/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "ragged/analysis.hpp"
#include "ragged/error.hpp"
#include "ragged/hash.hpp"
#include "ragged/metrics.hpp"
#include "ragged/report.hpp"

namespace ragged {
namespace {

using ojson = nlohmann::ordered_json;

void require_file(const std::filesystem::path& path, const std::string& what) {
    if (path.empty()) throw ValidationError(what + " path is not configured");
    if (!std::filesystem::is_regular_file(path)) throw ValidationError(what + " file not found: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + path.string());
        out << contents;
    }
    std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const ojson& doc) { write_text(path, doc.dump(2) + "\n"); }

void ensure_output_dir(const PipelineConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec || !std::filesystem::is_directory(config.output_dir)) {
        throw ValidationError("cannot create output directory " + config.output_dir.string());
    }
}

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

std::vector<PerformanceCurve> read_curves_file(const std::filesystem::path& path) {
    require_file(path, "curves");
    std::ifstream in(path);
    return read_curves_csv(in, path.string());
}

ojson hyperparameters(const MetricConfig& m) {
    return {{"epsilon", m.epsilon},
            {"delta", m.delta},
            {"behavior_threshold", m.behavior_threshold},
            {"epsilon_range", m.epsilon_range},
            {"delta_range", m.delta_range},
            {"normalize_answers", m.normalize_answers}};
}

std::string series_name(const CurveLabel& l) {
    std::string name = l.reader;
    if (l.condition != "top_k") name += " [" + l.condition + "]";
    if (l.variant != "standard") name += " (" + l.variant + ")";
    return name;
}

}  // namespace

std::unique_ptr<ReaderBackend> make_reader_backend(const BackendConfig& backend, const QuerySet* queries) {
    if (backend.kind == "http") return std::make_unique<HttpReaderBackend>(backend.endpoint, backend.auth_env);
    using Mode = MockReaderBackend::Mode;
    Mode mode;
    if (backend.mock_mode == "gold_echo") {
        mode = Mode::gold_echo;
    } else if (backend.mock_mode == "fixed") {
        mode = Mode::fixed;
    } else if (backend.mock_mode == "first_context") {
        mode = Mode::first_context;
    } else if (backend.mock_mode == "always_fail") {
        mode = Mode::always_fail;
    } else {
        throw ValidationError("unknown mock reader mode '" + backend.mock_mode + "'");
    }
    return std::make_unique<MockReaderBackend>(mode, queries, backend.fixed_text);
}

std::unique_ptr<PassageScorer> make_scorer(const BackendConfig& backend) {
    if (backend.kind == "http") return std::make_unique<HttpScorer>(backend.endpoint);
    if (backend.mock_mode != "overlap") {
        throw ValidationError("unknown mock scorer mode '" + backend.mock_mode + "' (expected overlap)");
    }
    return std::make_unique<OverlapScorer>();
}

std::pair<Corpus, QuerySet> load_dataset(const PipelineConfig& config, std::ostream& log) {
    require_file(config.corpus, "corpus");
    require_file(config.queries, "queries");
    Corpus corpus = ingest_corpus(config.corpus);
    QuerySet queries = ingest_queries(config.queries);
    for (const auto& warning : queries.resolve_against(corpus)) log << "[ragged] warning: " << warning << '\n';
    return {std::move(corpus), std::move(queries)};
}

IndexResult cmd_index(const PipelineConfig& config, std::ostream& log) {
    validate_config(config);
    require_file(config.corpus, "corpus");
    const OutputLayout out{config.output_dir};
    ensure_output_dir(config);

    const Corpus corpus = ingest_corpus(config.corpus);
    IndexResult result;
    result.stats = corpus.stats();
    result.corpus_hash = sha256_file(config.corpus);

    if (std::filesystem::exists(out.index())) {
        try {
            std::string saved_hash;
            const auto saved = InvertedIndex::load(out.index(), &saved_hash);
            if (saved_hash == result.corpus_hash && saved.params().k1 == config.retriever.bm25.k1 &&
                saved.params().b == config.retriever.bm25.b) {
                log << "[ragged] index up to date: " << out.index().string() << '\n';
                return result;
            }
        } catch (const ValidationError&) {
            log << "[ragged] existing index unreadable, rebuilding\n";
        }
    }
    const auto index = InvertedIndex::build(corpus, config.retriever.bm25);
    index.save(out.index(), result.corpus_hash);
    result.rebuilt = true;
    log << "[ragged] indexed " << result.stats.passage_count << " passages from " << result.stats.doc_count
        << " documents (avg " << fixed(result.stats.avg_passages_per_doc, 4) << " passages/doc, "
        << index.all_postings().size() << " terms) -> " << out.index().string() << '\n';
    return result;
}

RetrievalRun cmd_retrieve(const PipelineConfig& config, std::ostream& log) {
    validate_config(config);
    const OutputLayout out{config.output_dir};
    ensure_output_dir(config);
    auto [corpus, queries] = load_dataset(config, log);
    const std::size_t depth = config.k_grid.back();

    RetrievalRun run;
    if (config.retriever.kind == "bm25") {
        if (!std::filesystem::exists(out.index())) {
            throw ValidationError("corpus is not indexed (" + out.index().string() + " missing); run 'ragged index' first");
        }
        std::string saved_hash;
        const auto index = InvertedIndex::load(out.index(), &saved_hash);
        if (saved_hash != sha256_file(config.corpus)) {
            throw ValidationError("index " + out.index().string() + " does not match corpus " + config.corpus.string() +
                                  "; run 'ragged index' again");
        }
        run = run_bm25(index, queries, depth, config.retriever.name);
    } else {
        run = import_run(config.retriever.run_path, config.retriever.name);
        if (run.max_k() < depth) {
            throw ValidationError("imported run " + config.retriever.run_path.string() + " has depth " +
                                  std::to_string(run.max_k()) + " < max k_grid " + std::to_string(depth));
        }
        for (auto& [qid, entries] : run.by_query) {
            if (entries.size() > depth) entries.resize(depth);
        }
    }
    if (config.rerank) {
        auto scorer = make_scorer(config.rerank->backend);
        RerankOptions options{std::min(config.rerank->depth, run.max_k()), config.rerank->parallelism};
        run = rerank(run, queries, corpus, *scorer, options);
    }
    validate_run(run);
    export_run(out.run(), run);
    std::size_t lines = 0;
    for (const auto& [qid, entries] : run.by_query) lines += entries.size();
    log << "[ragged] wrote " << lines << " run lines for " << run.by_query.size() << " queries -> "
        << out.run().string() << '\n';
    return run;
}

SweepStats cmd_sweep(const PipelineConfig& config, std::ostream& log) {
    validate_config(config);
    if (config.readers.empty()) throw ValidationError("no readers configured");
    const OutputLayout out{config.output_dir};
    ensure_output_dir(config);
    auto [corpus, queries] = load_dataset(config, log);
    require_file(out.run(), "run (run 'ragged retrieve' first)");
    const auto run = import_run(out.run(), config.effective_retriever_name());

    AnswerStore store(out.answers());
    const SweepSpec spec{config.k_grid, config.conditions, config.variants};
    SweepStats total;
    for (const auto& reader : config.readers) {
        auto backend = make_reader_backend(reader.backend, &queries);
        const auto stats = run_sweep(queries, corpus, run, reader.reader, *backend, spec, store);
        log << "[ragged] reader " << reader.reader.reader_name << ": " << stats.executed << " new answers, "
            << stats.skipped << " already done, " << stats.failed << " failed, " << stats.unsatisfied
            << " top_gold skipped (no gold in top-k)\n";
        total.executed += stats.executed;
        total.skipped += stats.skipped;
        total.failed += stats.failed;
        total.unsatisfied += stats.unsatisfied;
    }
    return total;
}

EvaluateResult cmd_evaluate(const PipelineConfig& config, std::ostream& log) {
    validate_config(config);
    const OutputLayout out{config.output_dir};
    ensure_output_dir(config);
    const F1Options f1_options{config.metrics.normalize_answers};

    EvaluateResult result;
    ojson inputs = ojson::object();
    std::optional<Corpus> corpus;
    std::optional<QuerySet> queries;
    std::vector<ReaderAnswer> answers;

    if (config.curves_input) {
        result.curves = read_curves_file(*config.curves_input);
        inputs["curves"] = sha256_file(*config.curves_input);
    } else {
        auto dataset = load_dataset(config, log);
        corpus = std::move(dataset.first);
        queries = std::move(dataset.second);
        require_file(out.answers(), "answers (run 'ragged sweep' first)");
        answers = load_answers(out.answers());
        inputs["corpus"] = sha256_file(config.corpus);
        inputs["queries"] = sha256_file(config.queries);
        inputs["answers"] = sha256_file(out.answers());
        if (std::filesystem::exists(out.run())) inputs["run"] = sha256_file(out.run());

        std::map<CurveLabel, std::vector<ReaderAnswer>> groups;
        for (const auto& a : answers) {
            CurveLabel label{config.dataset, a.retriever, a.reader, to_string(a.condition), to_string(a.variant)};
            groups[label].push_back(a);
        }
        for (const auto& [label, group] : groups) {
            if (label.condition == "no_context") {
                PerformanceCurve baseline{label, {{0, mean_f1(group, *queries, f1_options)}}};
                result.curves.push_back(std::move(baseline));
            } else {
                result.curves.push_back(build_curve(group, *queries, label, f1_options));
            }
        }
    }
    if (result.curves.empty()) throw ValidationError("no curves to evaluate");

    {
        std::ostringstream csv;
        write_curves_csv(csv, result.curves);
        write_text(out.curves(), csv.str());
    }

    const std::string hash = config_hash(config);
    const auto summaries = summarize_curves(result.curves, config.metrics);

    auto& metrics = result.metrics;
    metrics["config_hash"] = hash;
    metrics["inputs"] = inputs;
    metrics["mode"] = config.curves_input ? "curve_replay" : "answers";
    metrics["hyperparameters"] = hyperparameters(config.metrics);
    metrics["curves"] = ojson::array();
    for (const auto& s : summaries) {
        ojson entry;
        entry["label"] = to_json(s.curve.label);
        entry["k_star"] = s.k_star;
        entry["f1_at_k_star"] = s.f1_at_k_star;
        entry["stability"] = s.stability ? to_json(*s.stability) : ojson(nullptr);
        entry["scalability"] = s.scalability ? to_json(*s.scalability) : ojson(nullptr);
        entry["notes"] = s.notes;
        metrics["curves"].push_back(std::move(entry));
    }

    std::vector<PerformanceCurve> eligible;
    for (const auto& s : summaries) {
        if (s.curve.label.condition == "top_k" && s.stability) eligible.push_back(s.curve);
    }
    if (eligible.size() >= 2) {
        metrics["sensitivity"] =
            to_json(sensitivity_scan(eligible, config.metrics.epsilon_range, config.metrics.delta_range));
    } else {
        metrics["sensitivity"] = {{"epsilons", config.metrics.epsilon_range},
                                  {"deltas", config.metrics.delta_range},
                                  {"skipped", "needs at least two top_k curves with two or more depths"}};
    }

    metrics["retriever_deltas"] = ojson::array();
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        for (std::size_t j = i + 1; j < summaries.size(); ++j) {
            const auto& a = summaries[i].curve;
            const auto& b = summaries[j].curve;
            if (a.label.dataset != b.label.dataset || a.label.reader != b.label.reader ||
                a.label.condition != b.label.condition || a.label.variant != b.label.variant ||
                a.label.retriever == b.label.retriever) {
                continue;
            }
            std::vector<std::size_t> grid;
            const auto kb = b.ks();
            for (auto k : a.ks()) {
                if (std::find(kb.begin(), kb.end(), k) != kb.end()) grid.push_back(k);
            }
            if (grid.empty()) continue;
            const auto d = retriever_delta(a, b, grid);
            ojson entry;
            entry["a"] = to_json(a.label);
            entry["b"] = to_json(b.label);
            entry["grid"] = grid;
            entry["average_difference"] = d.average_difference;
            entry["optimal_difference"] = d.optimal_difference;
            metrics["retriever_deltas"].push_back(std::move(entry));
        }
    }

    auto& verdicts = result.verdicts;
    verdicts["config_hash"] = hash;
    verdicts["inputs"] = inputs;
    verdicts["verdicts"] = ojson::object();
    auto& behavior = result.behavior;
    behavior["config_hash"] = hash;
    behavior["inputs"] = inputs;
    behavior["behavior"] = ojson::object();
    for (const auto& s : summaries) {
        const std::string key = s.curve.label.to_string();
        if (s.verdict) {
            auto entry = to_json(*s.verdict, s.curve.ks());
            entry["label"] = to_json(s.curve.label);
            entry["gain_average"] = *s.gain_average;
            entry["gain_at_optimal"] = *s.gain_at_optimal;
            verdicts["verdicts"][key] = std::move(entry);
        }
        if (s.behavior) {
            auto entry = to_json(*s.behavior);
            entry["label"] = to_json(s.curve.label);
            behavior["behavior"][key] = std::move(entry);
        }
    }

    if (!config.curves_input && std::filesystem::exists(out.run())) {
        const auto run = import_run(out.run(), config.effective_retriever_name());
        metrics["recall"] = ojson::array();
        for (auto k : config.k_grid) {
            metrics["recall"].push_back(
                {{"k", k},
                 {"passage", to_json(recall_at_k(run, *queries, *corpus, k, RecallLevel::passage))},
                 {"document", to_json(recall_at_k(run, *queries, *corpus, k, RecallLevel::document))}});
        }

        auto& slices = result.slices;
        slices["config_hash"] = hash;
        slices["inputs"] = inputs;
        slices["retriever"] = run.retriever_name;
        slices["slices"] = ojson::array();
        for (auto k : config.k_grid) {
            if (k > run.max_k()) continue;
            const auto found = slice_queries(run, *queries, *corpus, {SliceKind::gold_found, k, std::nullopt});
            const auto page = slice_queries(run, *queries, *corpus, {SliceKind::gold_page_only, k, std::nullopt});
            ojson entry;
            entry["k"] = k;
            entry["gold_found"] = found.in_slice;
            entry["no_gold"] = found.out_slice;
            entry["gold_page_only"] = page.in_slice;
            entry["unscored"] = found.unscored;
            const std::set<std::string> found_ids(found.in_slice.begin(), found.in_slice.end());
            const std::set<std::string> missing_ids(found.out_slice.begin(), found.out_slice.end());
            std::map<std::pair<std::string, std::string>, std::pair<std::vector<ReaderAnswer>, std::vector<ReaderAnswer>>>
                by_reader;
            for (const auto& a : answers) {
                if (a.condition != ConditionTag::top_k || a.k != k || a.retriever != run.retriever_name) continue;
                auto& bucket = by_reader[{a.reader, to_string(a.variant)}];
                if (found_ids.contains(a.query_id)) bucket.first.push_back(a);
                if (missing_ids.contains(a.query_id)) bucket.second.push_back(a);
            }
            entry["mean_f1"] = ojson::array();
            for (const auto& [key, bucket] : by_reader) {
                entry["mean_f1"].push_back(
                    {{"reader", key.first},
                     {"variant", key.second},
                     {"gold_found", bucket.first.empty() ? ojson(nullptr) : ojson(mean_f1(bucket.first, *queries, f1_options))},
                     {"no_gold", bucket.second.empty() ? ojson(nullptr) : ojson(mean_f1(bucket.second, *queries, f1_options))}});
            }
            slices["slices"].push_back(std::move(entry));
        }
        write_json(out.slices(), slices);
    }

    write_json(out.metrics(), metrics);
    write_json(out.verdicts(), verdicts);
    write_json(out.behavior(), behavior);
    log << "[ragged] evaluated " << summaries.size() << " curves -> " << out.metrics().string() << '\n';
    return result;
}

ReportResult cmd_report(const PipelineConfig& config, std::ostream& log) {
    validate_config(config);
    const OutputLayout out{config.output_dir};
    const auto curves = config.curves_input ? read_curves_file(*config.curves_input) : read_curves_file(out.curves());

    std::map<std::pair<std::string, std::string>, std::vector<const PerformanceCurve*>> groups;
    for (const auto& c : curves) {
        if (!is_baseline(c)) groups[{c.label.dataset, c.label.retriever}].push_back(&c);
    }
    if (groups.empty()) throw ValidationError("nothing to report: no retrieval curves");

    const auto summaries = summarize_curves(curves, config.metrics);
    ensure_output_dir(config);
    std::filesystem::create_directories(out.plots());

    ReportResult result;
    std::vector<std::pair<std::string, std::string>> plot_links;
    for (const auto& [key, members] : groups) {
        std::vector<PlotSeries> series;
        for (const auto* c : members) series.push_back({series_name(c->label), c->points, optimal_k(*c)});
        const std::string file = slug(key.first) + "__" + slug(key.second) + ".svg";
        const auto path = out.plots() / file;
        write_text(path, render_svg(key.first + " / " + key.second, series));
        result.files.push_back(path);
        plot_links.emplace_back(key.first, "plots/" + file);
    }
    write_text(out.report(), render_markdown(summaries, config.metrics, plot_links));
    result.files.push_back(out.report());
    log << "[ragged] wrote " << out.report().string() << " and " << groups.size() << " plots\n";
    return result;
}

}  // namespace ragged
