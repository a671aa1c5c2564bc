#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "ragged/error.hpp"
#include "ragged/metrics.hpp"
#include "ragged/reader.hpp"
#include "ragged/text.hpp"

using namespace ragged;
namespace fs = std::filesystem;

namespace {
const std::string kFixtures = RAGGED_FIXTURE_DIR;

std::string words(std::size_t n, const std::string& stem) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) out += (i ? " " : "") + stem + std::to_string(i);
    return out;
}

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RetrievalRun ranked(std::vector<std::string> ids) {
    RetrievalRun run;
    run.retriever_name = "bm25";
    auto& entries = run.by_query["q"];
    for (std::size_t i = 0; i < ids.size(); ++i) {
        entries.push_back({ids[i], static_cast<double>(ids.size() - i), i + 1});
    }
    return run;
}

Corpus nine_passages() {
    std::vector<Passage> ps;
    for (int i = 1; i <= 9; ++i) ps.push_back({"p" + std::to_string(i), "d", "T" + std::to_string(i), "body"});
    return Corpus(std::move(ps));
}

/// Fails a fixed number of times per request before answering.
class FlakyBackend : public ReaderBackend {
public:
    explicit FlakyBackend(int failures) : failures_(failures) {}
    std::string complete(const CompletionRequest& request) override {
        std::lock_guard lock(mutex_);
        if (++attempts_[request.query_id] <= failures_) throw BackendError("transient");
        return "ok\nsecond line";
    }
    int attempts(const std::string& qid) {
        std::lock_guard lock(mutex_);
        return attempts_[qid];
    }

private:
    int failures_;
    std::mutex mutex_;
    std::map<std::string, int> attempts_;
};

ReaderConfig quick_config(const std::string& name) {
    ReaderConfig config;
    config.reader_name = name;
    config.retry.initial_backoff = std::chrono::milliseconds(1);
    config.parallelism = 2;
    return config;
}
}  // namespace

TEST_CASE("prompt template") {
    const std::vector<ContextPassage> one = {{"p1", "Blue whale", "The blue whale is large."}};
    const auto standard = assemble_prompt("What is large?", one, PromptVariant::standard);
    CHECK(standard.rfind(
              "Instruction: Give simple short one phrase answers for the questions based on the context", 0) == 0);
    CHECK(standard ==
          "Instruction: Give simple short one phrase answers for the questions based on the context\n"
          "Context:\nBlue whale\nThe blue whale is large.\n"
          "Question: What is large?\nAnswer:");

    const auto relevant = assemble_prompt("q?", one, PromptVariant::relevant);
    CHECK(relevant.find("only the parts of the context that are relevant to the question") != std::string::npos);

    const auto closed = assemble_prompt("q?", {}, PromptVariant::standard, false);
    CHECK(closed.find("Context:") == std::string::npos);
    CHECK(closed.find("Question: q?\n") != std::string::npos);
    CHECK(closed.ends_with("Answer:"));

    const std::vector<ContextPassage> two = {{"a", "A", "x"}, {"b", "", "y"}};
    CHECK(assemble_prompt("q", two, PromptVariant::standard).find("Context:\nA\nx\n\ny\nQuestion: q") !=
          std::string::npos);
    CHECK(assemble_prompt("q", two, PromptVariant::relevant) == assemble_prompt("q", two, PromptVariant::relevant));
}

TEST_CASE("context truncation") {
    SUBCASE("within budget is the identity") {
        std::vector<ContextPassage> ps = {{"a", "", words(10, "w")}, {"b", "", words(5, "v")}};
        const auto out = truncate_context(ps, 15);
        CHECK_FALSE(out.truncated);
        CHECK(out.token_count == 15);
        REQUIRE(out.passages.size() == 2);
        CHECK(out.passages[1].text == ps[1].text);
    }
    SUBCASE("three 100-token passages, budget 250") {
        std::vector<ContextPassage> ps = {
            {"a", "", words(100, "a")}, {"b", "", words(100, "b")}, {"c", "", words(100, "c")}};
        const auto out = truncate_context(ps, 250);
        CHECK(out.truncated);
        CHECK(out.token_count == 250);
        REQUIRE(out.passages.size() == 3);
        CHECK(out.passages[0].text == ps[0].text);
        CHECK(out.passages[1].text == ps[1].text);
        CHECK(text::count_whitespace_tokens(out.passages[2].text) == 50);
        CHECK(out.passages[2].text == words(50, "c"));
    }
    SUBCASE("budget 1 keeps a single token") {
        std::vector<ContextPassage> ps = {{"a", "", "alpha beta"}, {"b", "", "gamma"}};
        const auto out = truncate_context(ps, 1);
        CHECK(out.truncated);
        CHECK(out.token_count == 1);
        REQUIRE(out.passages.size() == 1);
        CHECK(out.passages[0].text == "alpha");
    }
    SUBCASE("titles count toward the budget") {
        std::vector<ContextPassage> ps = {{"a", "Two words", "one two three"}};
        const auto out = truncate_context(ps, 3);
        CHECK(out.truncated);
        REQUIRE(out.passages.size() == 1);
        CHECK(out.passages[0].title == "Two words");
        CHECK(out.passages[0].text == "one");
    }
    CHECK_THROWS_AS(truncate_context({}, 0), ValidationError);
}

TEST_CASE("context selection") {
    const auto corpus = nine_passages();
    const auto run = ranked({"p3", "p1", "p2"});
    const Query gold_p1{"q", "?", {"x"}, {"p1"}, {}, false};

    auto ids = [](const std::vector<ContextPassage>& ps) {
        std::vector<std::string> out;
        for (const auto& p : ps) out.push_back(p.passage_id);
        return out;
    };
    CHECK(ids(select_context(gold_p1, run, corpus, {ConditionTag::top_gold, 3})) == std::vector<std::string>{"p1"});
    CHECK(ids(select_context(gold_p1, run, corpus, {ConditionTag::top_k, 2})) ==
          std::vector<std::string>{"p3", "p1"});
    CHECK(select_context(gold_p1, run, corpus, {ConditionTag::no_context, 0}).empty());

    const Query gold_p9{"q", "?", {"x"}, {"p9"}, {}, false};
    CHECK_THROWS_AS(select_context(gold_p9, run, corpus, {ConditionTag::top_gold, 3}), ConditionUnsatisfied);

    const Query no_gold{"q", "?", {"x"}, {}, {}, false};
    CHECK_THROWS_AS(select_context(no_gold, run, corpus, {ConditionTag::top_gold, 3}), ValidationError);
    CHECK_THROWS_AS(select_context(gold_p1, run, corpus, {ConditionTag::top_k, 0}), ValidationError);
}

TEST_CASE("top_gold context is a subsequence of top_k context") {
    const auto corpus = nine_passages();
    const auto run = ranked({"p4", "p2", "p9", "p1", "p7", "p3"});
    const Query q{"q", "?", {"x"}, {"p9", "p3", "p2"}, {}, false};
    for (std::size_t k = 2; k <= 6; ++k) {
        const auto gold = select_context(q, run, corpus, {ConditionTag::top_gold, k});
        const auto top = select_context(q, run, corpus, {ConditionTag::top_k, k});
        std::size_t j = 0;
        for (const auto& p : top) {
            if (j < gold.size() && gold[j].passage_id == p.passage_id) ++j;
        }
        CHECK(j == gold.size());
    }
}

TEST_CASE("sweep cardinality, persistence and resumption") {
    const auto dir = fresh_dir("ragged_sweep_test");
    const auto corpus = ingest_corpus(kFixtures + "/corpus6.jsonl");
    const auto all = ingest_queries(kFixtures + "/queries6.jsonl");
    const QuerySet queries({all.at("q1"), all.at("q2"), all.at("q3")});
    const auto run = run_bm25(InvertedIndex::build(corpus), queries, 5);

    MockReaderBackend backend(MockReaderBackend::Mode::gold_echo, &queries);
    const auto config = quick_config("mock");
    const SweepSpec spec{{1, 2}, {ConditionTag::top_k}, {}};

    AnswerStore store(dir / "answers.jsonl");
    const auto stats = run_sweep(queries, corpus, run, config, backend, spec, store);
    CHECK(stats.executed == 6);
    CHECK(store.size() == 6);
    CHECK(backend.calls() == 6);

    const auto persisted = load_answers(dir / "answers.jsonl");
    REQUIRE(persisted.size() == 6);
    CHECK(std::is_sorted(persisted.begin(), persisted.end(), answer_order));
    for (const auto& a : persisted) CHECK(a.context_tokens <= config.context_token_budget);

    std::ifstream in(dir / "answers.jsonl");
    const std::string before((std::istreambuf_iterator<char>(in)), {});

    AnswerStore reopened(dir / "answers.jsonl");
    MockReaderBackend second(MockReaderBackend::Mode::gold_echo, &queries);
    const auto again = run_sweep(queries, corpus, run, config, second, spec, reopened);
    CHECK(second.calls() == 0);
    CHECK(again.executed == 0);
    CHECK(again.skipped == 6);
    std::ifstream in2(dir / "answers.jsonl");
    const std::string after((std::istreambuf_iterator<char>(in2)), {});
    CHECK(before == after);

    // Extending the grid runs only the new depth.
    MockReaderBackend third(MockReaderBackend::Mode::gold_echo, &queries);
    const auto extended = run_sweep(queries, corpus, run, config, third, {{1, 2, 5}, {ConditionTag::top_k}, {}}, reopened);
    CHECK(third.calls() == 3);
    CHECK(extended.skipped == 6);
}

TEST_CASE("gold-echo answers score 100 whenever gold is in context") {
    const auto dir = fresh_dir("ragged_sweep_gold");
    const auto corpus = ingest_corpus(kFixtures + "/corpus6.jsonl");
    const auto queries = ingest_queries(kFixtures + "/queries6.jsonl");
    const auto run = run_bm25(InvertedIndex::build(corpus), queries, 6);
    MockReaderBackend backend(MockReaderBackend::Mode::gold_echo, &queries);
    AnswerStore store(dir / "answers.jsonl");
    run_sweep(queries, corpus, run, quick_config("mock"), backend, {{1, 2, 5}, {ConditionTag::top_k}, {}}, store);
    std::size_t gold_found = 0;
    for (const auto& a : store.answers()) {
        const auto& q = queries.at(a.query_id);
        const auto& entries = *run.entries(a.query_id);
        bool found = false;
        for (std::size_t i = 0; i < std::min(a.k, entries.size()); ++i) {
            found |= std::find(q.gold_passage_ids.begin(), q.gold_passage_ids.end(), entries[i].passage_id) !=
                     q.gold_passage_ids.end();
        }
        if (found) {
            ++gold_found;
            CHECK(unigram_f1(a.answer, q.gold_answers) == 100.0);
        }
    }
    CHECK(gold_found > 0);
}

TEST_CASE("sweep conditions: no_context once per query, unsatisfied top_gold skipped") {
    const auto dir = fresh_dir("ragged_sweep_conditions");
    const auto corpus = ingest_corpus(kFixtures + "/corpus6.jsonl");
    const auto queries = ingest_queries(kFixtures + "/queries6.jsonl");
    const auto run = run_bm25(InvertedIndex::build(corpus), queries, 2);
    MockReaderBackend backend(MockReaderBackend::Mode::fixed, nullptr, "x");
    AnswerStore store(dir / "answers.jsonl");
    const SweepSpec spec{{1, 2}, {ConditionTag::no_context, ConditionTag::top_gold}, {}};
    const auto stats = run_sweep(queries, corpus, run, quick_config("mock"), backend, spec, store);
    std::size_t closed = 0;
    for (const auto& a : store.answers()) {
        if (a.condition == ConditionTag::no_context) {
            ++closed;
            CHECK(a.k == 0);
            CHECK(a.context_tokens == 0);
        }
    }
    CHECK(closed == queries.size());
    CHECK(stats.executed + stats.unsatisfied == queries.size() + 2 * queries.size());
}

TEST_CASE("backend failures are retried and then recorded") {
    const auto dir = fresh_dir("ragged_sweep_retry");
    const auto corpus = ingest_corpus(kFixtures + "/corpus6.jsonl");
    const auto queries = ingest_queries(kFixtures + "/queries6.jsonl");
    const auto run = run_bm25(InvertedIndex::build(corpus), queries, 2);

    SUBCASE("two transient failures then success") {
        FlakyBackend backend(2);
        AnswerStore store(dir / "a.jsonl");
        const auto stats = run_sweep(queries, corpus, run, quick_config("flaky"), backend,
                                     {{1}, {ConditionTag::top_k}, {}}, store);
        CHECK(stats.failed == 0);
        CHECK(backend.attempts("q1") == 3);
        for (const auto& a : store.answers()) {
            CHECK(a.answer == "ok");
            CHECK_FALSE(a.error.has_value());
        }
    }
    SUBCASE("persistent failure is flagged and the sweep continues") {
        MockReaderBackend backend(MockReaderBackend::Mode::always_fail);
        AnswerStore store(dir / "b.jsonl");
        const auto stats = run_sweep(queries, corpus, run, quick_config("down"), backend,
                                     {{1, 2}, {ConditionTag::top_k}, {}}, store);
        CHECK(stats.failed == 8);
        CHECK(backend.calls() == 8 * 3);
        for (const auto& a : load_answers(dir / "b.jsonl")) {
            CHECK(a.answer.empty());
            REQUIRE(a.error.has_value());
        }
    }
}

TEST_CASE("answer store drops a torn final line") {
    const auto dir = fresh_dir("ragged_store_torn");
    ReaderAnswer a{"q1", "bm25", "r", ConditionTag::top_k, 1, PromptVariant::standard, "x", false, 3, std::nullopt};
    {
        std::ofstream out(dir / "answers.jsonl");
        out << answer_to_json_line(a) << "\n" << R"({"query_id":"q2","retr)";
    }
    AnswerStore store(dir / "answers.jsonl");
    CHECK(store.size() == 1);
    CHECK(store.contains(answer_key(a)));
    CHECK(answer_from_json_line(answer_to_json_line(a)) == a);

    {
        std::ofstream out(dir / "bad.jsonl");
        out << "{broken\n" << answer_to_json_line(a) << "\n";
    }
    CHECK_THROWS_AS(AnswerStore(dir / "bad.jsonl"), ValidationError);
}

TEST_CASE("HTTP reader backend") {
    httplib::Server server;
    nlohmann::json seen;
    std::string auth;
    std::mutex mutex;
    server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mutex);
        seen = nlohmann::json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"text":"Paris"})", "application/json");
    });
    server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("RAGGED_TEST_TOKEN", "secret", 1);
    HttpReaderBackend backend({"http://127.0.0.1:" + std::to_string(port), "/v1/complete", {}, 5}, "RAGGED_TEST_TOKEN");
    CompletionRequest request;
    request.prompt = "Question: x\nAnswer:";
    request.max_tokens = 10;
    CHECK(backend.complete(request) == "Paris");
    {
        std::lock_guard lock(mutex);
        CHECK(seen.at("prompt") == request.prompt);
        CHECK(seen.at("max_tokens") == 10);
        CHECK(seen.at("temperature") == 1.0);
        CHECK(seen.at("greedy") == true);
        CHECK(seen.at("beam_size") == 1);
        CHECK_FALSE(seen.contains("query_id"));
        CHECK(auth == "Bearer secret");
    }

    HttpReaderBackend bad({"http://127.0.0.1:" + std::to_string(port), "/bad", {}, 5});
    CHECK_THROWS_AS(bad.complete(request), BackendError);

    server.stop();
    worker.join();
}

TEST_CASE("truncation masking check") {
    const QuerySet queries({{"q1", "?", {"alpha"}, {}, {}, false}, {"q2", "?", {"beta"}, {}, {}, false}});
    auto answer = [](const std::string& qid, std::size_t k, std::size_t tokens, const std::string& text) {
        return ReaderAnswer{qid, "bm25", "r", ConditionTag::top_k, k, PromptVariant::standard, text, false, tokens,
                            std::nullopt};
    };
    SUBCASE("identical prompts") {
        const std::vector<ReaderAnswer> lo = {answer("q1", 20, 50, "alpha"), answer("q2", 20, 50, "gamma")};
        const std::vector<ReaderAnswer> hi = {answer("q1", 25, 50, "alpha"), answer("q2", 25, 50, "gamma")};
        const auto r = truncation_masking_check(lo, hi, queries);
        CHECK(r.share_with_longer_input == 0.0);
        CHECK(r.mean_abs_f1_delta == 0.0);
    }
    SUBCASE("longer inputs, unchanged answers") {
        const std::vector<ReaderAnswer> lo = {answer("q1", 20, 40, "alpha"), answer("q2", 20, 45, "x")};
        const std::vector<ReaderAnswer> hi = {answer("q1", 25, 50, "alpha"), answer("q2", 25, 60, "x")};
        const auto r = truncation_masking_check(lo, hi, queries);
        CHECK(r.share_with_longer_input == 1.0);
        CHECK(r.mean_abs_f1_delta == 0.0);
    }
    SUBCASE("8 of 25 deeper prompts longer, answers stable") {
        std::vector<Query> qs;
        std::vector<ReaderAnswer> lo, hi;
        for (int i = 0; i < 25; ++i) {
            const auto id = "q" + std::to_string(i);
            qs.push_back({id, "?", {"a b c d e f g h i j"}, {}, {}, false});
            lo.push_back(answer(id, 20, 100, "a b c d e f g h i j"));
            hi.push_back(answer(id, 25, i < 8 ? 110 : 100, "a b c d e f g h i j"));
        }
        const auto r = truncation_masking_check(lo, hi, QuerySet(qs));
        CHECK(r.share_with_longer_input == doctest::Approx(0.32));
        CHECK(r.mean_abs_f1_delta < 0.5);
    }
    SUBCASE("query sets must match") {
        const std::vector<ReaderAnswer> lo = {answer("q1", 20, 40, "alpha")};
        const std::vector<ReaderAnswer> hi = {answer("q2", 25, 50, "beta")};
        CHECK_THROWS_AS(truncation_masking_check(lo, hi, queries), ValidationError);
    }
}
