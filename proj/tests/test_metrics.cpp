#include <cmath>
#include <random>
#include <sstream>

#include "curve_fixtures.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "ragged/error.hpp"
#include "ragged/metrics.hpp"

using namespace ragged;

namespace {
std::vector<std::pair<std::size_t, double>> pairs_of(const PerformanceCurve& curve) {
    std::vector<std::pair<std::size_t, double>> out;
    for (const auto& p : curve.points) out.emplace_back(p.k, p.f1);
    return out;
}

ReaderAnswer answer(const std::string& qid, std::size_t k, const std::string& text) {
    return {qid, "bm25", "r", ConditionTag::top_k, k, PromptVariant::standard, text, false, 0, std::nullopt};
}

RetrievalRun run_of(const std::string& qid, const std::vector<std::string>& ids) {
    RetrievalRun run;
    run.retriever_name = "r";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        run.by_query[qid].push_back({ids[i], static_cast<double>(ids.size() - i), i + 1});
    }
    return run;
}
}  // namespace

TEST_CASE("unigram F1 on tabulated cases") {
    for (const auto& c : fixture::f1_cases()) {
        CAPTURE(c.prediction);
        const double got = unigram_f1(c.prediction, c.golds);
        CHECK(got == doctest::Approx(c.expected).epsilon(1e-12));
        CHECK(got == oracle::f1(c.prediction, c.golds));
    }
    CHECK_THROWS_AS(unigram_f1("x", std::vector<std::string>{}), ValidationError);
}

TEST_CASE("unigram F1 without normalization splits on whitespace only") {
    const std::vector<std::string> gold = {"blue whale"};
    CHECK(unigram_f1("The Blue Whale.", gold, {false}) == 0.0);
    CHECK(unigram_f1("blue whale", gold, {false}) == 100.0);
}

TEST_CASE("unigram F1 properties on random strings") {
    std::mt19937 rng(11);
    const std::vector<std::string> vocab = {"the", "Cat", "cat.", "a", "dog", "an", "Bird", "bird", "fish", "!", "x"};
    std::uniform_int_distribution<std::size_t> len(0, 6), word(0, vocab.size() - 1);
    auto phrase = [&] {
        std::string s;
        const auto n = len(rng);
        for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + vocab[word(rng)];
        return s;
    };
    for (int i = 0; i < 2000; ++i) {
        const auto a = phrase();
        const auto b = phrase();
        const double ab = unigram_f1(a, std::vector<std::string>{b});
        const double ba = unigram_f1(b, std::vector<std::string>{a});
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ab <= 100.0);
        auto ta = oracle::f1_tokens(a), tb = oracle::f1_tokens(b);
        std::sort(ta.begin(), ta.end());
        std::sort(tb.begin(), tb.end());
        CHECK((ab == 100.0) == (ta == tb));
    }
}

TEST_CASE("recall@k") {
    const Corpus corpus({{"p1", "D", "", "a"}, {"p2", "D", "", "b"}, {"p3", "E", "", "c"}, {"p4", "F", "", "d"}});
    const QuerySet queries({{"q", "?", {"x"}, {"p1", "p2"}, {"D"}, false}});
    const auto run = run_of("q", {"p3", "p1", "p2", "p4"});

    const auto at2 = recall_at_k(run, queries, corpus, 2, RecallLevel::passage);
    CHECK(at2.recall == 50.0);
    CHECK(at2.scored == 1);
    CHECK(recall_at_k(run, queries, corpus, 3, RecallLevel::passage).recall == 100.0);
    CHECK(recall_at_k(run, queries, corpus, 1, RecallLevel::document).recall == 0.0);
    CHECK(recall_at_k(run, queries, corpus, 2, RecallLevel::document).recall == 100.0);
    CHECK_THROWS_AS(recall_at_k(run, queries, corpus, 0, RecallLevel::passage), ValidationError);

    const QuerySet mixed({{"q", "?", {"x"}, {"p1", "p2"}, {"D"}, false}, {"r", "?", {"x"}, {}, {}, false}});
    const auto report = recall_at_k(run, mixed, corpus, 2, RecallLevel::passage);
    CHECK(report.scored == 1);
    CHECK(report.excluded == 1);

    const auto first = run_of("q", {"p1", "p2", "p3"});
    for (std::size_t k = 2; k <= 3; ++k) CHECK(recall_at_k(first, queries, corpus, k, RecallLevel::passage).recall == 100.0);
}

TEST_CASE("build_curve averages per depth") {
    const QuerySet queries({{"q1", "?", {"yes"}, {}, {}, false}, {"q2", "?", {"yes"}, {}, {}, false}});
    const std::vector<ReaderAnswer> answers = {answer("q1", 1, "yes"), answer("q2", 1, "no")};
    const auto curve = build_curve(answers, queries, {"d", "bm25", "r"});
    REQUIRE(curve.points.size() == 1);
    CHECK(curve.points[0] == CurvePoint{1, 50.0});

    const std::vector<ReaderAnswer> two = {answer("q1", 5, "yes"), answer("q1", 1, "no")};
    const auto grid = build_curve(two, queries, {"d", "bm25", "r"});
    CHECK(grid.ks() == std::vector<std::size_t>{1, 5});

    auto failed = answer("q1", 1, "");
    failed.error = "backend down";
    const std::vector<ReaderAnswer> with_error = {failed, answer("q2", 1, "yes")};
    CHECK(build_curve(with_error, queries, {"d", "bm25", "r"}).points[0].f1 == 50.0);

    CHECK_THROWS_AS(build_curve(std::vector<ReaderAnswer>{}, queries, {"d", "bm25", "r"}), ValidationError);
}

TEST_CASE("optimal k") {
    CHECK(optimal_k(fixture::crag_llama2()) == 5);
    CHECK(optimal_k(fixture::crag_flant5()) == 1);
    auto scaled = fixture::crag_llama2();
    for (auto& p : scaled.points) p.f1 *= 3.5;
    CHECK(optimal_k(scaled) == 5);
}

TEST_CASE("stability score") {
    const auto llama = rss(fixture::crag_llama2(), 5);
    CHECK(llama.defined);
    CHECK(llama.k_star == 5);
    CHECK(llama.window_points_used == std::vector<std::size_t>{1, 10});
    REQUIRE(llama.rss.has_value());
    CHECK(std::abs(*llama.rss - 20.0 / 23.0) < 1e-9);

    const auto constant = rss(fixture::make_curve("c", {1, 2, 5, 10}, {40, 40, 40, 40}), 5);
    CHECK(constant.rss == 1.0);

    const auto sparse = rss(fixture::make_curve("s", {1, 50}, {30, 10}), 5);
    CHECK_FALSE(sparse.defined);
    CHECK_FALSE(sparse.rss.has_value());

    CHECK_THROWS_AS(rss(fixture::make_curve("z", {1, 2}, {0, 0}), 5), ValidationError);
    CHECK_THROWS_AS(rss(fixture::make_curve("one", {1}, {10}), 5), ValidationError);

    auto scaled = fixture::crag_llama2();
    for (auto& p : scaled.points) p.f1 *= 0.5;
    CHECK(std::abs(*rss(scaled, 5).rss - *llama.rss) < 1e-12);
}

TEST_CASE("scalability coefficient") {
    const auto llama = rsc(fixture::crag_llama2(), 0.5);
    REQUIRE(llama.k_last_gain.has_value());
    CHECK(*llama.k_last_gain == 5);
    CHECK(std::abs(llama.rsc - 86.0) < 1e-9);
    CHECK(llama.gain_segments == std::vector<std::pair<std::size_t, std::size_t>>{{1, 5}});

    const auto flan = rsc(fixture::crag_flant5(), 0.5);
    CHECK(flan.rsc == 0.0);
    CHECK_FALSE(flan.k_last_gain.has_value());

    CHECK(rsc(fixture::make_curve("d", {1, 2, 5}, {30, 20, 10}), 0.5).rsc == 0.0);
    CHECK(rsc(fixture::make_curve("t", {1, 2, 5}, {10, 20, 20}), 0.5).rsc == 15.0);

    CHECK_THROWS_AS(rsc(fixture::crag_llama2(), 0.0), ValidationError);
    CHECK_THROWS_AS(rsc(fixture::make_curve("one", {1}, {10}), 0.5), ValidationError);
}

TEST_CASE("closed-form RSC matches numeric integration") {
    std::mt19937 rng(3);
    for (int i = 0; i < 300; ++i) {
        const auto curve = fixture::random_grid_curve(rng);
        const auto report = rsc(curve, 0.5);
        const auto pts = pairs_of(curve);
        const auto last = oracle::last_gain_index(pts, 0.5);
        if (!last) {
            CHECK(report.rsc == 0.0);
            continue;
        }
        CHECK(report.k_last_gain == pts[*last].first);
        CHECK(std::abs(report.rsc - oracle::integrate_piecewise_linear(pts, *last)) < 1e-9);
    }
}

TEST_CASE("kernels are pure") {
    const auto curve = fixture::crag_llama2();
    const auto a = rsc(curve, 0.5);
    const auto b = rsc(curve, 0.5);
    CHECK(a.rsc == b.rsc);
    CHECK(rss(curve, 5).rss == rss(curve, 5).rss);
}

TEST_CASE("sensitivity scan") {
    const std::vector<double> eps = {0.5, 0.6, 0.7};
    const std::vector<std::size_t> deltas = {5, 10};

    SUBCASE("well separated curves keep their ranking") {
        const std::vector<PerformanceCurve> curves = {
            fixture::make_curve("strong", {1, 2, 5, 10}, {50, 60, 65, 66}),
            fixture::make_curve("weak", {1, 2, 5, 10}, {10, 12, 5, 4}),
        };
        const auto report = sensitivity_scan(curves, eps, deltas);
        CHECK(report.invariant);
        CHECK(report.flips.empty());
        CHECK(report.rankings.size() == 6);
    }
    SUBCASE("a 0.6-point gain flips the RSC order between 0.5 and 0.7") {
        const std::vector<PerformanceCurve> curves = {
            fixture::make_curve("edge", {1, 50}, {40.0, 40.6}),
            fixture::make_curve("step", {1, 2, 5}, {10, 20, 20}),
        };
        REQUIRE(40.6 - 40.0 >= 0.6);
        const auto report = sensitivity_scan(curves, eps, deltas);
        CHECK_FALSE(report.invariant);
        REQUIRE_FALSE(report.flips.empty());
        const auto& flip = report.flips.front();
        CHECK(flip.metric == "rsc");
        CHECK(flip.epsilon == 0.7);
        CHECK(flip.higher_at_baseline.find("edge") != std::string::npos);
        CHECK(flip.higher_here.find("step") != std::string::npos);
    }
    SUBCASE("F1 spread summary") {
        const std::vector<PerformanceCurve> curves = {
            fixture::make_curve("a", {1, 2}, {40.0, 40.76}),
            fixture::make_curve("b", {1, 2}, {30.0, 30.92}),
            fixture::make_curve("c", {1, 2}, {20.0, 20.60}),
        };
        const auto report = sensitivity_scan(curves, eps, deltas);
        CHECK(report.f1_std_mean == doctest::Approx(0.38).epsilon(1e-9));
        CHECK(report.f1_std_max == doctest::Approx(0.46).epsilon(1e-9));
    }
    CHECK_THROWS_AS(sensitivity_scan(std::vector<PerformanceCurve>{fixture::crag_llama2()}, eps, deltas),
                    ValidationError);
}

TEST_CASE("curves.csv round-trip and errors") {
    const std::vector<PerformanceCurve> curves = {fixture::crag_llama2(), fixture::crag_flant5()};
    std::stringstream buffer;
    write_curves_csv(buffer, curves);
    const auto text = buffer.str();
    CHECK(text.rfind("dataset,retriever,reader,condition,variant,k,f1\n", 0) == 0);
    CHECK(text.find("crag,bm25,llama2,top_k,standard,5,23.0000\n") != std::string::npos);

    auto back = read_curves_csv(buffer, "curves.csv");
    std::sort(back.begin(), back.end(), [](const auto& a, const auto& b) { return a.label < b.label; });
    REQUIRE(back.size() == 2);
    CHECK(back[0].label.reader == "flant5");
    CHECK(back[0].points == curves[1].points);
    CHECK(back[1].points == curves[0].points);

    std::istringstream bad("dataset,retriever,reader,condition,variant,k,f1\nd,r,m,top_k,standard,1,50\nd,r,m,top_k\n");
    try {
        read_curves_csv(bad, "c.csv");
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("c.csv:3") != std::string::npos);
    }
    std::istringstream dup("dataset,retriever,reader,condition,variant,k,f1\nd,r,m,top_k,standard,1,50\nd,r,m,top_k,standard,1,40\n");
    CHECK_THROWS_AS(read_curves_csv(dup, "c.csv"), ValidationError);
    std::istringstream range("dataset,retriever,reader,condition,variant,k,f1\nd,r,m,top_k,standard,1,150\n");
    CHECK_THROWS_AS(read_curves_csv(range, "c.csv"), ValidationError);
}
