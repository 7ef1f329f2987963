// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "chatrank/errors.hpp"
#include "chatrank/eval.hpp"
#include "test_util.hpp"

using namespace chatrank;

namespace {

std::vector<ScoredDoc> ranking_of(const std::vector<std::string>& ids) {
    std::vector<ScoredDoc> ranked;
    double score = static_cast<double>(ids.size());
    int rank = 1;
    for (const auto& id : ids) {
        ranked.push_back(ScoredDoc{id, score, rank});
        score -= 1.0;
        ++rank;
    }
    return ranked;
}

} // namespace

TEST_CASE("ndcg: all grades zero give zero") {
    const auto ranking = ranking_of({"a", "b", "c"});
    const std::map<std::string, int> grades = {{"a", 0}, {"b", 0}, {"c", 0}};
    CHECK(ndcg_at_k(ranking, grades, 3) == 0.0);
}

TEST_CASE("ndcg: a grade-descending ranking is ideal") {
    const auto ranking = ranking_of({"a", "b", "c", "d"});
    const std::map<std::string, int> grades = {{"a", 2}, {"b", 2}, {"c", 1}, {"d", 0}};
    CHECK(ndcg_at_k(ranking, grades, 4) == 1.0);
}

TEST_CASE("ndcg: hand-computed value for grades (1, 2, 0) at k=3") {
    const auto ranking = ranking_of({"a", "b", "c"});
    const std::map<std::string, int> grades = {{"a", 1}, {"b", 2}, {"c", 0}};

    const double dcg = 1.0 + 3.0 / std::log2(3.0);
    const double idcg = 3.0 + 1.0 / std::log2(3.0);
    CHECK(dcg == doctest::Approx(2.8928).epsilon(1e-4));
    CHECK(idcg == doctest::Approx(3.6309).epsilon(1e-4));
    CHECK(ndcg_at_k(ranking, grades, 3) == doctest::Approx(dcg / idcg).epsilon(1e-12));
    CHECK(ndcg_at_k(ranking, grades, 3) == doctest::Approx(0.7967).epsilon(1e-4));
}

TEST_CASE("ndcg: k truncates both the ranking and the ideal") {
    const auto ranking = ranking_of({"a", "b", "c"});
    const std::map<std::string, int> grades = {{"a", 0}, {"b", 0}, {"c", 2}};
    // Top-2 prefix holds nothing; the ideal top-2 of the same pool holds the 2.
    CHECK(ndcg_at_k(ranking, grades, 2) == 0.0);
    CHECK(ndcg_at_k(ranking, grades, 3) > 0.0);
}

TEST_CASE("ndcg: a ranked document without a judgment is an error naming it") {
    const auto ranking = ranking_of({"a", "mystery"});
    const std::map<std::string, int> grades = {{"a", 1}};
    const auto message =
        testutil::message_of<DataError>([&] { ndcg_at_k(ranking, grades, 2); });
    CHECK(testutil::contains(message, "mystery"));
}

TEST_CASE("ndcg: swapping equal-grade documents changes nothing") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + static_cast<int>(rng() % 6);
        std::vector<std::string> ids;
        std::map<std::string, int> grades;
        for (int i = 0; i < n; ++i) {
            ids.push_back("d" + std::to_string(i));
            grades[ids.back()] = static_cast<int>(rng() % 3);
        }
        const double before = ndcg_at_k(ranking_of(ids), grades, n);

        for (int a = 0; a < n; ++a) {
            for (int b = a + 1; b < n; ++b) {
                if (grades[ids[static_cast<std::size_t>(a)]] ==
                    grades[ids[static_cast<std::size_t>(b)]]) {
                    auto swapped = ids;
                    std::swap(swapped[static_cast<std::size_t>(a)],
                              swapped[static_cast<std::size_t>(b)]);
                    CHECK(ndcg_at_k(ranking_of(swapped), grades, n) == before);
                }
            }
        }
    }
}

TEST_CASE("ndcg: stays in the unit interval; ideal permutation scores one") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 8);
        std::vector<std::string> ids;
        std::map<std::string, int> grades;
        bool any_positive = false;
        for (int i = 0; i < n; ++i) {
            ids.push_back("d" + std::to_string(i));
            grades[ids.back()] = static_cast<int>(rng() % 3);
            any_positive = any_positive || grades[ids.back()] > 0;
        }
        const double value = ndcg_at_k(ranking_of(ids), grades, n);
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);

        auto ideal = ids;
        std::sort(ideal.begin(), ideal.end(), [&](const auto& a, const auto& b) {
            return grades.at(a) > grades.at(b);
        });
        const double ideal_value = ndcg_at_k(ranking_of(ideal), grades, n);
        CHECK(ideal_value == (any_positive ? 1.0 : 0.0));
    }
}

TEST_CASE("precision_at_1: judged by the top document's grade") {
    const std::map<std::string, int> grades = {{"a", 2}, {"b", 0}, {"c", 1}};
    CHECK(precision_at_1(ranking_of({"a", "b"}), grades) == 1);
    CHECK(precision_at_1(ranking_of({"c", "a"}), grades) == 1);
    CHECK(precision_at_1(ranking_of({"b", "a"}), grades) == 0);
}

TEST_CASE("precision_at_1: mean over a fixture matches a manual count") {
    const std::map<std::string, int> grades = {{"good", 2}, {"mild", 1}, {"bad", 0}};
    const std::vector<std::vector<std::string>> rankings = {
        {"good", "bad"}, {"bad", "good"}, {"mild", "bad"}, {"bad", "mild"}, {"good", "mild"},
        {"mild", "good"}, {"bad", "bad2"}, {"good", "bad"}, {"mild", "good"}, {"bad", "good"}};
    auto extended = grades;
    extended["bad2"] = 0;

    int hits = 0;
    for (const auto& ids : rankings) {
        hits += precision_at_1(ranking_of(ids), extended);
    }
    // Manual count: rankings with good/mild on top are 1, 3, 5, 6, 8, 9.
    CHECK(hits == 6);
}

TEST_CASE("precision_at_1: unjudged top document is an error") {
    const std::map<std::string, int> grades = {{"a", 1}};
    CHECK_THROWS_AS(precision_at_1(ranking_of({"zzz"}), grades), DataError);
}

TEST_CASE("t-test: identical samples give t=0, p=1, flagged degenerate") {
    const std::vector<double> a = {0.5, 0.7, 0.9};
    const auto result = paired_t_test(a, a);
    CHECK(result.t == 0.0);
    CHECK(result.p == 1.0);
    CHECK(result.degenerate);
}

TEST_CASE("t-test: constant nonzero shift is the zero-variance branch") {
    const std::vector<double> a = {1.5, 2.5, 3.5};
    const std::vector<double> b = {1.0, 2.0, 3.0};
    const auto result = paired_t_test(a, b);
    CHECK(result.degenerate);
    CHECK(result.p == 0.0);
    CHECK(std::isinf(result.t));
    CHECK(result.t > 0.0);

    const auto flipped = paired_t_test(b, a);
    CHECK(flipped.p == 0.0);
    CHECK(flipped.t < 0.0);
}

TEST_CASE("t-test: differences {1,2,3,4} give the textbook t and p") {
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> b = {0.0, 0.0, 0.0, 0.0};
    const auto result = paired_t_test(a, b);
    CHECK_FALSE(result.degenerate);
    CHECK(result.t == doctest::Approx(3.873).epsilon(1e-3));
    CHECK(result.p == doctest::Approx(0.0305).epsilon(1e-3));

    // Independent derivation: mean 2.5, sample sd sqrt(5/3), n = 4.
    const double sd = std::sqrt(5.0 / 3.0);
    CHECK(result.t == doctest::Approx(2.5 / (sd / 2.0)).epsilon(1e-12));
}

TEST_CASE("t-test: antisymmetric in its arguments") {
    const std::vector<double> a = {0.62, 0.80, 0.55, 0.71, 0.69};
    const std::vector<double> b = {0.60, 0.74, 0.59, 0.66, 0.64};
    const auto ab = paired_t_test(a, b);
    const auto ba = paired_t_test(b, a);
    CHECK(ab.t == -ba.t);
    CHECK(ab.p == ba.p);
}

TEST_CASE("t-test: mismatched or too-short samples are rejected") {
    const std::vector<double> a = {1.0, 2.0};
    const std::vector<double> b = {1.0};
    CHECK_THROWS_AS(paired_t_test(a, b), UsageError);
    const std::vector<double> single = {1.0};
    CHECK_THROWS_AS(paired_t_test(single, single), UsageError);
}

TEST_CASE("student_t_two_tailed_p: known anchor points") {
    // t = 0 keeps the full mass regardless of df.
    CHECK(student_t_two_tailed_p(0.0, 3) == doctest::Approx(1.0).epsilon(1e-9));
    // df = 1 is the Cauchy distribution: P(|T| > 1) = 0.5 exactly.
    CHECK(student_t_two_tailed_p(1.0, 1) == doctest::Approx(0.5).epsilon(1e-6));
    // Symmetric in t.
    CHECK(student_t_two_tailed_p(-2.3, 7) ==
          doctest::Approx(student_t_two_tailed_p(2.3, 7)).epsilon(1e-12));
    // Monotone decreasing in |t|.
    CHECK(student_t_two_tailed_p(1.0, 5) > student_t_two_tailed_p(2.0, 5));
}

TEST_CASE("assign_folds: twenty items across ten folds give sizes of two") {
    const auto folds = assign_folds(20, 10, 123);
    REQUIRE(folds.size() == 20);
    std::map<int, int> sizes;
    for (int f : folds) {
        CHECK(f >= 0);
        CHECK(f < 10);
        ++sizes[f];
    }
    REQUIRE(sizes.size() == 10);
    for (const auto& [fold, size] : sizes) {
        CHECK(size == 2);
    }
}

TEST_CASE("assign_folds: sizes differ by at most one when uneven") {
    const auto folds = assign_folds(25, 10, 7);
    std::map<int, int> sizes;
    for (int f : folds) ++sizes[f];
    for (const auto& [fold, size] : sizes) {
        CHECK(size >= 2);
        CHECK(size <= 3);
    }
}

TEST_CASE("assign_folds: deterministic per seed, different across seeds") {
    const auto a = assign_folds(40, 10, 99);
    const auto b = assign_folds(40, 10, 99);
    CHECK(a == b);
    const auto c = assign_folds(40, 10, 100);
    CHECK(a != c);
}

namespace {

MetricRow row_of(std::string user, std::string query, Domain domain, double ndcg, double p1) {
    MetricRow row;
    row.user = std::move(user);
    row.query_id = std::move(query);
    row.domain = domain;
    row.values = {{"ndcg20", ndcg}, {"p1", p1}};
    return row;
}

MetricReport small_report(std::string name, const std::vector<double>& ndcgs) {
    MetricReport report;
    report.name = std::move(name);
    report.metric_names = {"ndcg20", "p1"};
    const Domain domains[] = {Domain::books, Domain::travel, Domain::food};
    for (std::size_t i = 0; i < ndcgs.size(); ++i) {
        report.rows.push_back(row_of("u" + std::to_string(i % 2), "q" + std::to_string(i),
                                     domains[i % 3], ndcgs[i], i % 2 == 0 ? 1.0 : 0.0));
    }
    report.finalize();
    return report;
}

} // namespace

TEST_CASE("report: means are the arithmetic mean of the rows") {
    const auto report = small_report("test", {0.2, 0.4, 0.9});
    CHECK(report.means.at("ndcg20") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(report.means.at("p1") == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("report: rows sort by user then query id") {
    MetricReport report;
    report.metric_names = {"m"};
    MetricRow r1;
    r1.user = "u2";
    r1.query_id = "q1";
    r1.values["m"] = 1.0;
    MetricRow r2;
    r2.user = "u1";
    r2.query_id = "q2";
    r2.values["m"] = 2.0;
    MetricRow r3;
    r3.user = "u1";
    r3.query_id = "q1";
    r3.values["m"] = 3.0;
    report.rows = {r1, r2, r3};
    report.finalize();
    CHECK(report.rows[0].user == "u1");
    CHECK(report.rows[0].query_id == "q1");
    CHECK(report.rows[1].user == "u1");
    CHECK(report.rows[1].query_id == "q2");
    CHECK(report.rows[2].user == "u2");
}

TEST_CASE("report: per-domain means aggregate the matching rows only") {
    const auto report = small_report("test", {0.2, 0.4, 0.9, 0.5});
    // Rows 0 and 3 are books, row 1 travel, row 2 food.
    CHECK(report.domain_means.at(Domain::books).at("ndcg20") ==
          doctest::Approx(0.35).epsilon(1e-12));
    CHECK(report.domain_means.at(Domain::travel).at("ndcg20") ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(report.domain_means.at(Domain::food).at("ndcg20") ==
          doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("report: significance against a baseline uses the paired test") {
    auto a = small_report("candidate", {0.9, 0.8, 0.7, 0.95, 0.85, 0.75});
    const auto b = small_report("baseline", {0.5, 0.45, 0.4, 0.52, 0.47, 0.42});
    a.compare_to(b);
    REQUIRE(a.significance.count("ndcg20") == 1);
    const auto& entry = a.significance.at("ndcg20");
    CHECK(entry.pairs == 6);
    CHECK(entry.t > 0.0);
    CHECK(entry.p < 0.05);
    CHECK(entry.significant);
    CHECK(a.baseline_name == "baseline");

    // p1 columns are identical between the two reports.
    CHECK(a.significance.at("p1").degenerate);
    CHECK_FALSE(a.significance.at("p1").significant);
}

TEST_CASE("report: text rendering is deterministic and carries the metrics") {
    const auto report = small_report("render-check", {0.25, 0.75});
    const auto text = report.to_text();
    CHECK(text == report.to_text());
    CHECK(testutil::contains(text, "render-check"));
    CHECK(testutil::contains(text, "ndcg20"));
    CHECK(testutil::contains(text, "0.500000"));
    CHECK(testutil::contains(text, "means"));
}

TEST_CASE("report: jsonl round-trip preserves rows, name, and means") {
    const auto report = small_report("roundtrip", {0.2, 0.4, 0.9, 0.5, 0.65});
    const auto parsed = report_from_jsonl(report.to_jsonl());
    CHECK(parsed.name == report.name);
    CHECK(parsed.metric_names == report.metric_names);
    REQUIRE(parsed.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        CHECK(parsed.rows[i].user == report.rows[i].user);
        CHECK(parsed.rows[i].query_id == report.rows[i].query_id);
        CHECK(parsed.rows[i].domain == report.rows[i].domain);
        for (const auto& [metric, value] : report.rows[i].values) {
            CHECK(parsed.rows[i].values.at(metric) == value);
        }
    }
    for (const auto& [metric, value] : report.means) {
        CHECK(parsed.means.at(metric) == doctest::Approx(value).epsilon(1e-12));
    }
}

TEST_CASE("report: malformed jsonl is a data error with the line number") {
    const auto message = testutil::message_of<DataError>(
        [] { report_from_jsonl("{\"type\": \"report\", \"name\": \"x\"}\nnot json\n"); });
    CHECK(testutil::contains(message, "2"));
}
