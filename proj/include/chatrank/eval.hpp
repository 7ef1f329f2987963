// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "chatrank/corpus.hpp"
#include "chatrank/rankers.hpp"

namespace chatrank {

// The two judged result sets per query: 20 uniform samples from the top 1000,
// and the engine's original top 10.
enum class PoolTag { random20, top10 };

PoolTag pool_tag_from_string(std::string_view s);
std::string to_string(PoolTag tag);

struct Judgment {
    std::string user;
    std::string query_id;
    std::string doc_id;
    int grade = 0; // 0 uninterested, 1 mildly interested, 2 strongly interested
    PoolTag pool_tag = PoolTag::random20;
};

/**
 * NDCG@k with exponential gain (2^grade - 1) and log2(rank + 1) discount.
 * The ideal ordering ranks the same documents by descending grade. An
 * all-zero ideal (IDCG = 0) yields 0. Every ranked document must appear in
 * `grades`; a missing one raises an error naming it.
 */
double ndcg_at_k(std::span<const ScoredDoc> ranking, const std::map<std::string, int>& grades,
                 int k);

// 1 when the rank-1 document has grade 1 or 2, else 0.
int precision_at_1(std::span<const ScoredDoc> ranking, const std::map<std::string, int>& grades);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    // Zero-variance differences: nonzero mean gives p = 0, all-identical
    // pairs give t = 0, p = 1. Both are flagged.
    bool degenerate = false;
};

/**
 * Two-tailed paired t-test. t = mean(a-b) / (sd(a-b) / sqrt(n)) with the
 * sample standard deviation; p from the Student-t distribution with n-1
 * degrees of freedom. Requires |a| == |b| >= 2.
 */
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

// Two-tailed tail mass of the Student-t distribution, integrated numerically
// to an absolute tolerance of 1e-9.
double student_t_two_tailed_p(double t, int df);

/**
 * Seeded fold assignment: item i (in the caller's canonical order) goes to
 * fold result[i]. Fold sizes differ by at most one. Deterministic given the
 * seed.
 */
std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed);

struct MetricRow {
    std::string user;
    std::string query_id;
    Domain domain = Domain::books;
    std::map<std::string, double> values;
};

struct SignificanceEntry {
    double t = 0.0;
    double p = 1.0;
    bool significant = false;
    bool degenerate = false;
    std::size_t pairs = 0;
};

/**
 * Per-(user, query) metric values with configuration-level means, per-domain
 * means, and optional significance flags against a named baseline. Rows are
 * kept sorted by (user, query_id) so aggregation order is fixed.
 */
struct MetricReport {
    std::string name;
    std::vector<std::string> metric_names;
    std::vector<MetricRow> rows;
    std::map<std::string, double> means;
    std::map<Domain, std::map<std::string, double>> domain_means;
    std::string baseline_name;
    std::map<std::string, SignificanceEntry> significance;

    // Sorts rows and recomputes means; call after the last row is added.
    void finalize();

    // Paired t-tests per metric against a finalized baseline report, pairing
    // rows by (user, query_id). Marks significance at the given alpha.
    void compare_to(const MetricReport& baseline, double alpha = 0.05);

    std::string to_text() const;
    std::string to_jsonl() const;
};

// Rebuilds a report (name, metrics, per-pair rows) from its line-delimited
// form; aggregate lines are recomputed by finalize.
MetricReport report_from_jsonl(const std::string& content);

} // namespace chatrank
