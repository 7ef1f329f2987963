// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "chatrank/errors.hpp"

namespace chatrank {

namespace {

double gain(int grade) {
    return std::pow(2.0, static_cast<double>(grade)) - 1.0;
}

double discount(std::size_t rank_1_based) {
    return std::log2(static_cast<double>(rank_1_based) + 1.0);
}

double dcg_at_k(std::span<const int> grades_in_rank_order, int k) {
    const std::size_t limit = std::min(grades_in_rank_order.size(), static_cast<std::size_t>(k));
    double dcg = 0.0;
    for (std::size_t i = 0; i < limit; ++i) {
        dcg += gain(grades_in_rank_order[i]) / discount(i + 1);
    }
    return dcg;
}

int grade_of(const std::map<std::string, int>& grades, const std::string& doc_id) {
    auto it = grades.find(doc_id);
    if (it == grades.end()) {
        throw DataError("ranked document has no judgment: " + doc_id);
    }
    return it->second;
}

std::string fmt_fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, x);
    return buf;
}

// Student-t density with df degrees of freedom.
double t_density(double x, int df) {
    const double v = static_cast<double>(df);
    const double log_norm = std::lgamma((v + 1.0) / 2.0) - std::lgamma(v / 2.0) -
                            0.5 * std::log(v * M_PI);
    return std::exp(log_norm - ((v + 1.0) / 2.0) * std::log1p(x * x / v));
}

double simpson(double fa, double fm, double fb, double a, double b) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(int df, double a, double m, double b, double fa, double fm, double fb,
                        double whole, double tol, int depth) {
    const double lm = (a + m) / 2.0;
    const double rm = (m + b) / 2.0;
    const double flm = t_density(lm, df);
    const double frm = t_density(rm, df);
    const double left = simpson(fa, flm, fm, a, m);
    const double right = simpson(fm, frm, fb, m, b);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
        return left + right + (left + right - whole) / 15.0;
    }
    return adaptive_simpson(df, a, lm, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
           adaptive_simpson(df, m, rm, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

// Left-padded / right-padded cell helpers for the aligned text table.
std::string pad_right(const std::string& s, std::size_t width) {
    return s + std::string(width > s.size() ? width - s.size() : 0, ' ');
}

std::string render_table(const std::vector<std::vector<std::string>>& cells) {
    std::vector<std::size_t> widths;
    for (const auto& row : cells) {
        if (widths.size() < row.size()) {
            widths.resize(row.size(), 0);
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::string out;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) {
                out += "  ";
            }
            out += c + 1 == row.size() ? row[c] : pad_right(row[c], widths[c]);
        }
        out += "\n";
    }
    return out;
}

} // namespace

PoolTag pool_tag_from_string(std::string_view s) {
    if (s == "random20") return PoolTag::random20;
    if (s == "top10") return PoolTag::top10;
    throw DataError("unknown pool tag: " + std::string(s));
}

std::string to_string(PoolTag tag) {
    return tag == PoolTag::random20 ? "random20" : "top10";
}

double ndcg_at_k(std::span<const ScoredDoc> ranking, const std::map<std::string, int>& grades,
                 int k) {
    if (k < 1) {
        throw UsageError("ndcg_at_k requires k >= 1");
    }
    std::vector<int> ranked_grades;
    ranked_grades.reserve(ranking.size());
    for (const auto& doc : ranking) {
        ranked_grades.push_back(grade_of(grades, doc.doc_id));
    }
    const double dcg = dcg_at_k(ranked_grades, k);
    std::vector<int> ideal = ranked_grades;
    std::sort(ideal.begin(), ideal.end(), std::greater<int>());
    const double idcg = dcg_at_k(ideal, k);
    if (idcg == 0.0) {
        return 0.0;
    }
    return dcg / idcg;
}

int precision_at_1(std::span<const ScoredDoc> ranking, const std::map<std::string, int>& grades) {
    if (ranking.empty()) {
        throw UsageError("precision_at_1 requires a non-empty ranking");
    }
    return grade_of(grades, ranking.front().doc_id) >= 1 ? 1 : 0;
}

double student_t_two_tailed_p(double t, int df) {
    if (df < 1) {
        throw UsageError("t distribution requires df >= 1");
    }
    const double a = std::abs(t);
    if (a == 0.0) {
        return 1.0;
    }
    if (std::isinf(a)) {
        return 0.0;
    }
    // Central mass on [-|t|, |t|] by symmetry; two-tailed p is the rest.
    const double m = a / 2.0;
    const double f0 = t_density(0.0, df);
    const double fm = t_density(m, df);
    const double fa = t_density(a, df);
    const double whole = simpson(f0, fm, fa, 0.0, a);
    const double half = adaptive_simpson(df, 0.0, m, a, f0, fm, fa, whole, 1e-9, 60);
    const double p = 1.0 - 2.0 * half;
    return std::clamp(p, 0.0, 1.0);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw UsageError("paired t-test requires equal-length samples");
    }
    const std::size_t n = a.size();
    if (n < 2) {
        throw UsageError("paired t-test requires at least 2 pairs");
    }
    std::vector<double> diffs(n);
    for (std::size_t i = 0; i < n; ++i) {
        diffs[i] = a[i] - b[i];
    }
    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) /
                        static_cast<double>(n);
    double ss = 0.0;
    for (double d : diffs) {
        ss += (d - mean) * (d - mean);
    }
    const double variance = ss / static_cast<double>(n - 1);
    if (variance == 0.0) {
        if (mean == 0.0) {
            return {0.0, 1.0, true};
        }
        const double inf = std::numeric_limits<double>::infinity();
        return {mean > 0.0 ? inf : -inf, 0.0, true};
    }
    const double t = mean / (std::sqrt(variance) / std::sqrt(static_cast<double>(n)));
    return {t, student_t_two_tailed_p(t, static_cast<int>(n) - 1), false};
}

std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed) {
    if (folds < 1) {
        throw UsageError("fold count must be >= 1");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Hand-rolled Fisher-Yates with rejection sampling: the permutation then
    // depends only on the seed, not on the standard library.
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::uint64_t bound = i;
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() -
            std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do {
            r = rng();
        } while (r >= limit);
        std::swap(order[i - 1], order[static_cast<std::size_t>(r % bound)]);
    }
    std::vector<int> fold(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        fold[order[j]] = static_cast<int>(j % static_cast<std::size_t>(folds));
    }
    return fold;
}

void MetricReport::finalize() {
    std::sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
        if (a.user != b.user) return a.user < b.user;
        return a.query_id < b.query_id;
    });
    means.clear();
    domain_means.clear();
    std::map<std::string, std::pair<double, std::size_t>> overall;
    std::map<Domain, std::map<std::string, std::pair<double, std::size_t>>> by_domain;
    for (const auto& row : rows) {
        for (const auto& [metric, value] : row.values) {
            auto& o = overall[metric];
            o.first += value;
            o.second += 1;
            auto& d = by_domain[row.domain][metric];
            d.first += value;
            d.second += 1;
        }
    }
    for (const auto& [metric, acc] : overall) {
        means[metric] = acc.first / static_cast<double>(acc.second);
    }
    for (const auto& [domain, metrics] : by_domain) {
        for (const auto& [metric, acc] : metrics) {
            domain_means[domain][metric] = acc.first / static_cast<double>(acc.second);
        }
    }
}

void MetricReport::compare_to(const MetricReport& baseline, double alpha) {
    baseline_name = baseline.name;
    significance.clear();
    std::map<std::pair<std::string, std::string>, const MetricRow*> baseline_rows;
    for (const auto& row : baseline.rows) {
        baseline_rows[{row.user, row.query_id}] = &row;
    }
    for (const auto& metric : metric_names) {
        std::vector<double> ours;
        std::vector<double> theirs;
        for (const auto& row : rows) {
            auto mine = row.values.find(metric);
            if (mine == row.values.end()) {
                continue;
            }
            auto other = baseline_rows.find({row.user, row.query_id});
            if (other == baseline_rows.end()) {
                continue;
            }
            auto base = other->second->values.find(metric);
            if (base == other->second->values.end()) {
                continue;
            }
            ours.push_back(mine->second);
            theirs.push_back(base->second);
        }
        SignificanceEntry entry;
        entry.pairs = ours.size();
        if (ours.size() >= 2) {
            const TTestResult result = paired_t_test(ours, theirs);
            entry.t = result.t;
            entry.p = result.p;
            entry.degenerate = result.degenerate;
            entry.significant = result.p < alpha;
        } else {
            entry.degenerate = true;
        }
        significance[metric] = entry;
    }
}

std::string MetricReport::to_text() const {
    std::string out = "report " + name + "\n\n";

    std::vector<std::vector<std::string>> table;
    std::vector<std::string> header = {"user", "query", "domain"};
    for (const auto& metric : metric_names) {
        header.push_back(metric);
    }
    table.push_back(header);
    for (const auto& row : rows) {
        std::vector<std::string> cells = {row.user, row.query_id,
                                          std::string(to_string(row.domain))};
        for (const auto& metric : metric_names) {
            auto it = row.values.find(metric);
            cells.push_back(it == row.values.end() ? "-" : fmt_fixed(it->second, 6));
        }
        table.push_back(cells);
    }
    out += render_table(table);

    out += "\ndomain means\n";
    std::vector<std::vector<std::string>> domain_table;
    for (const auto& [domain, metrics] : domain_means) {
        std::vector<std::string> cells = {std::string(to_string(domain))};
        for (const auto& metric : metric_names) {
            auto it = metrics.find(metric);
            cells.push_back(metric + "=" +
                            (it == metrics.end() ? "-" : fmt_fixed(it->second, 6)));
        }
        domain_table.push_back(cells);
    }
    out += render_table(domain_table);

    out += "\nmeans\n";
    for (const auto& metric : metric_names) {
        auto it = means.find(metric);
        out += metric + " " + (it == means.end() ? "-" : fmt_fixed(it->second, 6)) + "\n";
    }

    if (!baseline_name.empty()) {
        out += "\nsignificance vs " + baseline_name + "\n";
        for (const auto& metric : metric_names) {
            auto it = significance.find(metric);
            if (it == significance.end()) {
                continue;
            }
            const auto& e = it->second;
            out += metric + " t=" + fmt_fixed(e.t, 4) + " p=" + fmt_fixed(e.p, 6) +
                   " significant=" + (e.significant ? "yes" : "no") +
                   " pairs=" + std::to_string(e.pairs);
            if (e.degenerate) {
                out += " degenerate";
            }
            out += "\n";
        }
    }
    return out;
}

std::string MetricReport::to_jsonl() const {
    using nlohmann::json;
    std::string out;
    json head;
    head["type"] = "report";
    head["name"] = name;
    head["metrics"] = metric_names;
    out += head.dump() + "\n";
    for (const auto& row : rows) {
        json line;
        line["type"] = "pair";
        line["user"] = row.user;
        line["query_id"] = row.query_id;
        line["domain"] = to_string(row.domain);
        line["values"] = row.values;
        out += line.dump() + "\n";
    }
    for (const auto& [domain, metrics] : domain_means) {
        json line;
        line["type"] = "domain_mean";
        line["domain"] = to_string(domain);
        line["values"] = metrics;
        out += line.dump() + "\n";
    }
    json mean_line;
    mean_line["type"] = "mean";
    mean_line["values"] = means;
    out += mean_line.dump() + "\n";
    for (const auto& [metric, e] : significance) {
        json line;
        line["type"] = "significance";
        line["baseline"] = baseline_name;
        line["metric"] = metric;
        line["t"] = e.t;
        line["p"] = e.p;
        line["significant"] = e.significant;
        line["degenerate"] = e.degenerate;
        line["pairs"] = e.pairs;
        out += line.dump() + "\n";
    }
    return out;
}

MetricReport report_from_jsonl(const std::string& content) {
    using nlohmann::json;
    MetricReport report;
    std::istringstream in(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("bad report JSON at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        try {
            const std::string type = record.value("type", "");
            if (type == "report") {
                report.name = record.value("name", "");
                report.metric_names = record.value("metrics", std::vector<std::string>{});
            } else if (type == "pair") {
                MetricRow row;
                row.user = record.at("user").get<std::string>();
                row.query_id = record.at("query_id").get<std::string>();
                row.domain = domain_from_string(record.at("domain").get<std::string>());
                row.values = record.at("values").get<std::map<std::string, double>>();
                report.rows.push_back(std::move(row));
            }
        } catch (const json::exception& e) {
            throw DataError("bad report record at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        // Aggregate and significance lines are derived; finalize rebuilds them.
    }
    report.finalize();
    return report;
}

} // namespace chatrank
