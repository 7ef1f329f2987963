// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include <doctest.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "chatrank/corpus.hpp"
#include "chatrank/embeddings.hpp"
#include "chatrank/errors.hpp"
#include "chatrank/rankers.hpp"
#include "chatrank/text.hpp"

using namespace chatrank;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double x : values) v[i++] = x;
    return v;
}

TokenizedDoc doc_of(std::string id, std::vector<std::string> tokens) {
    return TokenizedDoc::from_tokens(std::move(id), std::move(tokens));
}

BackgroundModel bg_of(std::map<std::string, double> probs, double floor = 1e-6) {
    BackgroundModel bg;
    bg.probabilities = std::move(probs);
    bg.mass_default = floor;
    return bg;
}

QueryModel query_of(std::string text) {
    Tokenizer t{std::set<std::string>{}};
    return build_query_model("q", Domain::books, text, t);
}

UserModel user_of(std::map<std::string, double> counts) {
    UserModel u;
    u.user = "u1";
    u.term_counts = std::move(counts);
    u.renormalize();
    return u;
}

// Brute-force Eq.-style oracle: one KL summand per model term.
double lm_oracle(const TermProbs& model, const TokenizedDoc& doc, double mu,
                 const BackgroundModel& bg,
                 const std::map<std::string, double>* spy = nullptr) {
    double sum = 0.0;
    for (const auto& [w, p] : model) {
        const double smoothed = (static_cast<double>(doc.tf(w)) + mu * bg.prob(w)) /
                                (static_cast<double>(doc.length()) + mu);
        double weight = 1.0;
        if (spy != nullptr) {
            auto it = spy->find(w);
            weight = it == spy->end() ? 1.0 : it->second;
        }
        sum += weight * p * std::log(p / smoothed);
    }
    return sum;
}

} // namespace

TEST_CASE("build_query_model: maximum-likelihood probabilities over query tokens") {
    const auto q = query_of("red red wine");
    CHECK(q.term_probs.at("red") == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(q.term_probs.at("wine") == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    double sum = 0.0;
    for (const auto& [term, p] : q.term_probs) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("score_lm: single-term query absent from the document, one summand") {
    const auto q = query_of("wine");
    const auto d = doc_of("d1", {"grape", "barrel"});
    const auto bg = bg_of({{"wine", 0.01}, {"grape", 0.5}, {"barrel", 0.49}});

    const double mu = 5.0;
    const double expected = -std::log(1.0 / ((0.0 + mu * 0.01) / (2.0 + mu)));
    CHECK(score_lm(q, nullptr, d, 1.0, mu, bg) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("score_lm: two-term query against a ten-token document") {
    const auto q = query_of("red wine");
    const auto d = doc_of("d1", {"red", "red", "red", "grape", "grape", "barrel", "barrel",
                                 "barrel", "oak", "oak"});
    const auto bg = bg_of({{"red", 0.05}, {"wine", 0.02}, {"grape", 0.3}, {"barrel", 0.3},
                           {"oak", 0.33}});
    const double mu = 10.0;

    // Hand computation: p(red)=p(wine)=0.5, |d|=10.
    const double s_red = 0.5 * std::log(0.5 / ((3.0 + 10.0 * 0.05) / 20.0));
    const double s_wine = 0.5 * std::log(0.5 / ((0.0 + 10.0 * 0.02) / 20.0));
    const double expected = -(s_red + s_wine);
    CHECK(score_lm(q, nullptr, d, 1.0, mu, bg) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("score_lm: lambda 0 ignores the query entirely") {
    const auto d = doc_of("d1", {"hiking", "trail"});
    const auto bg = bg_of({{"hiking", 0.2}, {"trail", 0.2}, {"love", 0.1}});
    const auto u = user_of({{"love", 1.0}, {"hiking", 1.0}});

    const double a = score_lm(query_of("alpha beta"), &u, d, 0.0, 7.0, bg);
    const double b = score_lm(query_of("totally different query"), &u, d, 0.0, 7.0, bg);
    CHECK(a == b);
}

TEST_CASE("score_lm: mixed lambda matches the brute-force two-sum oracle") {
    const auto q = query_of("red wine");
    const auto u = user_of({{"hiking", 3.0}, {"red", 1.0}});
    const auto d = doc_of("d1", {"red", "hiking", "barrel", "red"});
    const auto bg = bg_of({{"red", 0.1}, {"wine", 0.05}, {"hiking", 0.2}, {"barrel", 0.3}});

    for (const double lambda : {0.0, 0.3, 0.5, 1.0}) {
        const double expected = -(lambda * lm_oracle(q.term_probs, d, 6.0, bg) +
                                  (1.0 - lambda) * lm_oracle(u.term_probs, d, 6.0, bg));
        CHECK(score_lm(q, &u, d, lambda, 6.0, bg) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("score_lm: spy weights multiply individual summands") {
    const auto q = query_of("red wine");
    const auto d = doc_of("d1", {"red", "barrel"});
    const auto bg = bg_of({{"red", 0.1}, {"wine", 0.05}, {"barrel", 0.5}});
    SpyWeights spy;
    spy.weights = {{"red", 2.0}, {"wine", 0.0}};

    const std::map<std::string, double> spy_map = {{"red", 2.0}, {"wine", 0.0}};
    const double expected = -lm_oracle(q.term_probs, d, 4.0, bg, &spy_map);
    CHECK(score_lm(q, nullptr, d, 1.0, 4.0, bg, &spy) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("score_lm: all-ones spy weights equal the spy-free score bit for bit") {
    const auto q = query_of("red wine barrel");
    const auto u = user_of({{"hiking", 2.0}, {"red", 1.0}});
    const auto d = doc_of("d1", {"red", "hiking", "barrel"});
    const auto bg = bg_of({{"red", 0.1}, {"wine", 0.05}, {"hiking", 0.2}, {"barrel", 0.3}});
    const auto ones = SpyWeights::all_ones(Domain::books);

    CHECK(score_lm(q, &u, d, 0.5, 3.0, bg, &ones) == score_lm(q, &u, d, 0.5, 3.0, bg, nullptr));
}

TEST_CASE("score_lm: argument validation") {
    const auto q = query_of("red");
    const auto d = doc_of("d1", {"red"});
    const auto bg = bg_of({{"red", 0.5}});
    CHECK_THROWS_AS(score_lm(q, nullptr, d, 1.2, 5.0, bg), UsageError);
    CHECK_THROWS_AS(score_lm(q, nullptr, d, -0.1, 5.0, bg), UsageError);
    CHECK_THROWS_AS(score_lm(q, nullptr, d, 1.0, 0.0, bg), UsageError);
    CHECK_THROWS_AS(score_lm(q, nullptr, d, 0.5, 5.0, bg), UsageError);
}

TEST_CASE("score_lm_embed: an all-orthogonal store reduces to the plain scorer") {
    const auto q = query_of("red wine");
    const auto d = doc_of("d1", {"red", "grape", "oak"});
    const auto bg = bg_of({{"red", 0.1}, {"wine", 0.05}, {"grape", 0.4}, {"oak", 0.4}});

    std::map<std::string, Eigen::VectorXd> vectors;
    vectors["red"] = vec({1.0, 0.0, 0.0, 0.0, 0.0});
    vectors["wine"] = vec({0.0, 1.0, 0.0, 0.0, 0.0});
    vectors["grape"] = vec({0.0, 0.0, 1.0, 0.0, 0.0});
    vectors["oak"] = vec({0.0, 0.0, 0.0, 1.0, 0.0});
    const EmbeddingStore store(5, std::move(vectors));

    for (const double tau_sim : {0.1, 0.5, 0.9}) {
        CHECK(score_lm_embed(q, nullptr, d, 1.0, 8.0, bg, nullptr, store, tau_sim) ==
              score_lm(q, nullptr, d, 1.0, 8.0, bg, nullptr));
    }
}

TEST_CASE("score_lm_embed: a threshold above one admits only exact matches") {
    const auto q = query_of("red wine");
    const auto d = doc_of("d1", {"red", "crimson", "oak"});
    const auto bg = bg_of({{"red", 0.1}, {"wine", 0.05}, {"crimson", 0.3}, {"oak", 0.3}});

    std::map<std::string, Eigen::VectorXd> vectors;
    vectors["red"] = vec({1.0, 0.0});
    vectors["crimson"] = vec({0.8, 0.6});
    vectors["wine"] = vec({0.6, 0.8});
    const EmbeddingStore store(2, std::move(vectors));

    CHECK(score_lm_embed(q, nullptr, d, 1.0, 8.0, bg, nullptr, store, 1.0000001) ==
          score_lm(q, nullptr, d, 1.0, 8.0, bg, nullptr));
}

TEST_CASE("score_lm_embed: a neighbor at cosine 0.8 expands the term frequency") {
    const auto q = query_of("red");
    const auto d = doc_of("d1", {"crimson", "crimson", "blue"});
    const auto bg = bg_of({{"red", 0.04}, {"crimson", 0.3}, {"blue", 0.3}});

    std::map<std::string, Eigen::VectorXd> vectors;
    vectors["red"] = vec({1.0, 0.0});
    vectors["crimson"] = vec({0.8, 0.6}); // cosine to red exactly 0.8
    vectors["blue"] = vec({0.0, 1.0});
    const EmbeddingStore store(2, std::move(vectors));

    const double mu = 5.0;
    // Expanded tf(red) = 0 + 0.8 * 2; blue falls below the 0.5 threshold.
    const double expanded_tf = 0.8 * 2.0;
    const double smoothed = (expanded_tf + mu * 0.04) / (3.0 + mu);
    const double expected = -std::log(1.0 / smoothed);
    CHECK(score_lm_embed(q, nullptr, d, 1.0, mu, bg, nullptr, store, 0.5) ==
          doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("score_bm25: terms missing from the document contribute nothing") {
    CorpusStats stats;
    stats.doc_count = 3;
    stats.total_tokens = 9;
    stats.document_frequency = {{"red", 2}, {"wine", 1}};
    stats.collection_frequency = {{"red", 4}, {"wine", 2}};

    const auto d = doc_of("d1", {"red", "red", "oak"});
    const std::vector<std::string> q = {"wine"};
    CHECK(score_bm25(q, nullptr, d, stats) == 0.0);
}

TEST_CASE("score_bm25: document at average length has normalizer k1") {
    Tokenizer t{std::set<std::string>{}};
    std::vector<Document> docs;
    for (int i = 0; i < 3; ++i) {
        Document doc;
        doc.id = "d" + std::to_string(i);
        doc.domain = Domain::books;
        doc.title = i == 0 ? "red" : "oak";
        doc.body = i == 0 ? "red wine oak grape" : "oak grape barrel cork";
        docs.push_back(doc);
    }
    const auto result = ingest_documents(docs, t);
    REQUIRE(result.stats.avg_doc_len() == 5.0);
    REQUIRE(result.tokenized[0].length() == 5);

    const std::vector<std::string> q = {"red"};
    const double tf = 2.0;
    const double df = 1.0;
    const double idf = std::log((3.0 - df + 0.5) / (df + 0.5) + 1.0);
    const Bm25Params params;
    const double expected = idf * tf * (params.k1 + 1.0) / (tf + params.k1);
    CHECK(score_bm25(q, nullptr, result.tokenized[0], result.stats) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("score_bm25: three-document fixture matches the scalar oracle") {
    Tokenizer t{std::set<std::string>{}};
    std::vector<Document> docs;
    Document d1;
    d1.id = "d1";
    d1.title = "red wine";
    d1.body = "red grape barrel";
    Document d2;
    d2.id = "d2";
    d2.title = "oak barrel";
    d2.body = "barrel cellar";
    Document d3;
    d3.id = "d3";
    d3.title = "wine cellar";
    d3.body = "wine wine tour";
    docs = {d1, d2, d3};
    const auto result = ingest_documents(docs, t);
    const auto& stats = result.stats;

    const std::vector<std::string> q = {"red", "wine"};
    for (const auto& doc : result.tokenized) {
        double expected = 0.0;
        for (const std::string term : {"red", "wine"}) {
            const double tf = static_cast<double>(doc.tf(term));
            if (tf == 0.0) continue;
            const double df = static_cast<double>(stats.df(term));
            const double n = static_cast<double>(stats.doc_count);
            const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
            const double norm =
                1.5 * (1.0 - 0.75 +
                       0.75 * static_cast<double>(doc.length()) / stats.avg_doc_len());
            expected += idf * tf * 2.5 / (tf + norm);
        }
        CHECK(score_bm25(q, nullptr, doc, stats) == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("score_bm25: the user model joins by vocabulary union") {
    CorpusStats stats;
    stats.doc_count = 4;
    stats.total_tokens = 20;
    stats.document_frequency = {{"red", 2}, {"cellar", 1}};
    stats.collection_frequency = {{"red", 5}, {"cellar", 3}};

    const auto d = doc_of("d1", {"cellar", "cellar", "oak", "grape", "vine"});
    const std::vector<std::string> q = {"red"};
    const auto u = user_of({{"cellar", 2.0}});

    CHECK(score_bm25(q, nullptr, d, stats) == 0.0);
    const double with_user = score_bm25(q, &u, d, stats);
    CHECK(with_user > 0.0);

    // Union means the user term scores exactly as if it were a query term.
    const std::vector<std::string> q_union = {"red", "cellar"};
    CHECK(with_user == score_bm25(q_union, nullptr, d, stats));
}

TEST_CASE("score_bm25: all-ones spy weights equal the spy-free score bit for bit") {
    CorpusStats stats;
    stats.doc_count = 2;
    stats.total_tokens = 8;
    stats.document_frequency = {{"red", 1}, {"oak", 2}};
    stats.collection_frequency = {{"red", 3}, {"oak", 5}};
    const auto d = doc_of("d1", {"red", "oak", "oak", "grape"});
    const std::vector<std::string> q = {"red", "oak"};
    const auto ones = SpyWeights::all_ones(Domain::books);
    CHECK(score_bm25(q, nullptr, d, stats, {}, &ones) ==
          score_bm25(q, nullptr, d, stats, {}, nullptr));
}

TEST_CASE("score_bm25: zero spy weight removes a term's contribution") {
    CorpusStats stats;
    stats.doc_count = 2;
    stats.total_tokens = 8;
    stats.document_frequency = {{"red", 1}, {"oak", 2}};
    stats.collection_frequency = {{"red", 3}, {"oak", 5}};
    const auto d = doc_of("d1", {"red", "oak"});
    SpyWeights spy;
    spy.weights = {{"oak", 0.0}};

    const std::vector<std::string> q = {"red", "oak"};
    const std::vector<std::string> q_red = {"red"};
    CHECK(score_bm25(q, nullptr, d, stats, {}, &spy) ==
          doctest::Approx(score_bm25(q_red, nullptr, d, stats)).epsilon(1e-12));
}

TEST_CASE("score_bm25: raising a query term's tf strictly raises the score") {
    Tokenizer t{std::set<std::string>{}};
    std::vector<Document> docs;
    Document filler;
    filler.id = "filler";
    filler.title = "oak";
    filler.body = "grape barrel cellar";
    Document base;
    base.id = "base";
    base.title = "red";
    base.body = "oak oak grape";
    docs = {filler, base};
    const auto result = ingest_documents(docs, t);

    // Fixed |d|: swap non-query tokens for the query term one at a time.
    const std::vector<std::string> q = {"red"};
    double prev = score_bm25(q, nullptr, result.tokenized[1], result.stats);
    std::vector<std::string> tokens = result.tokenized[1].tokens;
    for (std::size_t i = 0; i < 3; ++i) {
        tokens[i + 1] = "red";
        const auto swapped = TokenizedDoc::from_tokens("base", tokens);
        const double next = score_bm25(q, nullptr, swapped, result.stats);
        CHECK(next > prev);
        prev = next;
    }
}

TEST_CASE("score_bm25: empty statistics are rejected") {
    CorpusStats empty;
    const auto d = doc_of("d1", {"red"});
    const std::vector<std::string> q = {"red"};
    CHECK_THROWS_AS(score_bm25(q, nullptr, d, empty), DataError);
}

namespace {

EmbeddingStore knrm_store() {
    std::map<std::string, Eigen::VectorXd> vectors;
    vectors["q1"] = vec({1.0, 0.0});
    vectors["q2"] = vec({0.0, 1.0});
    vectors["d1"] = vec({1.0, 0.0});
    vectors["d2"] = vec({0.6, 0.8});
    return EmbeddingStore(2, std::move(vectors));
}

KnrmModel one_kernel_model(double w0, double bias) {
    KnrmModel model;
    model.kernels = {{1.0, 0.1}};
    model.weights = vec({w0});
    model.bias = bias;
    return model;
}

} // namespace

TEST_CASE("knrm: default bank has the exact-match kernel plus ten soft kernels") {
    const auto model = KnrmModel::default_bank(42);
    REQUIRE(model.kernels.size() == 11);
    CHECK(model.kernels[0].mu == 1.0);
    CHECK(model.kernels[0].sigma == 1e-3);
    for (int i = 0; i < 10; ++i) {
        CHECK(model.kernels[i + 1].mu == doctest::Approx(0.9 - 0.2 * i).epsilon(1e-12));
        CHECK(model.kernels[i + 1].sigma == 0.1);
    }
    REQUIRE(model.weights.size() == 11);
    for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
        CHECK(std::fabs(model.weights[i]) <= 0.05);
    }
    CHECK((KnrmModel::default_bank(42).weights - model.weights).norm() == 0.0);
    CHECK((KnrmModel::default_bank(43).weights - model.weights).norm() != 0.0);
}

TEST_CASE("knrm_score: zero weights give the bias for any input") {
    auto model = KnrmModel::default_bank(1);
    model.weights.setZero();
    model.bias = 0.25;
    const auto store = knrm_store();
    const std::vector<std::string> q = {"q1", "q2"};
    const std::vector<std::string> d = {"d1", "d2"};
    CHECK(knrm_score(model, q, d, store) == 0.25);
    const std::vector<std::string> unknown = {"zzz"};
    CHECK(knrm_score(model, q, unknown, store) == 0.25);
}

TEST_CASE("knrm_score: empty query or document degenerates to the bias") {
    const auto model = one_kernel_model(0.7, 0.125);
    const auto store = knrm_store();
    const std::vector<std::string> q = {"q1"};
    const std::vector<std::string> d = {"d1"};
    CHECK(knrm_score(model, {}, d, store) == 0.125);
    CHECK(knrm_score(model, q, {}, store) == 0.125);
}

TEST_CASE("knrm_score: two-by-two single-kernel hand oracle") {
    const auto model = one_kernel_model(0.7, 0.1);
    const auto store = knrm_store();
    const std::vector<std::string> q = {"q1", "q2"};
    const std::vector<std::string> d = {"d1", "d2"};

    // M = [[1, 0.6], [0, 0.8]]; kernel mu=1 sigma=0.1.
    const double denom = 2.0 * 0.1 * 0.1;
    const double k1 = std::exp(-(1.0 - 1.0) * (1.0 - 1.0) / denom) +
                      std::exp(-(0.6 - 1.0) * (0.6 - 1.0) / denom);
    const double k2 = std::exp(-(0.0 - 1.0) * (0.0 - 1.0) / denom) +
                      std::exp(-(0.8 - 1.0) * (0.8 - 1.0) / denom);
    const double phi = std::log(k1 + 1e-10) + std::log(k2 + 1e-10);
    const double expected = 0.7 * phi + 0.1;
    CHECK(knrm_score(model, q, d, store) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("knrm_score: permuting document terms never changes the score") {
    const auto model = KnrmModel::default_bank(5);
    const auto store = knrm_store();
    const std::vector<std::string> q = {"q1", "q2"};
    std::vector<std::string> d = {"d1", "d2", "q1", "d2", "zzz"};
    const double reference = knrm_score(model, q, d, store);

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::shuffle(d.begin(), d.end(), rng);
        CHECK(knrm_score(model, q, d, store) == reference);
    }
}

TEST_CASE("knrm_features: additive over query terms' kernel rows") {
    const auto model = one_kernel_model(1.0, 0.0);
    const auto store = knrm_store();
    const std::vector<std::string> d = {"d1", "d2"};
    const std::vector<std::string> q1 = {"q1"};
    const std::vector<std::string> q2 = {"q2"};
    const std::vector<std::string> both = {"q1", "q2"};
    const auto f1 = knrm_features(model, q1, d, store);
    const auto f2 = knrm_features(model, q2, d, store);
    const auto f = knrm_features(model, both, d, store);
    CHECK((f - (f1 + f2)).norm() <= 1e-12);
}

TEST_CASE("knrm gradient: analytic equals central finite differences") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const int dim = 3;
    int tested = 0;

    while (tested < 120) {
        // Random small instance: vocabulary of six random vectors.
        std::map<std::string, Eigen::VectorXd> vectors;
        std::vector<std::string> vocab;
        for (int i = 0; i < 6; ++i) {
            Eigen::VectorXd v(dim);
            for (int j = 0; j < dim; ++j) v[j] = unit(rng);
            const std::string key = "w" + std::to_string(i);
            vectors[key] = v;
            vocab.push_back(key);
        }
        const EmbeddingStore store(dim, std::move(vectors));

        auto pick_terms = [&](int max_len) {
            std::vector<std::string> terms;
            const int len = 1 + static_cast<int>(rng() % max_len);
            for (int i = 0; i < len; ++i) terms.push_back(vocab[rng() % vocab.size()]);
            return terms;
        };

        auto model = KnrmModel::default_bank(rng());
        std::vector<KnrmTrainPair> pairs;
        const int n_pairs = 1 + static_cast<int>(rng() % 3);
        for (int i = 0; i < n_pairs; ++i) {
            pairs.push_back(KnrmTrainPair{pick_terms(3), pick_terms(4), pick_terms(4)});
        }

        // Skip instances near the hinge kink where the loss is not smooth.
        bool near_kink = false;
        for (const auto& pair : pairs) {
            const double margin = 1.0 - knrm_score(model, pair.q_terms, pair.d_pos, store) +
                                  knrm_score(model, pair.q_terms, pair.d_neg, store);
            near_kink = near_kink || std::fabs(margin) < 1e-3;
        }
        if (near_kink) continue;

        const Eigen::VectorXd analytic = knrm_loss_gradient(model, pairs, store);
        Eigen::VectorXd numeric(model.weights.size());
        const double h = 1e-6;
        for (Eigen::Index k = 0; k < model.weights.size(); ++k) {
            auto plus = model;
            auto minus = model;
            plus.weights[k] += h;
            minus.weights[k] -= h;
            numeric[k] = (knrm_pairwise_loss(plus, pairs, store) -
                          knrm_pairwise_loss(minus, pairs, store)) /
                         (2.0 * h);
        }
        // A degenerate draw (equal documents or no active pair) has a zero
        // gradient; finite differences then see only rounding dust, so the
        // relative form only applies above an absolute floor.
        const double abs_err = (analytic - numeric).norm();
        const double scale = std::max({1e-8, analytic.norm(), numeric.norm()});
        CHECK((abs_err <= 1e-8 || abs_err / scale < 1e-4));
        ++tested;
    }
    CHECK(tested >= 100);
}

TEST_CASE("knrm_train: zero learning rate leaves the weights untouched") {
    const auto store = knrm_store();
    auto model = KnrmModel::default_bank(3);
    const Eigen::VectorXd before = model.weights;
    const std::vector<KnrmTrainPair> pairs = {{{"q1"}, {"d1"}, {"d2"}}};
    const auto trained = knrm_train(std::move(model), pairs, 5, 0.0, store);
    CHECK((trained.weights - before).norm() == 0.0);
}

TEST_CASE("knrm_train: a pair already separated by the margin is a no-op") {
    const auto store = knrm_store();
    auto model = one_kernel_model(100.0, 0.0);
    // phi(d_pos) - phi(d_neg) > 0 for an exact match vs an orthogonal term, so
    // a huge positive weight puts the margin far beyond one.
    const std::vector<KnrmTrainPair> pairs = {{{"q1"}, {"d1"}, {"q2"}}};
    REQUIRE(knrm_pairwise_loss(model, pairs, store) == 0.0);
    const Eigen::VectorXd before = model.weights;
    const auto trained = knrm_train(std::move(model), pairs, 3, 0.5, store);
    CHECK((trained.weights - before).norm() == 0.0);
}

TEST_CASE("knrm_train: an empty training set returns the model unchanged") {
    const auto store = knrm_store();
    auto model = KnrmModel::default_bank(4);
    const Eigen::VectorXd before = model.weights;
    const auto trained = knrm_train(std::move(model), {}, 10, 0.1, store);
    CHECK((trained.weights - before).norm() == 0.0);
}

TEST_CASE("knrm_train: loss does not increase over the first epoch on separable pairs") {
    const auto store = knrm_store();
    const auto model = KnrmModel::default_bank(7);
    const std::vector<KnrmTrainPair> pairs = {
        {{"q1"}, {"d1", "d1"}, {"q2"}},
        {{"q2"}, {"q2", "q2"}, {"d1"}},
    };
    const double before = knrm_pairwise_loss(model, pairs, store);
    const auto trained = knrm_train(model, pairs, 1, 0.01, store);
    const double after = knrm_pairwise_loss(trained, pairs, store);
    CHECK(after <= before + 1e-12);
}

TEST_CASE("knrm_train: one epoch replays the per-pair subgradient steps") {
    const auto store = knrm_store();
    const auto model = one_kernel_model(0.05, 0.0);
    const std::vector<KnrmTrainPair> pairs = {
        {{"q1"}, {"d1"}, {"d2"}},
        {{"q2"}, {"d2"}, {"d1"}},
    };
    const double lr = 0.1;

    Eigen::VectorXd w = model.weights;
    for (const auto& pair : pairs) {
        const Eigen::VectorXd phi_pos = knrm_features(model, pair.q_terms, pair.d_pos, store);
        const Eigen::VectorXd phi_neg = knrm_features(model, pair.q_terms, pair.d_neg, store);
        const double margin = 1.0 - w.dot(phi_pos - phi_neg);
        if (margin > 0.0) {
            w += lr * (phi_pos - phi_neg);
        }
    }

    const auto trained = knrm_train(model, pairs, 1, lr, store);
    CHECK((trained.weights - w).norm() <= 1e-12);
}

TEST_CASE("knrm model: save and load round-trip exactly") {
    auto model = KnrmModel::default_bank(1234);
    model.bias = 0.375;
    const auto path = std::filesystem::temp_directory_path() / "knrm_roundtrip.model";
    model.save(path);
    const auto loaded = KnrmModel::load(path);
    REQUIRE(loaded.kernels.size() == model.kernels.size());
    for (std::size_t i = 0; i < model.kernels.size(); ++i) {
        CHECK(loaded.kernels[i].mu == model.kernels[i].mu);
        CHECK(loaded.kernels[i].sigma == model.kernels[i].sigma);
    }
    CHECK((loaded.weights - model.weights).norm() == 0.0);
    CHECK(loaded.bias == model.bias);
    CHECK(loaded.seed == model.seed);
    CHECK(loaded.max_query_terms == model.max_query_terms);
    CHECK(loaded.max_doc_terms == model.max_doc_terms);
    std::filesystem::remove(path);
}

TEST_CASE("rerank: a constant scorer orders the pool by document id") {
    const auto d1 = doc_of("delta", {"a"});
    const auto d2 = doc_of("alpha", {"b"});
    const auto d3 = doc_of("charlie", {"c"});
    const std::vector<const TokenizedDoc*> pool = {&d1, &d2, &d3};
    const auto ranked = rerank(pool, [](const TokenizedDoc&) { return 1.0; });
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].doc_id == "alpha");
    CHECK(ranked[1].doc_id == "charlie");
    CHECK(ranked[2].doc_id == "delta");
    CHECK(ranked[0].rank == 1);
    CHECK(ranked[1].rank == 2);
    CHECK(ranked[2].rank == 3);
}

TEST_CASE("rerank: a single document lands at rank one") {
    const auto d1 = doc_of("only", {"a"});
    const std::vector<const TokenizedDoc*> pool = {&d1};
    const auto ranked = rerank(pool, [](const TokenizedDoc&) { return -3.0; });
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].doc_id == "only");
    CHECK(ranked[0].rank == 1);
    CHECK(ranked[0].score == -3.0);
}

TEST_CASE("rerank: output ids are a permutation of the pool, scores descend") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TokenizedDoc> docs;
        const int n = 1 + static_cast<int>(rng() % 8);
        for (int i = 0; i < n; ++i) {
            docs.push_back(doc_of("doc" + std::to_string(i), {"x"}));
        }
        std::vector<const TokenizedDoc*> pool;
        for (const auto& d : docs) pool.push_back(&d);

        std::map<std::string, double> scores;
        for (const auto& d : docs) scores[d.doc_id] = static_cast<double>(rng() % 5);
        const auto ranked =
            rerank(pool, [&](const TokenizedDoc& d) { return scores.at(d.doc_id); });

        REQUIRE(ranked.size() == docs.size());
        std::set<std::string> seen;
        for (const auto& r : ranked) seen.insert(r.doc_id);
        CHECK(seen.size() == docs.size());
        for (std::size_t i = 1; i < ranked.size(); ++i) {
            CHECK(ranked[i - 1].score >= ranked[i].score);
            if (ranked[i - 1].score == ranked[i].score) {
                CHECK(ranked[i - 1].doc_id < ranked[i].doc_id);
            }
            CHECK(ranked[i].rank == static_cast<int>(i) + 1);
        }
    }
}

TEST_CASE("rerank: five-document pool under BM25 matches a score-then-sort oracle") {
    Tokenizer t{std::set<std::string>{}};
    std::vector<Document> docs;
    const std::vector<std::string> bodies = {
        "red wine grape", "oak barrel cellar", "red red wine", "grape vine", "wine tour red"};
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        Document d;
        d.id = "d" + std::to_string(i);
        d.title = "doc";
        d.body = bodies[i];
        docs.push_back(d);
    }
    const auto result = ingest_documents(docs, t);

    const std::vector<std::string> q = {"red", "wine"};
    std::vector<const TokenizedDoc*> pool;
    for (const auto& d : result.tokenized) pool.push_back(&d);
    const auto ranked = rerank(pool, [&](const TokenizedDoc& d) {
        return score_bm25(q, nullptr, d, result.stats);
    });

    std::vector<std::pair<double, std::string>> oracle;
    for (const auto& d : result.tokenized) {
        oracle.emplace_back(score_bm25(q, nullptr, d, result.stats), d.doc_id);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        CHECK(ranked[i].doc_id == oracle[i].second);
    }
}

TEST_CASE("rerank: an empty pool is rejected") {
    CHECK_THROWS_AS(rerank({}, [](const TokenizedDoc&) { return 0.0; }), UsageError);
}
