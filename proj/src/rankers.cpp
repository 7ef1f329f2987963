// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/rankers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "chatrank/errors.hpp"

namespace chatrank {

namespace {

constexpr double kKnrmEpsilon = 1e-10;

double spy_of(const SpyWeights* spy, const std::string& term) {
    return spy != nullptr ? spy->weight(term) : 1.0;
}

// One KL summand against the Dirichlet-smoothed document model. Shared by
// the plain and translation-model scorers so their reduction case is
// bit-identical.
inline double kl_term(double p_model, double effective_tf, double mu_pc, double dlen_plus_mu) {
    const double smoothed = (effective_tf + mu_pc) / dlen_plus_mu;
    return p_model * std::log(p_model / smoothed);
}

double kl_sum_plain(const TermProbs& model, const TokenizedDoc& doc, double mu,
                    const BackgroundModel& background, const SpyWeights* spy) {
    const double dlen_plus_mu = static_cast<double>(doc.length()) + mu;
    double sum = 0.0;
    for (const auto& [term, p] : model) {
        const double mu_pc = mu * background.prob(term);
        sum += spy_of(spy, term) * kl_term(p, static_cast<double>(doc.tf(term)), mu_pc,
                                           dlen_plus_mu);
    }
    return sum;
}

double kl_sum_translated(const TermProbs& model, const TokenizedDoc& doc, double mu,
                         const BackgroundModel& background, const SpyWeights* spy,
                         const EmbeddingStore& store, double tau_sim) {
    const double dlen_plus_mu = static_cast<double>(doc.length()) + mu;
    double sum = 0.0;
    for (const auto& [term, p] : model) {
        // The term itself always contributes at similarity 1.
        double effective_tf = static_cast<double>(doc.tf(term));
        for (const auto& [doc_term, tf] : doc.counts) {
            if (doc_term == term) {
                continue;
            }
            auto sim = store.cosine(term, doc_term);
            if (sim.has_value() && *sim >= tau_sim) {
                effective_tf += *sim * static_cast<double>(tf);
            }
        }
        const double mu_pc = mu * background.prob(term);
        sum += spy_of(spy, term) * kl_term(p, effective_tf, mu_pc, dlen_plus_mu);
    }
    return sum;
}

void check_lm_args(const UserModel* user, double lambda, double mu) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw UsageError("lambda must lie in [0, 1]");
    }
    if (mu <= 0.0) {
        throw UsageError("Dirichlet mu must be positive");
    }
    if (lambda < 1.0 && user == nullptr) {
        throw UsageError("lambda < 1 requires a user model");
    }
}

} // namespace

QueryModel build_query_model(std::string query_id, Domain domain, std::string_view text,
                             const Tokenizer& tokenizer) {
    QueryModel model;
    model.query_id = std::move(query_id);
    model.domain = domain;
    TermCounts counts;
    std::int64_t total = 0;
    for (const auto& token : tokenizer.tokenize(text)) {
        ++counts[token];
        ++total;
    }
    for (const auto& [term, count] : counts) {
        model.term_probs[term] = static_cast<double>(count) / static_cast<double>(total);
    }
    return model;
}

double score_lm(const QueryModel& query, const UserModel* user, const TokenizedDoc& doc,
                double lambda, double mu, const BackgroundModel& background,
                const SpyWeights* spy) {
    check_lm_args(user, lambda, mu);
    double total = 0.0;
    if (lambda > 0.0) {
        total += lambda * kl_sum_plain(query.term_probs, doc, mu, background, spy);
    }
    if (lambda < 1.0) {
        total += (1.0 - lambda) * kl_sum_plain(user->term_probs, doc, mu, background, spy);
    }
    return -total;
}

double score_lm_embed(const QueryModel& query, const UserModel* user, const TokenizedDoc& doc,
                      double lambda, double mu, const BackgroundModel& background,
                      const SpyWeights* spy, const EmbeddingStore& store, double tau_sim) {
    check_lm_args(user, lambda, mu);
    double total = 0.0;
    if (lambda > 0.0) {
        total += lambda *
                 kl_sum_translated(query.term_probs, doc, mu, background, spy, store, tau_sim);
    }
    if (lambda < 1.0) {
        total += (1.0 - lambda) *
                 kl_sum_translated(user->term_probs, doc, mu, background, spy, store, tau_sim);
    }
    return -total;
}

double score_bm25(std::span<const std::string> query_terms, const UserModel* user,
                  const TokenizedDoc& doc, const CorpusStats& stats, Bm25Params params,
                  const SpyWeights* spy) {
    if (!stats.has_docs()) {
        throw DataError("BM25 requires corpus statistics with at least one document");
    }
    std::set<std::string> vocabulary(query_terms.begin(), query_terms.end());
    if (user != nullptr) {
        for (const auto& [term, count] : user->term_counts) {
            vocabulary.insert(term);
        }
    }

    const double n_docs = static_cast<double>(stats.doc_count);
    const double length_norm =
        params.k1 * (1.0 - params.b +
                     params.b * (static_cast<double>(doc.length()) / stats.avg_doc_len()));
    double score = 0.0;
    for (const auto& term : vocabulary) {
        const double tf = static_cast<double>(doc.tf(term));
        if (tf == 0.0) {
            continue;
        }
        const double df = static_cast<double>(stats.df(term));
        const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        score += spy_of(spy, term) * idf * (tf * (params.k1 + 1.0)) / (tf + length_norm);
    }
    return score;
}

KnrmModel KnrmModel::default_bank(std::uint64_t seed) {
    KnrmModel model;
    model.kernels.push_back({1.0, 1e-3});
    for (int i = 0; i < 10; ++i) {
        model.kernels.push_back({0.9 - 0.2 * i, 0.1});
    }
    model.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> init(-0.05, 0.05);
    model.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.kernels.size()));
    for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
        model.weights[i] = init(rng);
    }
    return model;
}

void KnrmModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write KNRM model file: " + path.string());
    }
    out.precision(17);
    out << "knrm-model v1\n";
    out << "seed " << seed << "\n";
    out << "max_query_terms " << max_query_terms << "\n";
    out << "max_doc_terms " << max_doc_terms << "\n";
    out << "kernels " << kernels.size() << "\n";
    for (const auto& kernel : kernels) {
        out << kernel.mu << " " << kernel.sigma << "\n";
    }
    out << "weights";
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        out << " " << weights[i];
    }
    out << "\n";
    out << "bias " << bias << "\n";
}

KnrmModel KnrmModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open KNRM model file: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "knrm-model v1") {
        throw DataError("not a KNRM model file: " + path.string());
    }
    KnrmModel model;
    std::size_t kernel_count = 0;
    std::string word;
    in >> word >> model.seed;
    in >> word >> model.max_query_terms;
    in >> word >> model.max_doc_terms;
    in >> word >> kernel_count;
    model.kernels.resize(kernel_count);
    for (auto& kernel : model.kernels) {
        in >> kernel.mu >> kernel.sigma;
    }
    in >> word;
    model.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(kernel_count));
    for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
        in >> model.weights[i];
    }
    in >> word >> model.bias;
    if (!in) {
        throw DataError("truncated KNRM model file: " + path.string());
    }
    return model;
}

Eigen::VectorXd knrm_features(const KnrmModel& model, std::span<const std::string> q_terms,
                              std::span<const std::string> d_terms,
                              const EmbeddingStore& store) {
    const auto n_kernels = static_cast<Eigen::Index>(model.kernels.size());
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(n_kernels);

    std::vector<std::string> q(q_terms.begin(),
                               q_terms.begin() + std::min<std::size_t>(q_terms.size(),
                                                                       model.max_query_terms));
    std::vector<std::string> d(d_terms.begin(),
                               d_terms.begin() + std::min<std::size_t>(d_terms.size(),
                                                                       model.max_doc_terms));
    if (q.empty() || d.empty()) {
        return phi;
    }
    // Canonical document order makes the j-sums independent of input order.
    std::sort(d.begin(), d.end());

    const auto nq = static_cast<Eigen::Index>(q.size());
    const auto nd = static_cast<Eigen::Index>(d.size());
    const int dim = store.dimension();

    Eigen::MatrixXd q_rows = Eigen::MatrixXd::Zero(nq, dim);
    for (Eigen::Index i = 0; i < nq; ++i) {
        const Eigen::VectorXd* v = store.vector(q[i]);
        if (v != nullptr && v->norm() > 0.0) {
            q_rows.row(i) = v->transpose() / v->norm();
        }
    }
    Eigen::MatrixXd d_cols = Eigen::MatrixXd::Zero(dim, nd);
    for (Eigen::Index j = 0; j < nd; ++j) {
        const Eigen::VectorXd* v = store.vector(d[j]);
        if (v != nullptr && v->norm() > 0.0) {
            d_cols.col(j) = *v / v->norm();
        }
    }

    Eigen::ArrayXXd sims =
        (q_rows * d_cols).array().max(-1.0).min(1.0);
    for (Eigen::Index k = 0; k < n_kernels; ++k) {
        const double mu = model.kernels[k].mu;
        const double sigma = model.kernels[k].sigma;
        Eigen::ArrayXd soft_tf =
            (-(sims - mu).square() / (2.0 * sigma * sigma)).exp().rowwise().sum();
        phi[k] = (soft_tf + kKnrmEpsilon).log().sum();
    }
    return phi;
}

double knrm_score(const KnrmModel& model, std::span<const std::string> q_terms,
                  std::span<const std::string> d_terms, const EmbeddingStore& store) {
    if (q_terms.empty() || d_terms.empty()) {
        return model.bias;
    }
    return model.weights.dot(knrm_features(model, q_terms, d_terms, store)) + model.bias;
}

double knrm_pairwise_loss(const KnrmModel& model, std::span<const KnrmTrainPair> pairs,
                          const EmbeddingStore& store) {
    double loss = 0.0;
    for (const auto& pair : pairs) {
        const double pos = knrm_score(model, pair.q_terms, pair.d_pos, store);
        const double neg = knrm_score(model, pair.q_terms, pair.d_neg, store);
        loss += std::max(0.0, 1.0 - pos + neg);
    }
    return loss;
}

Eigen::VectorXd knrm_loss_gradient(const KnrmModel& model, std::span<const KnrmTrainPair> pairs,
                                   const EmbeddingStore& store) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(model.weights.size());
    for (const auto& pair : pairs) {
        const Eigen::VectorXd phi_pos = knrm_features(model, pair.q_terms, pair.d_pos, store);
        const Eigen::VectorXd phi_neg = knrm_features(model, pair.q_terms, pair.d_neg, store);
        const double margin =
            1.0 - (model.weights.dot(phi_pos) + model.bias) +
            (model.weights.dot(phi_neg) + model.bias);
        if (margin > 0.0) {
            grad += phi_neg - phi_pos;
        }
    }
    return grad;
}

KnrmModel knrm_train(KnrmModel model, std::span<const KnrmTrainPair> pairs, int epochs,
                     double lr, const EmbeddingStore& store) {
    if (pairs.empty()) {
        return model;
    }
    // Features do not depend on the trainable parameters.
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> features;
    features.reserve(pairs.size());
    for (const auto& pair : pairs) {
        features.emplace_back(knrm_features(model, pair.q_terms, pair.d_pos, store),
                              knrm_features(model, pair.q_terms, pair.d_neg, store));
    }
    return knrm_train_features(std::move(model), features, epochs, lr);
}

KnrmModel knrm_train_features(
    KnrmModel model, std::span<const std::pair<Eigen::VectorXd, Eigen::VectorXd>> features,
    int epochs, double lr) {
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& [phi_pos, phi_neg] : features) {
            const double margin = 1.0 - model.weights.dot(phi_pos - phi_neg);
            if (margin > 0.0) {
                // The bias cancels in the pairwise margin; only weights move.
                model.weights += lr * (phi_pos - phi_neg);
            }
        }
    }
    return model;
}

std::vector<ScoredDoc> rerank(std::span<const TokenizedDoc* const> pool,
                              const std::function<double(const TokenizedDoc&)>& scorer) {
    if (pool.empty()) {
        throw UsageError("rerank requires a non-empty pool");
    }
    std::vector<ScoredDoc> ranked;
    ranked.reserve(pool.size());
    for (const TokenizedDoc* doc : pool) {
        ranked.push_back(ScoredDoc{doc->doc_id, scorer(*doc), 0});
    }
    std::sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        ranked[i].rank = static_cast<int>(i) + 1;
    }
    return ranked;
}

} // namespace chatrank
