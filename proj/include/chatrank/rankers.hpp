// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "chatrank/corpus.hpp"
#include "chatrank/domain_vocab.hpp"
#include "chatrank/embeddings.hpp"
#include "chatrank/user_model.hpp"

namespace chatrank {

// Maximum-likelihood term distribution of one query.
struct QueryModel {
    std::string query_id;
    Domain domain = Domain::books;
    TermProbs term_probs;
};

QueryModel build_query_model(std::string query_id, Domain domain, std::string_view text,
                             const Tokenizer& tokenizer);

struct ScoredDoc {
    std::string doc_id;
    double score = 0.0;
    int rank = 0;
};

/**
 * Negative KL divergence score between the query/user models and the
 * Dirichlet-smoothed document model, mixed by lambda:
 *
 *   -lambda     * sum_{w in Vq} spy(w) p(w|q) log( p(w|q) / ((tf + mu pC) / (|d| + mu)) )
 *   -(1-lambda) * sum_{w in Vu} spy(w) p(w|u) log( p(w|u) / ((tf + mu pC) / (|d| + mu)) )
 *
 * lambda = 1 permits a null user model; lambda < 1 without one is an error.
 * A sum whose mixture weight is zero is skipped outright, so a lambda = 0
 * score is invariant under any change to the query.
 */
double score_lm(const QueryModel& query, const UserModel* user, const TokenizedDoc& doc,
                double lambda, double mu, const BackgroundModel& background,
                const SpyWeights* spy = nullptr);

/**
 * Translation-model variant of score_lm: each tf(w, d) becomes
 * sum over doc terms t with cos(w, t) >= tau_sim of cos(w, t) * tf(t, d),
 * with w itself always contributing at similarity 1.
 */
double score_lm_embed(const QueryModel& query, const UserModel* user, const TokenizedDoc& doc,
                      double lambda, double mu, const BackgroundModel& background,
                      const SpyWeights* spy, const EmbeddingStore& store,
                      double tau_sim = 0.5);

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

/**
 * Okapi BM25 over the union of query terms and user-model vocabulary (user
 * models enter by query expansion), with per-term spy weighting and the
 * +1-inside-log idf that stays positive.
 */
double score_bm25(std::span<const std::string> query_terms, const UserModel* user,
                  const TokenizedDoc& doc, const CorpusStats& stats, Bm25Params params = {},
                  const SpyWeights* spy = nullptr);

struct KnrmKernel {
    double mu = 0.0;
    double sigma = 0.1;
};

/**
 * Kernel pooling ranker: Gaussian kernels summarize the query-document
 * cosine similarity matrix into soft-match features combined linearly.
 * Only the combination weights and bias are learned.
 */
struct KnrmModel {
    std::vector<KnrmKernel> kernels;
    Eigen::VectorXd weights;
    double bias = 0.0;
    int max_query_terms = 50;
    int max_doc_terms = 5000;
    std::uint64_t seed = 0;

    // One exact-match kernel (mu 1.0, sigma 1e-3) plus ten kernels with mus
    // 0.9 .. -0.9 step 0.2 at sigma 0.1; weights drawn from the seed.
    static KnrmModel default_bank(std::uint64_t seed);

    void save(const std::filesystem::path& path) const;
    static KnrmModel load(const std::filesystem::path& path);
};

// Soft-TF feature vector phi: phi_k = sum_i log(eps + sum_j exp(-(M_ij - mu_k)^2 / (2 sigma_k^2))).
// Document terms are canonicalized by sort, so any permutation of d_terms
// produces identical features. Empty q_terms or d_terms give a zero vector.
Eigen::VectorXd knrm_features(const KnrmModel& model, std::span<const std::string> q_terms,
                              std::span<const std::string> d_terms, const EmbeddingStore& store);

// weights . phi + bias; degenerates to the bias on empty input.
double knrm_score(const KnrmModel& model, std::span<const std::string> q_terms,
                  std::span<const std::string> d_terms, const EmbeddingStore& store);

struct KnrmTrainPair {
    std::vector<std::string> q_terms;
    std::vector<std::string> d_pos;
    std::vector<std::string> d_neg;
};

// Total pairwise hinge loss sum max(0, 1 - score(d_pos) + score(d_neg)).
double knrm_pairwise_loss(const KnrmModel& model, std::span<const KnrmTrainPair> pairs,
                          const EmbeddingStore& store);

// Subgradient of the total hinge loss with respect to the weights.
Eigen::VectorXd knrm_loss_gradient(const KnrmModel& model, std::span<const KnrmTrainPair> pairs,
                                   const EmbeddingStore& store);

/**
 * SGD over the pairs in order for the given number of epochs. Kernel
 * parameters stay fixed; the bias gradient cancels between the paired scores
 * and never moves. An empty training set returns the model unchanged.
 */
KnrmModel knrm_train(KnrmModel model, std::span<const KnrmTrainPair> pairs, int epochs,
                     double lr, const EmbeddingStore& store);

// The same SGD loop over precomputed (positive, negative) feature pairs;
// knrm_train delegates here after one feature pass.
KnrmModel knrm_train_features(
    KnrmModel model, std::span<const std::pair<Eigen::VectorXd, Eigen::VectorXd>> features,
    int epochs, double lr);

/**
 * Scores every pool document and orders by descending score, doc id
 * ascending on ties. Output ranks are 1..n over exactly the input ids.
 */
std::vector<ScoredDoc> rerank(std::span<const TokenizedDoc* const> pool,
                              const std::function<double(const TokenizedDoc&)>& scorer);

} // namespace chatrank
