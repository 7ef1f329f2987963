// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chatrank/embeddings.hpp"
#include "chatrank/entity_expansion.hpp"
#include "chatrank/eval.hpp"
#include "chatrank/io.hpp"
#include "chatrank/rankers.hpp"

namespace chatrank {

enum class Ranker { lm, lm_embed, bm25, knrm, knrm_all, se };
enum class SourceKind { query_only, questionnaire, chats };

Ranker ranker_from_string(std::string_view s);
std::string_view to_string(Ranker r);
SourceKind source_kind_from_string(std::string_view s);
std::string_view to_string(SourceKind s);

struct DataPaths {
    std::filesystem::path docs;
    std::filesystem::path stopwords;
    std::filesystem::path chats;
    std::filesystem::path questionnaires;
    std::filesystem::path annotations;
    std::filesystem::path catalog;
    std::filesystem::path vectors;
    std::filesystem::path queries;
    std::filesystem::path pools;
    std::filesystem::path judgments;
    std::filesystem::path background;
};

/**
 * One experiment cell: ranker, user-model source and scope, term weighting,
 * expansion variant, and the scoring constants. Unset optionals resolve to
 * data-dependent defaults (mu = average document length) or source-dependent
 * ones (lambda = 1 for query-only, 0 for personalized runs).
 */
struct ExperimentConfig {
    std::string name = "experiment";
    Ranker ranker = Ranker::lm;
    SourceKind source = SourceKind::query_only;
    std::optional<ScopeConfig> scope;
    bool spy = false;
    ExpansionVariant expansion = ExpansionVariant::none;
    std::optional<double> lambda;
    std::optional<double> mu;
    double k1 = 1.5;
    double b = 0.75;
    std::optional<double> tau;
    double tau_sim = 0.5;
    int m = 50;
    std::uint64_t seed = 42;
    int knrm_epochs = 20;
    double knrm_lr = 0.01;
    std::vector<std::string> metrics = {"ndcg20", "ndcg_top10", "p1"};
    std::map<Domain, std::string> seed_entities;
    DataPaths paths;

    double resolved_lambda() const {
        return lambda.value_or(source == SourceKind::query_only ? 1.0 : 0.0);
    }
};

// Ordered key=value pairs; later entries override earlier ones.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

// Parses a key=value config file ('#' starts a comment line).
ConfigEntries parse_config_file(const std::filesystem::path& path);

// Parses one "key=value" override.
std::pair<std::string, std::string> parse_override(std::string_view text);

// Builds a config from entries; unknown keys raise a usage error naming the
// field. apply_entry sets one field on an existing config.
ExperimentConfig config_from_entries(const ConfigEntries& entries);
void apply_entry(ExperimentConfig& config, const std::string& key, const std::string& value);

// Checks cross-field invariants (query-only forbids scope and expansion;
// personalized sources require a scope; the se ranker skips these checks).
void validate(const ExperimentConfig& config);

/**
 * Cross-product expansion of a grid manifest: comma-separated values of
 * swept keys multiply out into one config per cell, in a fixed key order.
 * Cell names extend the base name with the swept key=value parts.
 */
std::vector<ExperimentConfig> expand_grid(const ConfigEntries& entries);

/**
 * Everything an experiment reads, loaded once and immutable afterwards.
 * Only the paths that are set get loaded; operations that need an absent
 * piece raise a usage error naming the missing path key.
 */
struct Dataset {
    Tokenizer tokenizer;
    std::vector<Document> documents;
    std::vector<TokenizedDoc> tokenized;
    std::map<std::string, std::size_t> doc_index;
    CorpusStats all_stats;
    std::map<Domain, CorpusStats> domain_stats;
    BackgroundModel background;
    std::vector<ChatSession> chats;
    std::vector<Questionnaire> questionnaires;
    std::vector<EntityAnnotation> annotations;
    EntityCatalog catalog;
    EmbeddingStore store;
    bool has_store = false;
    std::map<std::string, io::Query> queries;
    std::map<std::string, std::vector<io::PoolEntry>> pools_by_query;
    std::map<std::pair<std::string, std::string>, int> se_ranks;
    std::vector<Judgment> judgments;
    std::vector<std::string> warnings;

    static Dataset load(const DataPaths& paths);

    const TokenizedDoc& doc(const std::string& doc_id) const;
    const io::Query& query(const std::string& query_id) const;
    int se_rank(const std::string& query_id, const std::string& doc_id) const;
};

/**
 * Runs one configuration over every judged (user, query) pair: NDCG@20 and
 * P@1 on the random20 pool, NDCG@10 on the top10 pool (ordered by se_rank
 * for the se ranker). KNRM rankers train under ten-fold cross-validation.
 * spy_override replaces the corpus-derived spy weights and exists for
 * equivalence tests.
 */
MetricReport run_experiment(const ExperimentConfig& config, const Dataset& data,
                            const SpyWeights* spy_override = nullptr);

/**
 * Ten-fold cross-validation: per rotation, one test fold, one validation
 * fold (selects the training epoch by NDCG@20), eight training folds. The
 * per-domain ranker partitions each domain's pairs separately; knrm-all
 * trains one model on domain-stratified folds. Fewer than 10 pairs in any
 * partition is an error.
 */
MetricReport cross_validate_knrm(const ExperimentConfig& config, const Dataset& data,
                                 const SpyWeights* spy_override = nullptr);

// Trains one KNRM model on every judged pair (no held-out folds); domain
// restricts training to that domain's queries for the per-domain ranker.
KnrmModel train_knrm_full(const ExperimentConfig& config, const Dataset& data,
                          std::optional<Domain> domain);

/**
 * Ranks one query's pooled documents (from the pools file) for one user
 * under the configuration's scorer. KNRM rankers need a trained model.
 */
std::vector<ScoredDoc> rank_pool(const ExperimentConfig& config, const Dataset& data,
                                 const std::string& user, const std::string& query_id,
                                 const KnrmModel* knrm_model = nullptr);

/**
 * Runs each cell and writes <out_dir>/<cell name>.txt and .jsonl atomically.
 * Returns the reports in cell order.
 */
std::vector<MetricReport> run_grid(const std::vector<ExperimentConfig>& cells,
                                   const Dataset& data,
                                   const std::filesystem::path& out_dir);

} // namespace chatrank
