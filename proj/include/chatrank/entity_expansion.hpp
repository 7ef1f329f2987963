// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chatrank/domain_vocab.hpp"
#include "chatrank/embeddings.hpp"
#include "chatrank/text.hpp"
#include "chatrank/user_model.hpp"

namespace chatrank {

enum class AnnotationKind { chat, questionnaire };

AnnotationKind annotation_kind_from_string(std::string_view s);
std::string_view to_string(AnnotationKind k);

// A gold-linked entity mention in one user's chat or questionnaire text.
struct EntityAnnotation {
    std::string user;
    AnnotationKind kind = AnnotationKind::chat;
    std::string record_id;
    std::string surface;
    std::string entity_id;
    bool is_named_entity = false;
};

struct CatalogEntry {
    std::string description;
    bool is_named_entity = false;
};

// Knowledge-base entries: first-paragraph descriptions per entity id.
struct EntityCatalog {
    std::map<std::string, CatalogEntry> entries;

    const CatalogEntry* find(const std::string& entity_id) const {
        auto it = entries.find(entity_id);
        return it == entries.end() ? nullptr : &it->second;
    }
};

// Embedding-space centroid of the m keys most related to a domain seed.
struct DomainVector {
    std::optional<Domain> domain;
    Eigen::VectorXd vector;
    int m = 0;
};

/**
 * Cosine-weighted average of the m keys most similar to the seed (the seed
 * itself excluded): v = sum cos(seed,k) * v_k / sum cos(seed,k).
 */
DomainVector domain_vector(const std::string& seed_key, const EmbeddingStore& store, int m);

// Cosine between an entity's vector and the domain vector; nullopt when the
// entity has no vector (excluded from selective variants).
std::optional<double> entity_domain_relatedness(const std::string& entity_id,
                                                const DomainVector& dv,
                                                const EmbeddingStore& store);

enum class ExpansionVariant { none, all, domain, ne_all, ne_dom };

ExpansionVariant expansion_variant_from_string(std::string_view s);
std::string_view to_string(ExpansionVariant v);

/**
 * Picks the entity ids to expand with. "all" takes every annotated entity and
 * concept, "domain" keeps those with relatedness >= tau, "ne_all" keeps named
 * entities, "ne_dom" keeps named entities with relatedness >= tau. Entities
 * without a vector never pass a relatedness filter.
 */
std::set<std::string> select_entities(std::span<const EntityAnnotation> annotations,
                                      ExpansionVariant variant,
                                      const DomainVector* dv = nullptr,
                                      std::optional<double> tau = std::nullopt,
                                      const EmbeddingStore* store = nullptr);

/**
 * Adds tokenized catalog descriptions of the selected entities into the user
 * model and renormalizes. With spy weights, each description term's count is
 * multiplied by spy(w) before merging. Entity names themselves are not added.
 * Unresolvable entities are skipped with a warning.
 */
UserModel expand_user_model(const UserModel& model, const std::set<std::string>& selected,
                            const EntityCatalog& catalog, const Tokenizer& tokenizer,
                            const SpyWeights* spy = nullptr,
                            std::vector<std::string>* warnings = nullptr);

struct TuneGridPoint {
    int m = 0;
    double tau = 0.0;
};

struct TuneResult {
    int m = 0;
    double tau = 0.0;
    double auc = 0.0;
};

/**
 * Area under the precision-recall curve of a scored binary labeling,
 * trapezoidal over the PR points at each distinct score, anchored at
 * (recall 0, precision 1).
 */
double pr_auc(std::vector<std::pair<double, bool>> scored);

/**
 * Grid search over (m, tau): scores every gold entity by relatedness to the
 * m-neighbor domain vector and returns the configuration maximizing PR AUC,
 * ties broken by smaller m then smaller tau. Gold entities without a vector
 * count as unrelated (score below every scored entity).
 */
TuneResult tune_thresholds(const std::vector<std::pair<std::string, bool>>& gold,
                           std::span<const TuneGridPoint> grid, const std::string& seed_key,
                           const EmbeddingStore& store);

} // namespace chatrank
