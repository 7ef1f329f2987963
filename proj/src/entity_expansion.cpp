// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/entity_expansion.hpp"

#include <algorithm>
#include <cmath>

#include "chatrank/errors.hpp"

namespace chatrank {

AnnotationKind annotation_kind_from_string(std::string_view s) {
    if (s == "chat") return AnnotationKind::chat;
    if (s == "questionnaire") return AnnotationKind::questionnaire;
    throw DataError("unknown annotation kind: '" + std::string(s) + "'");
}

std::string_view to_string(AnnotationKind k) {
    return k == AnnotationKind::chat ? "chat" : "questionnaire";
}

ExpansionVariant expansion_variant_from_string(std::string_view s) {
    if (s == "none") return ExpansionVariant::none;
    if (s == "all") return ExpansionVariant::all;
    if (s == "domain") return ExpansionVariant::domain;
    if (s == "ne-all" || s == "ne_all") return ExpansionVariant::ne_all;
    if (s == "ne-dom" || s == "ne_dom") return ExpansionVariant::ne_dom;
    throw UsageError("unknown expansion variant: '" + std::string(s) + "'");
}

std::string_view to_string(ExpansionVariant v) {
    switch (v) {
        case ExpansionVariant::none: return "none";
        case ExpansionVariant::all: return "all";
        case ExpansionVariant::domain: return "domain";
        case ExpansionVariant::ne_all: return "ne-all";
        case ExpansionVariant::ne_dom: return "ne-dom";
    }
    return "?";
}

DomainVector domain_vector(const std::string& seed_key, const EmbeddingStore& store, int m) {
    if (m < 1) {
        throw UsageError("domain vector neighborhood size must be >= 1");
    }
    const Eigen::VectorXd* seed = store.vector(seed_key);
    if (seed == nullptr) {
        throw DataError("domain vector seed '" + seed_key + "' is not in the embedding store");
    }

    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(store.size());
    for (const auto& [key, v] : store.vectors()) {
        if (key == seed_key) {
            continue;
        }
        scored.emplace_back(key, cosine_similarity(*seed, v));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > static_cast<std::size_t>(m)) {
        scored.resize(static_cast<std::size_t>(m));
    }

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(store.dimension());
    double weight_sum = 0.0;
    for (const auto& [key, sim] : scored) {
        sum += sim * (*store.vector(key));
        weight_sum += sim;
    }
    if (scored.empty() || weight_sum == 0.0) {
        throw DataError("domain vector for seed '" + seed_key +
                        "' is degenerate (no weighted neighbors)");
    }

    DomainVector dv;
    dv.vector = sum / weight_sum;
    dv.m = m;
    return dv;
}

std::optional<double> entity_domain_relatedness(const std::string& entity_id,
                                                const DomainVector& dv,
                                                const EmbeddingStore& store) {
    return store.cosine_to(entity_id, dv.vector);
}

std::set<std::string> select_entities(std::span<const EntityAnnotation> annotations,
                                      ExpansionVariant variant, const DomainVector* dv,
                                      std::optional<double> tau, const EmbeddingStore* store) {
    std::set<std::string> selected;
    if (variant == ExpansionVariant::none) {
        return selected;
    }
    const bool needs_relatedness =
        variant == ExpansionVariant::domain || variant == ExpansionVariant::ne_dom;
    if (needs_relatedness && (dv == nullptr || store == nullptr || !tau.has_value())) {
        throw UsageError("selective expansion variants require a domain vector and tau");
    }
    const bool needs_named =
        variant == ExpansionVariant::ne_all || variant == ExpansionVariant::ne_dom;

    std::map<std::string, std::optional<double>> relatedness_cache;
    auto related_enough = [&](const std::string& entity_id) {
        auto [it, inserted] = relatedness_cache.try_emplace(entity_id);
        if (inserted) {
            it->second = entity_domain_relatedness(entity_id, *dv, *store);
        }
        return it->second.has_value() && *it->second >= *tau;
    };

    for (const auto& annotation : annotations) {
        if (needs_named && !annotation.is_named_entity) {
            continue;
        }
        if (needs_relatedness && !related_enough(annotation.entity_id)) {
            continue;
        }
        selected.insert(annotation.entity_id);
    }
    return selected;
}

UserModel expand_user_model(const UserModel& model, const std::set<std::string>& selected,
                            const EntityCatalog& catalog, const Tokenizer& tokenizer,
                            const SpyWeights* spy, std::vector<std::string>* warnings) {
    if (selected.empty()) {
        return model;
    }
    UserModel expanded = model;
    for (const auto& entity_id : selected) {
        const CatalogEntry* entry = catalog.find(entity_id);
        if (entry == nullptr) {
            if (warnings != nullptr) {
                warnings->push_back("entity '" + entity_id + "' not in catalog, skipped");
            }
            continue;
        }
        TermCounts description_counts;
        for (const auto& token : tokenizer.tokenize(entry->description)) {
            ++description_counts[token];
        }
        for (const auto& [term, count] : description_counts) {
            const double w = spy != nullptr ? spy->weight(term) : 1.0;
            const double contribution = static_cast<double>(count) * w;
            // A zero spy weight adds nothing; materializing the entry would
            // hand renormalize a zero-probability vocabulary term.
            if (contribution <= 0.0) {
                continue;
            }
            expanded.term_counts[term] += contribution;
        }
    }
    expanded.renormalize();
    return expanded;
}

double pr_auc(std::vector<std::pair<double, bool>> scored) {
    if (scored.empty()) {
        return 0.0;
    }
    std::int64_t total_positives = 0;
    for (const auto& [score, label] : scored) {
        total_positives += label ? 1 : 0;
    }
    if (total_positives == 0) {
        return 0.0;
    }
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    double area = 0.0;
    double prev_recall = 0.0;
    double prev_precision = 1.0;
    std::int64_t tp = 0;
    std::int64_t seen = 0;
    std::size_t i = 0;
    while (i < scored.size()) {
        const double score = scored[i].first;
        while (i < scored.size() && scored[i].first == score) {
            tp += scored[i].second ? 1 : 0;
            ++seen;
            ++i;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
        prev_recall = recall;
        prev_precision = precision;
    }
    return area;
}

TuneResult tune_thresholds(const std::vector<std::pair<std::string, bool>>& gold,
                           std::span<const TuneGridPoint> grid, const std::string& seed_key,
                           const EmbeddingStore& store) {
    if (gold.empty()) {
        throw DataError("threshold tuning requires gold-labeled entities");
    }
    if (std::none_of(gold.begin(), gold.end(), [](const auto& g) { return g.second; })) {
        throw DataError("threshold tuning requires at least one positive gold label");
    }
    if (grid.empty()) {
        throw UsageError("threshold tuning requires a non-empty grid");
    }

    std::map<int, DomainVector> dv_by_m;
    std::optional<TuneResult> best;
    for (const auto& point : grid) {
        auto it = dv_by_m.find(point.m);
        if (it == dv_by_m.end()) {
            it = dv_by_m.emplace(point.m, domain_vector(seed_key, store, point.m)).first;
        }
        std::vector<std::pair<double, bool>> scored;
        scored.reserve(gold.size());
        for (const auto& [entity_id, related] : gold) {
            auto sim = entity_domain_relatedness(entity_id, it->second, store);
            // Entities without a vector rank below every real cosine.
            scored.emplace_back(sim.value_or(-2.0), related);
        }
        const double auc = pr_auc(std::move(scored));
        const bool better =
            !best.has_value() || auc > best->auc ||
            (auc == best->auc &&
             (point.m < best->m || (point.m == best->m && point.tau < best->tau)));
        if (better) {
            best = TuneResult{point.m, point.tau, auc};
        }
    }
    return *best;
}

} // namespace chatrank
