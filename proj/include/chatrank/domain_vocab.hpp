// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <map>
#include <string>

#include "chatrank/corpus.hpp"

namespace chatrank {

/**
 * Per-domain term specificity: the ratio of a term's normalized frequency in
 * the domain pool to its normalized frequency in the full pool. Terms seen in
 * the full pool but not in the domain pool carry weight 0; terms unseen
 * anywhere fall back to default_weight (neutral 1.0 under multiplication).
 */
struct SpyWeights {
    Domain domain = Domain::books;
    std::map<std::string, double> weights;
    double default_weight = 1.0;

    double weight(const std::string& term) const {
        auto it = weights.find(term);
        return it == weights.end() ? default_weight : it->second;
    }

    static SpyWeights all_ones(Domain d) {
        SpyWeights w;
        w.domain = d;
        return w;
    }
};

/**
 * spy(w) = (cf_dom(w) / |Dom|) / (cf_all(w) / |All|), computed cross-
 * multiplied so domain-exclusive terms land exactly on |All| / |Dom| and
 * pool duplication cancels exactly.
 */
SpyWeights spy_weights(const CorpusStats& domain_pool, const CorpusStats& all_pool,
                       Domain domain);

enum class SpyMode { weight, prune };

/**
 * Reweights (mode weight) or filters (mode prune, dropping spy(w) < tau and
 * leaving survivors untouched) a term-contribution map.
 */
std::map<std::string, double> apply_spy(const std::map<std::string, double>& contributions,
                                        const SpyWeights& weights, SpyMode mode,
                                        double tau = 0.0);

} // namespace chatrank
