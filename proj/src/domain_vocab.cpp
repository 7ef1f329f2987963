// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/domain_vocab.hpp"

#include "chatrank/errors.hpp"

namespace chatrank {

SpyWeights spy_weights(const CorpusStats& domain_pool, const CorpusStats& all_pool,
                       Domain domain) {
    if (all_pool.total_tokens <= 0) {
        throw DataError("spy weights require a non-empty full pool");
    }
    SpyWeights spy;
    spy.domain = domain;
    const double dom_total = static_cast<double>(domain_pool.total_tokens);
    const double all_total = static_cast<double>(all_pool.total_tokens);
    for (const auto& [term, cf_all] : all_pool.collection_frequency) {
        const std::int64_t cf_dom = domain_pool.cf(term);
        if (cf_dom == 0) {
            spy.weights[term] = 0.0;
        } else {
            spy.weights[term] = (static_cast<double>(cf_dom) * all_total) /
                                (static_cast<double>(cf_all) * dom_total);
        }
    }
    return spy;
}

std::map<std::string, double> apply_spy(const std::map<std::string, double>& contributions,
                                        const SpyWeights& weights, SpyMode mode, double tau) {
    std::map<std::string, double> result;
    for (const auto& [term, value] : contributions) {
        const double w = weights.weight(term);
        if (mode == SpyMode::weight) {
            result[term] = value * w;
        } else if (w >= tau) {
            result[term] = value;
        }
    }
    return result;
}

} // namespace chatrank
