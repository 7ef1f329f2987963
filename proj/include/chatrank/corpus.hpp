// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chatrank/text.hpp"

namespace chatrank {

using TermCounts = std::map<std::string, std::int64_t>;
using TermProbs = std::map<std::string, double>;

enum class Domain { books, travel, food };

Domain domain_from_string(std::string_view s);
std::string_view to_string(Domain d);
inline constexpr Domain kAllDomains[] = {Domain::books, Domain::travel, Domain::food};

// An entity-level answer page as delivered by the document feed.
struct Document {
    std::string id;
    Domain domain = Domain::books;
    std::string entity_key;
    std::string title;
    std::string body;
    std::string url;
};

// Token stream of one document plus its term-frequency view.
struct TokenizedDoc {
    std::string doc_id;
    std::vector<std::string> tokens;
    TermCounts counts;

    static TokenizedDoc from_tokens(std::string doc_id, std::vector<std::string> tokens);

    std::int64_t length() const { return static_cast<std::int64_t>(tokens.size()); }
    std::int64_t tf(const std::string& term) const;
};

// Aggregate term statistics over a document set. avg_doc_len is derived from
// the integer totals, never stored, so avg * doc_count == total_tokens holds
// exactly.
struct CorpusStats {
    TermCounts document_frequency;
    TermCounts collection_frequency;
    std::int64_t doc_count = 0;
    std::int64_t total_tokens = 0;

    bool has_docs() const { return doc_count > 0; }
    double avg_doc_len() const {
        return doc_count > 0 ? static_cast<double>(total_tokens) / static_cast<double>(doc_count)
                             : 0.0;
    }
    std::int64_t df(const std::string& term) const;
    std::int64_t cf(const std::string& term) const;
};

// Smoothing distribution over collection terms; unseen terms fall back to a
// small positive floor so log-space scorers never see zero.
struct BackgroundModel {
    TermProbs probabilities;
    double mass_default = 0.0;

    double prob(const std::string& term) const;
};

struct IngestResult {
    std::vector<Document> documents;
    std::vector<TokenizedDoc> tokenized;
    CorpusStats stats;
};

// Recount statistics for any subset of tokenized documents.
CorpusStats corpus_stats(std::span<const TokenizedDoc> docs);

/**
 * Tokenizes a document batch and builds corpus statistics.
 *
 * Rejects duplicate ids and documents whose body yields no tokens. Title and
 * body text are concatenated into one token stream.
 */
IngestResult ingest_documents(std::vector<Document> records, const Tokenizer& tokenizer);

/**
 * Pools collection frequencies of the given corpora into a unigram
 * background distribution. With no explicit floor the unseen-term mass is
 * 1 / (10 * total_tokens), below any observed term.
 */
BackgroundModel background_model(std::span<const CorpusStats* const> corpora,
                                 std::optional<double> floor = std::nullopt);
BackgroundModel background_model(const CorpusStats& corpus,
                                 std::optional<double> floor = std::nullopt);

} // namespace chatrank
