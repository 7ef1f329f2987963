// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/corpus.hpp"

#include <set>
#include <utility>

#include "chatrank/errors.hpp"

namespace chatrank {

Domain domain_from_string(std::string_view s) {
    if (s == "books") return Domain::books;
    if (s == "travel") return Domain::travel;
    if (s == "food") return Domain::food;
    throw DataError("unknown domain value: '" + std::string(s) + "'");
}

std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::books: return "books";
        case Domain::travel: return "travel";
        case Domain::food: return "food";
    }
    return "?";
}

TokenizedDoc TokenizedDoc::from_tokens(std::string doc_id, std::vector<std::string> tokens) {
    TokenizedDoc doc;
    doc.doc_id = std::move(doc_id);
    doc.tokens = std::move(tokens);
    for (const auto& t : doc.tokens) {
        ++doc.counts[t];
    }
    return doc;
}

std::int64_t TokenizedDoc::tf(const std::string& term) const {
    auto it = counts.find(term);
    return it == counts.end() ? 0 : it->second;
}

std::int64_t CorpusStats::df(const std::string& term) const {
    auto it = document_frequency.find(term);
    return it == document_frequency.end() ? 0 : it->second;
}

std::int64_t CorpusStats::cf(const std::string& term) const {
    auto it = collection_frequency.find(term);
    return it == collection_frequency.end() ? 0 : it->second;
}

double BackgroundModel::prob(const std::string& term) const {
    auto it = probabilities.find(term);
    return it == probabilities.end() ? mass_default : it->second;
}

CorpusStats corpus_stats(std::span<const TokenizedDoc> docs) {
    CorpusStats stats;
    stats.doc_count = static_cast<std::int64_t>(docs.size());
    for (const auto& doc : docs) {
        stats.total_tokens += doc.length();
        for (const auto& [term, count] : doc.counts) {
            stats.collection_frequency[term] += count;
            stats.document_frequency[term] += 1;
        }
    }
    return stats;
}

IngestResult ingest_documents(std::vector<Document> records, const Tokenizer& tokenizer) {
    IngestResult result;
    std::set<std::string> seen_ids;
    result.tokenized.reserve(records.size());
    for (auto& record : records) {
        if (!seen_ids.insert(record.id).second) {
            throw DataError("duplicate document id: '" + record.id + "'");
        }
        if (tokenizer.tokenize(record.body).empty()) {
            throw DataError("document body empty after tokenization: '" + record.id + "'");
        }
        std::string text = record.title;
        text += '\n';
        text += record.body;
        result.tokenized.push_back(
            TokenizedDoc::from_tokens(record.id, tokenizer.tokenize(text)));
    }
    result.stats = corpus_stats(result.tokenized);
    result.documents = std::move(records);
    return result;
}

BackgroundModel background_model(std::span<const CorpusStats* const> corpora,
                                 std::optional<double> floor) {
    TermCounts pooled;
    std::int64_t total = 0;
    for (const CorpusStats* corpus : corpora) {
        for (const auto& [term, count] : corpus->collection_frequency) {
            pooled[term] += count;
        }
        total += corpus->total_tokens;
    }
    if (total <= 0) {
        throw DataError("background model requires a non-empty corpus");
    }

    BackgroundModel model;
    const double denom = static_cast<double>(total);
    for (const auto& [term, count] : pooled) {
        model.probabilities[term] = static_cast<double>(count) / denom;
    }
    model.mass_default = floor.value_or(1.0 / (10.0 * denom));
    if (model.mass_default <= 0.0) {
        throw DataError("background floor must be positive");
    }
    return model;
}

BackgroundModel background_model(const CorpusStats& corpus, std::optional<double> floor) {
    const CorpusStats* one[] = {&corpus};
    return background_model(std::span<const CorpusStats* const>(one), floor);
}

} // namespace chatrank
