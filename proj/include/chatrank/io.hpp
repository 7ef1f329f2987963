// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "chatrank/corpus.hpp"
#include "chatrank/domain_vocab.hpp"
#include "chatrank/entity_expansion.hpp"
#include "chatrank/eval.hpp"
#include "chatrank/user_model.hpp"

namespace chatrank::io {

// One pooled result: the engine's original rank is kept for the SE baseline
// and the top10 metric.
struct PoolEntry {
    std::string query_id;
    std::string doc_id;
    int se_rank = 0;
};

struct Query {
    std::string query_id;
    Domain domain = Domain::books;
    std::string text;
};

// Line-delimited JSON loaders. Errors name the file and line.
std::vector<Document> load_documents(const std::filesystem::path& path);
std::vector<ChatSession> load_chats(const std::filesystem::path& path);
std::vector<Questionnaire> load_questionnaires(const std::filesystem::path& path);
std::vector<EntityAnnotation> load_annotations(const std::filesystem::path& path);
EntityCatalog load_catalog(const std::filesystem::path& path);
std::vector<PoolEntry> load_pools(const std::filesystem::path& path);
std::vector<Query> load_queries(const std::filesystem::path& path);
std::vector<Judgment> load_judgments(const std::filesystem::path& path);

// "term<TAB>count" lines, e.g. an external background-frequency table.
TermCounts load_term_counts(const std::filesystem::path& path);

// "term<TAB>weight" dump of spy weights; the domain is not stored in the
// file, so the loader takes it from the caller.
void save_spy_weights(const std::filesystem::path& path, const SpyWeights& weights);
SpyWeights load_spy_weights(const std::filesystem::path& path, Domain domain);

void save_corpus_stats(const std::filesystem::path& path, const CorpusStats& stats);
CorpusStats load_corpus_stats(const std::filesystem::path& path);

void save_user_model(const std::filesystem::path& path, const UserModel& model);
UserModel load_user_model(const std::filesystem::path& path);

void save_domain_vector(const std::filesystem::path& path, const DomainVector& dv);
DomainVector load_domain_vector(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);

// Writes via a temp file and rename so concurrent readers never observe a
// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

} // namespace chatrank::io
