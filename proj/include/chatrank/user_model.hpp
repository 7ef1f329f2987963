// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatrank/corpus.hpp"
#include "chatrank/text.hpp"

namespace chatrank {

// Scope a chat session or questionnaire was recorded under.
enum class Scope { general, books, travel, food };

// Which slice of a user's signals feeds the model.
enum class ScopeConfig { All, Gen, Dom, DomGen };

enum class ModelSource { chats, questionnaire };

Scope scope_from_string(std::string_view s);
std::string_view to_string(Scope s);
ScopeConfig scope_config_from_string(std::string_view s);
std::string_view to_string(ScopeConfig c);
ModelSource model_source_from_string(std::string_view s);
std::string_view to_string(ModelSource s);
Scope scope_of(Domain d);

struct Utterance {
    std::string speaker;
    std::string text;
};

struct ChatSession {
    std::string session_id;
    std::array<std::string, 2> participants;
    Scope scope = Scope::general;
    std::vector<Utterance> utterances;
};

struct QuestionAnswer {
    std::string question;
    std::string answer;
};

struct Questionnaire {
    std::string user;
    Scope scope = Scope::general;
    std::vector<QuestionAnswer> answers;
};

/**
 * A user's interests as a multinomial over terms. Counts stay integral for
 * plain chat/questionnaire models and become fractional once expansion terms
 * are merged with specificity weights.
 */
struct UserModel {
    std::string user;
    ModelSource source = ModelSource::chats;
    ScopeConfig scope_config = ScopeConfig::All;
    std::optional<Domain> domain;
    std::map<std::string, double> term_counts;
    TermProbs term_probs;

    // Recomputes term_probs from term_counts.
    void renormalize();
    std::vector<std::string> vocabulary() const;
};

struct UserModelOptions {
    // Question prompts are shared across users and excluded by default.
    bool include_question_prompts = false;
};

/**
 * Builds a user model from the scope-selected subset of the user's own text.
 *
 * Chat sources use only utterances spoken by the user; questionnaire sources
 * use answer text. Scope selection: All takes every scope, Gen only general,
 * Dom only the given domain, DomGen general plus the domain. Throws
 * DataError("empty user model") when nothing is selected.
 */
UserModel build_user_model(const std::string& user, ModelSource source, ScopeConfig scope_config,
                           std::optional<Domain> domain, std::span<const ChatSession> chats,
                           std::span<const Questionnaire> questionnaires,
                           const Tokenizer& tokenizer, const UserModelOptions& options = {});

// Top-k terms by descending count, ties broken lexicographically.
std::vector<std::string> top_terms(const std::map<std::string, double>& counts, std::size_t k);
std::vector<std::string> top_terms(const UserModel& model, std::size_t k);
std::vector<std::string> top_terms(const TermCounts& counts, std::size_t k);

} // namespace chatrank
