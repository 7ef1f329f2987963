// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/user_model.hpp"

#include <algorithm>

#include "chatrank/errors.hpp"

namespace chatrank {

Scope scope_from_string(std::string_view s) {
    if (s == "general") return Scope::general;
    if (s == "books") return Scope::books;
    if (s == "travel") return Scope::travel;
    if (s == "food") return Scope::food;
    throw DataError("unknown scope value: '" + std::string(s) + "'");
}

std::string_view to_string(Scope s) {
    switch (s) {
        case Scope::general: return "general";
        case Scope::books: return "books";
        case Scope::travel: return "travel";
        case Scope::food: return "food";
    }
    return "?";
}

ScopeConfig scope_config_from_string(std::string_view s) {
    if (s == "All") return ScopeConfig::All;
    if (s == "Gen") return ScopeConfig::Gen;
    if (s == "Dom") return ScopeConfig::Dom;
    if (s == "DomGen" || s == "Dom+Gen") return ScopeConfig::DomGen;
    throw UsageError("unknown scope config: '" + std::string(s) + "'");
}

std::string_view to_string(ScopeConfig c) {
    switch (c) {
        case ScopeConfig::All: return "All";
        case ScopeConfig::Gen: return "Gen";
        case ScopeConfig::Dom: return "Dom";
        case ScopeConfig::DomGen: return "DomGen";
    }
    return "?";
}

ModelSource model_source_from_string(std::string_view s) {
    if (s == "chats") return ModelSource::chats;
    if (s == "questionnaire" || s == "questionnaires") return ModelSource::questionnaire;
    throw UsageError("unknown model source: '" + std::string(s) + "'");
}

std::string_view to_string(ModelSource s) {
    return s == ModelSource::chats ? "chats" : "questionnaire";
}

Scope scope_of(Domain d) {
    switch (d) {
        case Domain::books: return Scope::books;
        case Domain::travel: return Scope::travel;
        case Domain::food: return Scope::food;
    }
    return Scope::general;
}

namespace {

bool scope_selected(Scope scope, ScopeConfig config, std::optional<Domain> domain) {
    switch (config) {
        case ScopeConfig::All: return true;
        case ScopeConfig::Gen: return scope == Scope::general;
        case ScopeConfig::Dom: return scope == scope_of(*domain);
        case ScopeConfig::DomGen:
            return scope == Scope::general || scope == scope_of(*domain);
    }
    return false;
}

} // namespace

void UserModel::renormalize() {
    term_probs.clear();
    double total = 0.0;
    for (const auto& [term, count] : term_counts) {
        total += count;
    }
    if (total <= 0.0) {
        return;
    }
    for (const auto& [term, count] : term_counts) {
        term_probs[term] = count / total;
    }
}

std::vector<std::string> UserModel::vocabulary() const {
    std::vector<std::string> terms;
    terms.reserve(term_counts.size());
    for (const auto& [term, count] : term_counts) {
        terms.push_back(term);
    }
    return terms;
}

UserModel build_user_model(const std::string& user, ModelSource source, ScopeConfig scope_config,
                           std::optional<Domain> domain, std::span<const ChatSession> chats,
                           std::span<const Questionnaire> questionnaires,
                           const Tokenizer& tokenizer, const UserModelOptions& options) {
    if ((scope_config == ScopeConfig::Dom || scope_config == ScopeConfig::DomGen) &&
        !domain.has_value()) {
        throw UsageError("scope config Dom/DomGen requires a domain");
    }

    UserModel model;
    model.user = user;
    model.source = source;
    model.scope_config = scope_config;
    model.domain = domain;

    auto add_text = [&](const std::string& text) {
        for (const auto& token : tokenizer.tokenize(text)) {
            model.term_counts[token] += 1.0;
        }
    };

    if (source == ModelSource::chats) {
        for (const auto& session : chats) {
            if (!scope_selected(session.scope, scope_config, domain)) {
                continue;
            }
            for (const auto& utterance : session.utterances) {
                if (utterance.speaker == user) {
                    add_text(utterance.text);
                }
            }
        }
    } else {
        for (const auto& questionnaire : questionnaires) {
            if (questionnaire.user != user ||
                !scope_selected(questionnaire.scope, scope_config, domain)) {
                continue;
            }
            for (const auto& qa : questionnaire.answers) {
                if (options.include_question_prompts) {
                    add_text(qa.question);
                }
                add_text(qa.answer);
            }
        }
    }

    if (model.term_counts.empty()) {
        throw DataError("empty user model for user '" + user + "'");
    }
    model.renormalize();
    return model;
}

namespace {

template <typename CountMap>
std::vector<std::string> top_terms_impl(const CountMap& counts, std::size_t k) {
    using Value = typename CountMap::mapped_type;
    std::vector<std::pair<std::string, Value>> entries(counts.begin(), counts.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (entries.size() > k) {
        entries.resize(k);
    }
    std::vector<std::string> terms;
    terms.reserve(entries.size());
    for (auto& [term, count] : entries) {
        terms.push_back(std::move(term));
    }
    return terms;
}

} // namespace

std::vector<std::string> top_terms(const std::map<std::string, double>& counts, std::size_t k) {
    return top_terms_impl(counts, k);
}

std::vector<std::string> top_terms(const UserModel& model, std::size_t k) {
    return top_terms_impl(model.term_counts, k);
}

std::vector<std::string> top_terms(const TermCounts& counts, std::size_t k) {
    return top_terms_impl(counts, k);
}

} // namespace chatrank
