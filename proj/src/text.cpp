// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/text.hpp"

#include <cctype>
#include <fstream>

#include "chatrank/errors.hpp"

namespace chatrank {

namespace {

const char* const kDefaultStopwords[] = {
    "a",      "about",   "above",    "after",   "again",      "against",
    "all",    "am",      "an",       "and",     "any",        "are",
    "as",     "at",      "be",       "because", "been",       "before",
    "being",  "below",   "between",  "both",    "but",        "by",
    "can",    "did",     "do",       "does",    "doing",      "down",
    "during", "each",    "few",      "for",     "from",       "further",
    "had",    "has",     "have",     "having",  "he",         "her",
    "here",   "hers",    "herself",  "him",     "himself",    "his",
    "how",    "i",       "if",       "in",      "into",       "is",
    "it",     "its",     "itself",   "just",    "me",         "more",
    "most",   "my",      "myself",   "no",      "nor",        "not",
    "now",    "of",      "off",      "on",      "once",       "only",
    "or",     "other",   "our",      "ours",    "ourselves",  "out",
    "over",   "own",     "s",        "same",    "she",        "should",
    "so",     "some",    "such",     "t",       "than",       "that",
    "the",    "their",   "theirs",   "them",    "themselves", "then",
    "there",  "these",   "they",     "this",    "those",      "through",
    "to",     "too",     "under",    "until",   "up",         "very",
    "was",    "we",      "were",     "what",    "when",       "where",
    "which",  "while",   "who",      "whom",    "why",        "will",
    "with",   "would",   "you",      "your",    "yours",      "yourself",
    "yourselves",
};

bool is_token_byte(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;
}

} // namespace

Tokenizer::Tokenizer() : stopwords_(default_stopwords()) {}

Tokenizer::Tokenizer(std::set<std::string> stopwords) : stopwords_(std::move(stopwords)) {}

const std::set<std::string>& Tokenizer::default_stopwords() {
    static const std::set<std::string> words(std::begin(kDefaultStopwords),
                                             std::end(kDefaultStopwords));
    return words;
}

Tokenizer Tokenizer::from_stopword_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open stopword file: " + path.string());
    }
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
            line.pop_back();
        }
        if (!line.empty()) {
            words.insert(line);
        }
    }
    return Tokenizer(std::move(words));
}

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> tokens;
    std::string current;
    current.reserve(24);

    auto flush = [&] {
        if (!current.empty()) {
            if (stopwords_.count(current) == 0) {
                tokens.push_back(current);
            }
            current.clear();
        }
    };

    for (unsigned char c : text) {
        if (is_token_byte(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                                       : static_cast<char>(c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

} // namespace chatrank
