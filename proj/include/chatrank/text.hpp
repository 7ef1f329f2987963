// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chatrank {

/**
 * Lowercasing word tokenizer shared by every text-consuming component.
 *
 * Tokens are maximal runs of ASCII alphanumerics and non-ASCII bytes
 * (multi-byte UTF-8 sequences pass through intact), so punctuation and
 * whitespace act as separators. ASCII letters are lowercased, digits are
 * kept, and tokens found in the stopword set are dropped. Tokenization is
 * deterministic and idempotent on re-joined token streams.
 */
class Tokenizer {
public:
    // Uses the built-in English function-word list.
    Tokenizer();
    explicit Tokenizer(std::set<std::string> stopwords);

    static Tokenizer from_stopword_file(const std::filesystem::path& path);
    static const std::set<std::string>& default_stopwords();

    std::vector<std::string> tokenize(std::string_view text) const;

    bool is_stopword(const std::string& term) const { return stopwords_.count(term) > 0; }
    const std::set<std::string>& stopwords() const { return stopwords_; }

private:
    std::set<std::string> stopwords_;
};

} // namespace chatrank
