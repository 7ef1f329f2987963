// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chatrank {

/**
 * Read-only store of dense word/entity vectors keyed by surface form or
 * entity id. Loaded once from the text vector format ("<count> <dimension>"
 * header, then one key plus components per line); safe for concurrent reads
 * afterwards.
 */
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(int dimension, std::map<std::string, Eigen::VectorXd> vectors);

    static EmbeddingStore load(const std::filesystem::path& path,
                               std::vector<std::string>* warnings = nullptr);

    int dimension() const { return dimension_; }
    std::size_t size() const { return vectors_.size(); }
    bool contains(const std::string& key) const { return vectors_.count(key) > 0; }
    const Eigen::VectorXd* vector(const std::string& key) const;
    const std::map<std::string, Eigen::VectorXd>& vectors() const { return vectors_; }

    /**
     * Cosine similarity in [-1, 1], or nullopt when either key is unknown.
     * A key paired with itself scores exactly 1; zero-norm vectors score 0
     * against everything.
     */
    std::optional<double> cosine(const std::string& a, const std::string& b) const;

    // Cosine against a raw vector (used for domain-vector relatedness).
    std::optional<double> cosine_to(const std::string& key, const Eigen::VectorXd& v) const;

    /**
     * All candidates with cosine(w, c) >= tau, plus w itself at similarity
     * 1.0 whenever w is known, sorted by descending similarity (key ascending
     * on ties). Unknown w yields an empty list.
     */
    std::vector<std::pair<std::string, double>> neighbors_above(
        const std::string& w, double tau, std::span<const std::string> candidates) const;

private:
    double norm_of(const std::string& key) const;

    int dimension_ = 0;
    std::map<std::string, Eigen::VectorXd> vectors_;
    std::map<std::string, double> norms_;
};

// Cosine of two dense vectors; zero norm on either side gives 0.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

} // namespace chatrank
