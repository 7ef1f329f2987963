// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/embeddings.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "chatrank/errors.hpp"

namespace chatrank {

EmbeddingStore::EmbeddingStore(int dimension, std::map<std::string, Eigen::VectorXd> vectors)
    : dimension_(dimension), vectors_(std::move(vectors)) {
    for (const auto& [key, v] : vectors_) {
        if (v.size() != dimension_) {
            throw DataError("embedding dimension mismatch for key '" + key + "'");
        }
        norms_[key] = v.norm();
    }
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path,
                                    std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open embedding file: " + path.string());
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw DataError("embedding file is empty: " + path.string());
    }
    std::istringstream header_stream(header);
    std::int64_t count = 0;
    int dimension = 0;
    if (!(header_stream >> count >> dimension) || dimension <= 0 || count < 0) {
        throw DataError("bad embedding header '" + header + "' in " + path.string());
    }

    std::map<std::string, Eigen::VectorXd> vectors;
    std::string line;
    std::int64_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        ++row;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        Eigen::VectorXd v(dimension);
        int i = 0;
        double component = 0.0;
        while (i < dimension && (ls >> component)) {
            v[i++] = component;
        }
        if (i != dimension || (ls >> component)) {
            throw DataError("embedding row " + std::to_string(row) + " (key '" + key +
                            "') does not have " + std::to_string(dimension) + " components");
        }
        auto [it, inserted] = vectors.insert_or_assign(key, std::move(v));
        if (!inserted && warnings != nullptr) {
            warnings->push_back("duplicate embedding key '" + key + "', last row wins");
        }
    }
    return EmbeddingStore(dimension, std::move(vectors));
}

const Eigen::VectorXd* EmbeddingStore::vector(const std::string& key) const {
    auto it = vectors_.find(key);
    return it == vectors_.end() ? nullptr : &it->second;
}

double EmbeddingStore::norm_of(const std::string& key) const {
    auto it = norms_.find(key);
    return it == norms_.end() ? 0.0 : it->second;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

std::optional<double> EmbeddingStore::cosine(const std::string& a, const std::string& b) const {
    const Eigen::VectorXd* va = vector(a);
    const Eigen::VectorXd* vb = vector(b);
    if (va == nullptr || vb == nullptr) {
        return std::nullopt;
    }
    const double na = norm_of(a);
    const double nb = norm_of(b);
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    if (a == b) {
        return 1.0;
    }
    return std::clamp(va->dot(*vb) / (na * nb), -1.0, 1.0);
}

std::optional<double> EmbeddingStore::cosine_to(const std::string& key,
                                                const Eigen::VectorXd& v) const {
    const Eigen::VectorXd* vk = vector(key);
    if (vk == nullptr) {
        return std::nullopt;
    }
    return cosine_similarity(*vk, v);
}

std::vector<std::pair<std::string, double>> EmbeddingStore::neighbors_above(
    const std::string& w, double tau, std::span<const std::string> candidates) const {
    std::vector<std::pair<std::string, double>> result;
    if (!contains(w)) {
        return result;
    }
    result.emplace_back(w, 1.0);
    for (const auto& candidate : candidates) {
        if (candidate == w) {
            continue;
        }
        auto sim = cosine(w, candidate);
        if (sim.has_value() && *sim >= tau) {
            result.emplace_back(candidate, *sim);
        }
    }
    std::sort(result.begin(), result.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return result;
}

} // namespace chatrank
