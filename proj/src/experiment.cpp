// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "chatrank/domain_vocab.hpp"
#include "chatrank/errors.hpp"
#include "chatrank/user_model.hpp"

namespace chatrank {

namespace {

constexpr int kFolds = 10;
constexpr const char* kMetricOrder[] = {"ndcg20", "ndcg_top10", "p1"};

// Keys whose comma-separated values sweep a grid dimension, in the order the
// dimensions nest (first key varies slowest) and cell-name parts appear.
constexpr const char* kGridKeyOrder[] = {"ranker", "source",      "scope",  "spy",
                                         "expansion", "lambda",   "mu",     "k1",
                                         "b",         "tau",      "tau_sim", "m",
                                         "seed",      "knrm_epochs", "knrm_lr"};

std::string trim(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
        --end;
    }
    return std::string(s.substr(begin, end - begin));
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double parsed = std::stod(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument(value);
        }
        return parsed;
    } catch (const std::exception&) {
        throw UsageError(key + ": not a number: " + value);
    }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::int64_t parsed = std::stoll(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument(value);
        }
        return parsed;
    } catch (const std::exception&) {
        throw UsageError(key + ": not an integer: " + value);
    }
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(value);
    while (std::getline(in, part, ',')) {
        parts.push_back(trim(part));
    }
    return parts;
}

std::vector<std::string> canonical_metrics(const std::string& key, const std::string& value) {
    const auto requested = split_list(value);
    std::set<std::string> seen;
    for (const auto& metric : requested) {
        bool known = false;
        for (const char* name : kMetricOrder) {
            known = known || metric == name;
        }
        if (!known) {
            throw UsageError(key + ": unknown metric: " + metric);
        }
        seen.insert(metric);
    }
    std::vector<std::string> ordered;
    for (const char* name : kMetricOrder) {
        if (seen.count(name) > 0) {
            ordered.push_back(name);
        }
    }
    if (ordered.empty()) {
        throw UsageError(key + ": at least one metric required");
    }
    return ordered;
}

ModelSource to_model_source(SourceKind source) {
    switch (source) {
        case SourceKind::questionnaire: return ModelSource::questionnaire;
        case SourceKind::chats: return ModelSource::chats;
        case SourceKind::query_only: break;
    }
    throw UsageError("query-only has no user-model source");
}

struct PairJudgments {
    std::map<std::string, int> random20;
    std::map<std::string, int> top10;
};

using PairKey = std::pair<std::string, std::string>; // (user, query_id)

std::map<PairKey, PairJudgments> collect_pairs(const Dataset& data) {
    std::map<PairKey, PairJudgments> pairs;
    for (const auto& j : data.judgments) {
        auto& pair = pairs[{j.user, j.query_id}];
        auto& grades = j.pool_tag == PoolTag::random20 ? pair.random20 : pair.top10;
        if (!grades.emplace(j.doc_id, j.grade).second) {
            throw DataError("duplicate judgment: user " + j.user + " query " + j.query_id +
                            " doc " + j.doc_id + " pool " + to_string(j.pool_tag));
        }
    }
    if (pairs.empty()) {
        throw DataError("no (user, query) pairs in judgments");
    }
    for (const auto& [key, unused] : pairs) {
        data.query(key.second); // every judged query must be defined
    }
    return pairs;
}

/**
 * Per-configuration scoring state: lazily built and cached query models,
 * user models (expanded when configured), spy weights, and domain vectors.
 * Caches are keyed so that scope- and expansion-dependent variants never
 * collide.
 */
class Runner {
public:
    Runner(const ExperimentConfig& cfg, const Dataset& data, const SpyWeights* spy_override)
        : cfg_(cfg), data_(data), spy_override_(spy_override) {}

    const SpyWeights* spy_for(Domain domain) {
        if (!cfg_.spy) {
            return nullptr;
        }
        if (spy_override_ != nullptr) {
            return spy_override_;
        }
        auto it = spy_cache_.find(domain);
        if (it == spy_cache_.end()) {
            auto stats = data_.domain_stats.find(domain);
            if (stats == data_.domain_stats.end() || !stats->second.has_docs()) {
                throw DataError("no documents in domain " + std::string(to_string(domain)) +
                                " for spy weights");
            }
            it = spy_cache_.emplace(domain, spy_weights(stats->second, data_.all_stats, domain))
                     .first;
        }
        return &it->second;
    }

    const QueryModel& query_model(const io::Query& q) {
        auto it = query_models_.find(q.query_id);
        if (it == query_models_.end()) {
            it = query_models_
                     .emplace(q.query_id,
                              build_query_model(q.query_id, q.domain, q.text, data_.tokenizer))
                     .first;
        }
        return it->second;
    }

    const std::vector<std::string>& query_tokens(const io::Query& q) {
        auto it = query_tokens_.find(q.query_id);
        if (it == query_tokens_.end()) {
            it = query_tokens_.emplace(q.query_id, data_.tokenizer.tokenize(q.text)).first;
        }
        return it->second;
    }

    const DomainVector& domain_vector_for(Domain domain) {
        auto it = domain_vectors_.find(domain);
        if (it == domain_vectors_.end()) {
            auto seed = cfg_.seed_entities.find(domain);
            if (seed == cfg_.seed_entities.end()) {
                throw UsageError("seed_entity_" + std::string(to_string(domain)) +
                                 ": required for expansion=" +
                                 std::string(to_string(cfg_.expansion)));
            }
            require_store("expansion=" + std::string(to_string(cfg_.expansion)));
            it = domain_vectors_.emplace(domain, domain_vector(seed->second, data_.store, cfg_.m))
                     .first;
        }
        return it->second;
    }

    // User model for one evaluation pair, or nullptr when the configuration
    // is query-only (the se ranker ignores personalization entirely).
    const UserModel* user_model_for(const std::string& user, Domain query_domain) {
        if (cfg_.ranker == Ranker::se || cfg_.source == SourceKind::query_only) {
            return nullptr;
        }
        std::optional<Domain> scope_domain;
        if (*cfg_.scope == ScopeConfig::Dom || *cfg_.scope == ScopeConfig::DomGen) {
            scope_domain = query_domain;
        }
        const bool expanded = cfg_.expansion != ExpansionVariant::none;
        const std::string key =
            user + "|" +
            (scope_domain.has_value() ? std::string(to_string(*scope_domain)) : "-") + "|" +
            (expanded ? std::string(to_string(query_domain)) : "-");
        auto it = user_models_.find(key);
        if (it != user_models_.end()) {
            return &it->second;
        }
        UserModel model =
            build_user_model(user, to_model_source(cfg_.source), *cfg_.scope, scope_domain,
                             data_.chats, data_.questionnaires, data_.tokenizer);
        if (expanded) {
            model = expand(model, user, query_domain);
        }
        return &user_models_.emplace(key, std::move(model)).first->second;
    }

    // Non-KNRM scorers; KNRM goes through cross-validation or a trained model.
    std::function<double(const TokenizedDoc&)> scorer(const std::string& user,
                                                      const io::Query& q,
                                                      const KnrmModel* knrm_model = nullptr) {
        switch (cfg_.ranker) {
            case Ranker::se: {
                const std::string query_id = q.query_id;
                const Dataset* data = &data_;
                return [data, query_id](const TokenizedDoc& doc) {
                    return -static_cast<double>(data->se_rank(query_id, doc.doc_id));
                };
            }
            case Ranker::lm: {
                const QueryModel* qm = &query_model(q);
                const UserModel* um = user_model_for(user, q.domain);
                const SpyWeights* spy = spy_for(q.domain);
                const double lambda = cfg_.resolved_lambda();
                const double mu = cfg_.mu.value_or(data_.all_stats.avg_doc_len());
                const BackgroundModel* bg = &data_.background;
                return [qm, um, lambda, mu, bg, spy](const TokenizedDoc& doc) {
                    return score_lm(*qm, um, doc, lambda, mu, *bg, spy);
                };
            }
            case Ranker::lm_embed: {
                require_store("ranker=lm-embed");
                const QueryModel* qm = &query_model(q);
                const UserModel* um = user_model_for(user, q.domain);
                const SpyWeights* spy = spy_for(q.domain);
                const double lambda = cfg_.resolved_lambda();
                const double mu = cfg_.mu.value_or(data_.all_stats.avg_doc_len());
                const double tau_sim = cfg_.tau_sim;
                const BackgroundModel* bg = &data_.background;
                const EmbeddingStore* store = &data_.store;
                return [qm, um, lambda, mu, bg, spy, store, tau_sim](const TokenizedDoc& doc) {
                    return score_lm_embed(*qm, um, doc, lambda, mu, *bg, spy, *store, tau_sim);
                };
            }
            case Ranker::bm25: {
                const std::vector<std::string>* terms = &query_tokens(q);
                const UserModel* um = user_model_for(user, q.domain);
                const SpyWeights* spy = spy_for(q.domain);
                const Bm25Params params{cfg_.k1, cfg_.b};
                const CorpusStats* stats = &data_.all_stats;
                return [terms, um, stats, params, spy](const TokenizedDoc& doc) {
                    return score_bm25(*terms, um, doc, *stats, params, spy);
                };
            }
            case Ranker::knrm:
            case Ranker::knrm_all: {
                if (knrm_model == nullptr) {
                    throw UsageError("KNRM scoring requires a trained model");
                }
                require_store("ranker=" + std::string(to_string(cfg_.ranker)));
                std::vector<std::string> q_terms =
                    knrm_query_terms(user, q, knrm_model->max_query_terms);
                const KnrmModel* model = knrm_model;
                const EmbeddingStore* store = &data_.store;
                Runner* self = this;
                return [self, q_terms = std::move(q_terms), model,
                        store](const TokenizedDoc& doc) {
                    const auto& d_terms = self->doc_terms(doc.doc_id, model->max_doc_terms);
                    return knrm_score(*model, q_terms, d_terms, *store);
                };
            }
        }
        throw UsageError("unknown ranker");
    }

    // Query-plus-user term selection for KNRM, by descending (optionally
    // spy-weighted) count.
    std::vector<std::string> knrm_query_terms(const std::string& user, const io::Query& q,
                                              std::size_t max_terms) {
        std::map<std::string, double> counts;
        for (const auto& token : query_tokens(q)) {
            counts[token] += 1.0;
        }
        if (const UserModel* um = user_model_for(user, q.domain)) {
            for (const auto& [term, count] : um->term_counts) {
                counts[term] += count;
            }
        }
        if (const SpyWeights* spy = spy_for(q.domain)) {
            for (auto& [term, count] : counts) {
                count *= spy->weight(term);
            }
        }
        return top_terms(counts, max_terms);
    }

    // Keyed by doc id only: one configuration uses a single term cap.
    const std::vector<std::string>& doc_terms(const std::string& doc_id, std::size_t max_terms) {
        auto it = doc_terms_.find(doc_id);
        if (it == doc_terms_.end()) {
            it = doc_terms_.emplace(doc_id, top_terms(data_.doc(doc_id).counts, max_terms))
                     .first;
        }
        return it->second;
    }

    std::vector<ScoredDoc> rank_judged(const std::map<std::string, int>& grades,
                                       const std::function<double(const TokenizedDoc&)>& score) {
        std::vector<const TokenizedDoc*> pool;
        pool.reserve(grades.size());
        for (const auto& [doc_id, unused] : grades) {
            pool.push_back(&data_.doc(doc_id));
        }
        return rerank(pool, score);
    }

    std::vector<std::string>& warnings() { return warnings_; }

private:
    void require_store(const std::string& feature) const {
        if (!data_.has_store) {
            throw UsageError("vectors_file: required for " + feature);
        }
    }

    UserModel expand(const UserModel& base, const std::string& user, Domain query_domain) {
        std::vector<EntityAnnotation> own;
        const AnnotationKind kind = cfg_.source == SourceKind::chats
                                        ? AnnotationKind::chat
                                        : AnnotationKind::questionnaire;
        for (const auto& a : data_.annotations) {
            if (a.user == user && a.kind == kind) {
                own.push_back(a);
            }
        }
        const DomainVector* dv = nullptr;
        const EmbeddingStore* store = nullptr;
        if (cfg_.expansion == ExpansionVariant::domain ||
            cfg_.expansion == ExpansionVariant::ne_dom) {
            dv = &domain_vector_for(query_domain);
            store = &data_.store;
        }
        const std::set<std::string> selected =
            select_entities(own, cfg_.expansion, dv, cfg_.tau, store);
        return expand_user_model(base, selected, data_.catalog, data_.tokenizer,
                                 spy_for(query_domain), &warnings_);
    }

    const ExperimentConfig& cfg_;
    const Dataset& data_;
    const SpyWeights* spy_override_;
    std::map<Domain, SpyWeights> spy_cache_;
    std::map<std::string, QueryModel> query_models_;
    std::map<std::string, std::vector<std::string>> query_tokens_;
    std::map<std::string, UserModel> user_models_;
    std::map<Domain, DomainVector> domain_vectors_;
    std::map<std::string, std::vector<std::string>> doc_terms_;
    std::vector<std::string> warnings_;
};

bool wants_metric(const ExperimentConfig& cfg, std::string_view metric) {
    return std::find(cfg.metrics.begin(), cfg.metrics.end(), metric) != cfg.metrics.end();
}

void add_pair_metrics(const ExperimentConfig& cfg, Runner& runner, const PairKey& key,
                      const PairJudgments& judged,
                      const std::function<double(const TokenizedDoc&)>& score,
                      MetricReport& report, Domain domain) {
    MetricRow row;
    row.user = key.first;
    row.query_id = key.second;
    row.domain = domain;
    if (!judged.random20.empty() &&
        (wants_metric(cfg, "ndcg20") || wants_metric(cfg, "p1"))) {
        const auto ranking = runner.rank_judged(judged.random20, score);
        if (wants_metric(cfg, "ndcg20")) {
            row.values["ndcg20"] = ndcg_at_k(ranking, judged.random20, 20);
        }
        if (wants_metric(cfg, "p1")) {
            row.values["p1"] = static_cast<double>(precision_at_1(ranking, judged.random20));
        }
    }
    if (!judged.top10.empty() && wants_metric(cfg, "ndcg_top10")) {
        const auto ranking = runner.rank_judged(judged.top10, score);
        row.values["ndcg_top10"] = ndcg_at_k(ranking, judged.top10, 10);
    }
    report.rows.push_back(std::move(row));
}

std::string sanitize_name(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' ||
                          c == '-' || c == '=';
        out += keep ? c : '-';
    }
    return out;
}

} // namespace

Ranker ranker_from_string(std::string_view s) {
    if (s == "lm") return Ranker::lm;
    if (s == "lm-embed") return Ranker::lm_embed;
    if (s == "bm25") return Ranker::bm25;
    if (s == "knrm") return Ranker::knrm;
    if (s == "knrm-all") return Ranker::knrm_all;
    if (s == "se") return Ranker::se;
    throw UsageError("ranker: unknown value: " + std::string(s));
}

std::string_view to_string(Ranker r) {
    switch (r) {
        case Ranker::lm: return "lm";
        case Ranker::lm_embed: return "lm-embed";
        case Ranker::bm25: return "bm25";
        case Ranker::knrm: return "knrm";
        case Ranker::knrm_all: return "knrm-all";
        case Ranker::se: return "se";
    }
    return "?";
}

SourceKind source_kind_from_string(std::string_view s) {
    if (s == "query-only") return SourceKind::query_only;
    if (s == "questionnaire") return SourceKind::questionnaire;
    if (s == "chats") return SourceKind::chats;
    throw UsageError("source: unknown value: " + std::string(s));
}

std::string_view to_string(SourceKind s) {
    switch (s) {
        case SourceKind::query_only: return "query-only";
        case SourceKind::questionnaire: return "questionnaire";
        case SourceKind::chats: return "chats";
    }
    return "?";
}

ConfigEntries parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open config file: " + path.string());
    }
    ConfigEntries entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text.front() == '#') {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("expected key=value at " + path.string() + ":" +
                             std::to_string(line_no));
        }
        entries.emplace_back(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    }
    return entries;
}

std::pair<std::string, std::string> parse_override(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw UsageError("expected key=value: " + std::string(text));
    }
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

void apply_entry(ExperimentConfig& config, const std::string& key, const std::string& value) {
    if (key == "name") {
        config.name = value;
    } else if (key == "ranker") {
        config.ranker = ranker_from_string(value);
    } else if (key == "source") {
        config.source = source_kind_from_string(value);
    } else if (key == "scope") {
        config.scope = scope_config_from_string(value);
    } else if (key == "spy") {
        if (value == "on") {
            config.spy = true;
        } else if (value == "off") {
            config.spy = false;
        } else {
            throw UsageError("spy: expected on or off, got " + value);
        }
    } else if (key == "expansion") {
        config.expansion = expansion_variant_from_string(value);
    } else if (key == "lambda") {
        config.lambda = parse_double(key, value);
    } else if (key == "mu") {
        config.mu = parse_double(key, value);
    } else if (key == "k1") {
        config.k1 = parse_double(key, value);
    } else if (key == "b") {
        config.b = parse_double(key, value);
    } else if (key == "tau") {
        config.tau = parse_double(key, value);
    } else if (key == "tau_sim") {
        config.tau_sim = parse_double(key, value);
    } else if (key == "m") {
        config.m = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
        config.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "knrm_epochs") {
        config.knrm_epochs = static_cast<int>(parse_int(key, value));
    } else if (key == "knrm_lr") {
        config.knrm_lr = parse_double(key, value);
    } else if (key == "metrics") {
        config.metrics = canonical_metrics(key, value);
    } else if (key == "seed_entity_books") {
        config.seed_entities[Domain::books] = value;
    } else if (key == "seed_entity_travel") {
        config.seed_entities[Domain::travel] = value;
    } else if (key == "seed_entity_food") {
        config.seed_entities[Domain::food] = value;
    } else if (key == "docs_file") {
        config.paths.docs = value;
    } else if (key == "stopwords_file") {
        config.paths.stopwords = value;
    } else if (key == "chats_file") {
        config.paths.chats = value;
    } else if (key == "questionnaires_file") {
        config.paths.questionnaires = value;
    } else if (key == "annotations_file") {
        config.paths.annotations = value;
    } else if (key == "catalog_file") {
        config.paths.catalog = value;
    } else if (key == "vectors_file") {
        config.paths.vectors = value;
    } else if (key == "queries_file") {
        config.paths.queries = value;
    } else if (key == "pools_file") {
        config.paths.pools = value;
    } else if (key == "judgments_file") {
        config.paths.judgments = value;
    } else if (key == "background_file") {
        config.paths.background = value;
    } else {
        throw UsageError("unknown config key: " + key);
    }
}

ExperimentConfig config_from_entries(const ConfigEntries& entries) {
    ExperimentConfig config;
    for (const auto& [key, value] : entries) {
        apply_entry(config, key, value);
    }
    return config;
}

void validate(const ExperimentConfig& config) {
    if (config.ranker != Ranker::se) {
        if (config.source == SourceKind::query_only) {
            if (config.scope.has_value()) {
                throw UsageError("scope: not allowed with source=query-only");
            }
            if (config.expansion != ExpansionVariant::none) {
                throw UsageError("expansion: not allowed with source=query-only");
            }
        } else if (!config.scope.has_value()) {
            throw UsageError("scope: required when source=" +
                             std::string(to_string(config.source)));
        }
    }
    if (config.lambda.has_value() && (*config.lambda < 0.0 || *config.lambda > 1.0)) {
        throw UsageError("lambda: must be in [0, 1]");
    }
    if (config.mu.has_value() && *config.mu <= 0.0) {
        throw UsageError("mu: must be positive");
    }
    if (config.k1 <= 0.0) {
        throw UsageError("k1: must be positive");
    }
    if (config.b < 0.0 || config.b > 1.0) {
        throw UsageError("b: must be in [0, 1]");
    }
    if (config.m < 1) {
        throw UsageError("m: must be >= 1");
    }
    if (config.knrm_epochs < 1) {
        throw UsageError("knrm_epochs: must be >= 1");
    }
    if (config.knrm_lr <= 0.0) {
        throw UsageError("knrm_lr: must be positive");
    }
    if ((config.expansion == ExpansionVariant::domain ||
         config.expansion == ExpansionVariant::ne_dom) &&
        !config.tau.has_value()) {
        throw UsageError("tau: required for expansion=" +
                         std::string(to_string(config.expansion)));
    }
    if (config.metrics.empty()) {
        throw UsageError("metrics: at least one required");
    }
}

std::vector<ExperimentConfig> expand_grid(const ConfigEntries& entries) {
    std::map<std::string, std::string> collapsed;
    for (const auto& [key, value] : entries) {
        collapsed[key] = value;
    }
    std::vector<std::pair<std::string, std::vector<std::string>>> dims;
    for (const char* key : kGridKeyOrder) {
        auto it = collapsed.find(key);
        if (it == collapsed.end() || it->second.find(',') == std::string::npos) {
            continue;
        }
        auto values = split_list(it->second);
        for (const auto& v : values) {
            if (v.empty()) {
                throw UsageError(std::string(key) + ": empty value in grid list");
            }
        }
        dims.emplace_back(key, std::move(values));
        collapsed.erase(it);
    }

    ConfigEntries base;
    base.reserve(collapsed.size());
    for (const auto& [key, value] : collapsed) {
        base.emplace_back(key, value);
    }

    std::vector<ExperimentConfig> cells;
    std::vector<std::size_t> odometer(dims.size(), 0);
    while (true) {
        ConfigEntries cell_entries = base;
        std::string suffix;
        for (std::size_t d = 0; d < dims.size(); ++d) {
            cell_entries.emplace_back(dims[d].first, dims[d].second[odometer[d]]);
            suffix += "." + dims[d].first + "=" + dims[d].second[odometer[d]];
        }
        ExperimentConfig config = config_from_entries(cell_entries);
        config.name += suffix;
        validate(config);
        cells.push_back(std::move(config));
        // Advance the odometer, last dimension fastest.
        std::size_t d = dims.size();
        while (d > 0) {
            --d;
            if (++odometer[d] < dims[d].second.size()) {
                break;
            }
            odometer[d] = 0;
            if (d == 0) {
                return cells;
            }
        }
        if (dims.empty()) {
            return cells;
        }
    }
}

Dataset Dataset::load(const DataPaths& paths) {
    Dataset data;
    if (paths.docs.empty()) {
        throw UsageError("docs_file: required");
    }
    if (paths.queries.empty()) {
        throw UsageError("queries_file: required");
    }
    data.tokenizer =
        paths.stopwords.empty() ? Tokenizer() : Tokenizer::from_stopword_file(paths.stopwords);

    auto ingest = ingest_documents(io::load_documents(paths.docs), data.tokenizer);
    data.documents = std::move(ingest.documents);
    data.tokenized = std::move(ingest.tokenized);
    data.all_stats = std::move(ingest.stats);
    for (std::size_t i = 0; i < data.tokenized.size(); ++i) {
        data.doc_index.emplace(data.tokenized[i].doc_id, i);
    }
    for (Domain domain : kAllDomains) {
        std::vector<TokenizedDoc> subset;
        for (std::size_t i = 0; i < data.documents.size(); ++i) {
            if (data.documents[i].domain == domain) {
                subset.push_back(data.tokenized[i]);
            }
        }
        if (!subset.empty()) {
            data.domain_stats.emplace(domain, corpus_stats(subset));
        }
    }

    if (!paths.background.empty()) {
        CorpusStats external;
        external.collection_frequency = io::load_term_counts(paths.background);
        for (const auto& [term, count] : external.collection_frequency) {
            external.total_tokens += count;
        }
        external.doc_count = 1;
        data.background = background_model(external);
    } else {
        data.background = background_model(data.all_stats);
    }

    if (!paths.chats.empty()) {
        data.chats = io::load_chats(paths.chats);
    }
    if (!paths.questionnaires.empty()) {
        data.questionnaires = io::load_questionnaires(paths.questionnaires);
    }
    if (!paths.annotations.empty()) {
        data.annotations = io::load_annotations(paths.annotations);
    }
    if (!paths.catalog.empty()) {
        data.catalog = io::load_catalog(paths.catalog);
    }
    if (!paths.vectors.empty()) {
        data.store = EmbeddingStore::load(paths.vectors, &data.warnings);
        data.has_store = true;
    }

    for (auto& query : io::load_queries(paths.queries)) {
        const std::string id = query.query_id;
        if (!data.queries.emplace(id, std::move(query)).second) {
            throw DataError("duplicate query_id: " + id);
        }
    }
    if (!paths.pools.empty()) {
        for (const auto& entry : io::load_pools(paths.pools)) {
            if (!data.se_ranks.emplace(std::make_pair(entry.query_id, entry.doc_id),
                                       entry.se_rank)
                     .second) {
                throw DataError("duplicate pool entry: query " + entry.query_id + " doc " +
                                entry.doc_id);
            }
            data.pools_by_query[entry.query_id].push_back(entry);
        }
        for (auto& [query_id, pool] : data.pools_by_query) {
            std::sort(pool.begin(), pool.end(),
                      [](const io::PoolEntry& a, const io::PoolEntry& b) {
                          if (a.se_rank != b.se_rank) return a.se_rank < b.se_rank;
                          return a.doc_id < b.doc_id;
                      });
        }
    }
    if (!paths.judgments.empty()) {
        data.judgments = io::load_judgments(paths.judgments);
    }
    return data;
}

const TokenizedDoc& Dataset::doc(const std::string& doc_id) const {
    auto it = doc_index.find(doc_id);
    if (it == doc_index.end()) {
        throw DataError("unknown document: " + doc_id);
    }
    return tokenized[it->second];
}

const io::Query& Dataset::query(const std::string& query_id) const {
    auto it = queries.find(query_id);
    if (it == queries.end()) {
        throw DataError("unknown query: " + query_id);
    }
    return it->second;
}

int Dataset::se_rank(const std::string& query_id, const std::string& doc_id) const {
    auto it = se_ranks.find({query_id, doc_id});
    if (it == se_ranks.end()) {
        throw DataError("no se_rank for query " + query_id + " doc " + doc_id);
    }
    return it->second;
}

MetricReport run_experiment(const ExperimentConfig& config, const Dataset& data,
                            const SpyWeights* spy_override) {
    validate(config);
    if (config.ranker == Ranker::knrm || config.ranker == Ranker::knrm_all) {
        return cross_validate_knrm(config, data, spy_override);
    }
    if (config.paths.judgments.empty()) {
        throw UsageError("judgments_file: required");
    }
    if (config.ranker == Ranker::se && config.paths.pools.empty()) {
        throw UsageError("pools_file: required for ranker=se");
    }
    Runner runner(config, data, spy_override);
    const auto pairs = collect_pairs(data);

    MetricReport report;
    report.name = config.name;
    report.metric_names = config.metrics;
    for (const auto& [key, judged] : pairs) {
        const io::Query& q = data.query(key.second);
        const auto score = runner.scorer(key.first, q);
        add_pair_metrics(config, runner, key, judged, score, report, q.domain);
    }
    report.finalize();
    return report;
}

namespace {

struct CvPair {
    PairKey key;
    const PairJudgments* judged = nullptr;
    Domain domain = Domain::books;
};

// Feature cache shared across folds: kernels never change, so phi per
// (pair, document) is computed once.
class PhiCache {
public:
    PhiCache(const KnrmModel& model, const EmbeddingStore& store, Runner& runner)
        : model_(model), store_(store), runner_(runner) {}

    const Eigen::VectorXd& get(const CvPair& pair, const std::vector<std::string>& q_terms,
                               const std::string& doc_id) {
        const auto key = std::make_tuple(pair.key.first, pair.key.second, doc_id);
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            it = cache_
                     .emplace(key, knrm_features(model_, q_terms,
                                                 runner_.doc_terms(doc_id,
                                                                   model_.max_doc_terms),
                                                 store_))
                     .first;
        }
        return it->second;
    }

private:
    const KnrmModel& model_;
    const EmbeddingStore& store_;
    Runner& runner_;
    std::map<std::tuple<std::string, std::string, std::string>, Eigen::VectorXd> cache_;
};

// Ranks one judged pool by w . phi + bias using cached features.
std::vector<ScoredDoc> rank_by_model(const KnrmModel& model, const CvPair& pair,
                                     const std::vector<std::string>& q_terms,
                                     const std::map<std::string, int>& grades, PhiCache& phis,
                                     Runner& runner) {
    std::map<std::string, double> scores;
    for (const auto& [doc_id, unused] : grades) {
        scores[doc_id] = model.weights.dot(phis.get(pair, q_terms, doc_id)) + model.bias;
    }
    return runner.rank_judged(grades, [&scores](const TokenizedDoc& doc) {
        return scores.at(doc.doc_id);
    });
}

double mean_validation_ndcg(const KnrmModel& model, std::span<const std::size_t> val,
                            std::span<const CvPair> pairs,
                            const std::map<PairKey, std::vector<std::string>>& q_terms,
                            PhiCache& phis, Runner& runner) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t idx : val) {
        const CvPair& pair = pairs[idx];
        if (pair.judged->random20.empty()) {
            continue;
        }
        const auto& terms = q_terms.at(pair.key);
        const auto ranking =
            rank_by_model(model, pair, terms, pair.judged->random20, phis, runner);
        sum += ndcg_at_k(ranking, pair.judged->random20, 20);
        ++counted;
    }
    return counted > 0 ? sum / static_cast<double>(counted) : 0.0;
}

// Grade-ordered (positive, negative) feature pairs from the training folds.
std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> training_features(
    std::span<const std::size_t> train, std::span<const CvPair> pairs,
    const std::map<PairKey, std::vector<std::string>>& q_terms, PhiCache& phis) {
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> features;
    for (std::size_t idx : train) {
        const CvPair& pair = pairs[idx];
        const auto& terms = q_terms.at(pair.key);
        const auto& grades = pair.judged->random20;
        for (const auto& [pos_id, pos_grade] : grades) {
            for (const auto& [neg_id, neg_grade] : grades) {
                if (pos_grade > neg_grade) {
                    features.emplace_back(phis.get(pair, terms, pos_id),
                                          phis.get(pair, terms, neg_id));
                }
            }
        }
    }
    return features;
}

void run_cv_group(const ExperimentConfig& config, std::span<const CvPair> pairs,
                  std::span<const int> fold_of, Runner& runner, const Dataset& data,
                  MetricReport& report) {
    const KnrmModel init = KnrmModel::default_bank(config.seed);
    PhiCache phis(init, data.store, runner);

    std::map<PairKey, std::vector<std::string>> q_terms;
    for (const auto& pair : pairs) {
        q_terms.emplace(pair.key,
                        runner.knrm_query_terms(pair.key.first, data.query(pair.key.second),
                                                init.max_query_terms));
    }

    for (int rotation = 0; rotation < kFolds; ++rotation) {
        const int val_fold = (rotation + 1) % kFolds;
        std::vector<std::size_t> test;
        std::vector<std::size_t> val;
        std::vector<std::size_t> train;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            if (fold_of[i] == rotation) {
                test.push_back(i);
            } else if (fold_of[i] == val_fold) {
                val.push_back(i);
            } else {
                train.push_back(i);
            }
        }

        const auto features = training_features(train, pairs, q_terms, phis);
        KnrmModel current = init;
        KnrmModel best = init;
        double best_ndcg = -1.0;
        for (int epoch = 1; epoch <= config.knrm_epochs; ++epoch) {
            current = knrm_train_features(std::move(current), features, 1, config.knrm_lr);
            const double val_ndcg =
                mean_validation_ndcg(current, val, pairs, q_terms, phis, runner);
            if (val_ndcg > best_ndcg) {
                best_ndcg = val_ndcg;
                best = current;
            }
        }

        for (std::size_t idx : test) {
            const CvPair& pair = pairs[idx];
            const auto& terms = q_terms.at(pair.key);
            MetricRow row;
            row.user = pair.key.first;
            row.query_id = pair.key.second;
            row.domain = pair.domain;
            if (!pair.judged->random20.empty() &&
                (wants_metric(config, "ndcg20") || wants_metric(config, "p1"))) {
                const auto ranking =
                    rank_by_model(best, pair, terms, pair.judged->random20, phis, runner);
                if (wants_metric(config, "ndcg20")) {
                    row.values["ndcg20"] = ndcg_at_k(ranking, pair.judged->random20, 20);
                }
                if (wants_metric(config, "p1")) {
                    row.values["p1"] =
                        static_cast<double>(precision_at_1(ranking, pair.judged->random20));
                }
            }
            if (!pair.judged->top10.empty() && wants_metric(config, "ndcg_top10")) {
                const auto ranking =
                    rank_by_model(best, pair, terms, pair.judged->top10, phis, runner);
                row.values["ndcg_top10"] = ndcg_at_k(ranking, pair.judged->top10, 10);
            }
            report.rows.push_back(std::move(row));
        }
    }
}

std::uint64_t domain_seed(std::uint64_t seed, Domain domain) {
    return seed + static_cast<std::uint64_t>(domain);
}

} // namespace

MetricReport cross_validate_knrm(const ExperimentConfig& config, const Dataset& data,
                                 const SpyWeights* spy_override) {
    validate(config);
    if (!data.has_store) {
        throw UsageError("vectors_file: required for ranker=" +
                         std::string(to_string(config.ranker)));
    }
    if (config.paths.judgments.empty()) {
        throw UsageError("judgments_file: required");
    }
    Runner runner(config, data, spy_override);
    const auto pair_map = collect_pairs(data);
    std::vector<CvPair> pairs;
    pairs.reserve(pair_map.size());
    for (const auto& [key, judged] : pair_map) {
        pairs.push_back(CvPair{key, &judged, data.query(key.second).domain});
    }

    MetricReport report;
    report.name = config.name;
    report.metric_names = config.metrics;

    if (config.ranker == Ranker::knrm) {
        // One model per domain, folds within the domain.
        for (Domain domain : kAllDomains) {
            std::vector<CvPair> group;
            for (const auto& pair : pairs) {
                if (pair.domain == domain) {
                    group.push_back(pair);
                }
            }
            if (group.empty()) {
                continue;
            }
            if (group.size() < kFolds) {
                throw DataError("fewer than 10 (user, query) pairs for domain " +
                                std::string(to_string(domain)));
            }
            const auto fold_of =
                assign_folds(group.size(), kFolds, domain_seed(config.seed, domain));
            run_cv_group(config, group, fold_of, runner, data, report);
        }
    } else {
        // One model over all domains; folds stratified per domain.
        if (pairs.size() < static_cast<std::size_t>(kFolds)) {
            throw DataError("fewer than 10 (user, query) pairs");
        }
        std::vector<int> fold_of(pairs.size(), 0);
        for (Domain domain : kAllDomains) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                if (pairs[i].domain == domain) {
                    members.push_back(i);
                }
            }
            const auto folds =
                assign_folds(members.size(), kFolds, domain_seed(config.seed, domain));
            for (std::size_t j = 0; j < members.size(); ++j) {
                fold_of[members[j]] = folds[j];
            }
        }
        run_cv_group(config, pairs, fold_of, runner, data, report);
    }

    report.finalize();
    return report;
}

KnrmModel train_knrm_full(const ExperimentConfig& config, const Dataset& data,
                          std::optional<Domain> domain) {
    validate(config);
    if (!data.has_store) {
        throw UsageError("vectors_file: required for ranker=" +
                         std::string(to_string(config.ranker)));
    }
    if (config.paths.judgments.empty()) {
        throw UsageError("judgments_file: required");
    }
    Runner runner(config, data, nullptr);
    const auto pair_map = collect_pairs(data);
    const KnrmModel init = KnrmModel::default_bank(config.seed);
    PhiCache phis(init, data.store, runner);

    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> features;
    for (const auto& [key, judged] : pair_map) {
        const io::Query& q = data.query(key.second);
        if (domain.has_value() && q.domain != *domain) {
            continue;
        }
        CvPair pair{key, &judged, q.domain};
        const auto terms = runner.knrm_query_terms(key.first, q, init.max_query_terms);
        for (const auto& [pos_id, pos_grade] : judged.random20) {
            for (const auto& [neg_id, neg_grade] : judged.random20) {
                if (pos_grade > neg_grade) {
                    features.emplace_back(phis.get(pair, terms, pos_id),
                                          phis.get(pair, terms, neg_id));
                }
            }
        }
    }
    return knrm_train_features(init, features, config.knrm_epochs, config.knrm_lr);
}

std::vector<ScoredDoc> rank_pool(const ExperimentConfig& config, const Dataset& data,
                                 const std::string& user, const std::string& query_id,
                                 const KnrmModel* knrm_model) {
    validate(config);
    if (config.paths.pools.empty()) {
        throw UsageError("pools_file: required for ranking a pool");
    }
    auto pool_it = data.pools_by_query.find(query_id);
    if (pool_it == data.pools_by_query.end()) {
        throw DataError("no pool for query: " + query_id);
    }
    const io::Query& q = data.query(query_id);
    Runner runner(config, data, nullptr);
    const auto score = runner.scorer(user, q, knrm_model);
    std::vector<const TokenizedDoc*> pool;
    pool.reserve(pool_it->second.size());
    for (const auto& entry : pool_it->second) {
        pool.push_back(&data.doc(entry.doc_id));
    }
    return rerank(pool, score);
}

std::vector<MetricReport> run_grid(const std::vector<ExperimentConfig>& cells,
                                   const Dataset& data,
                                   const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<MetricReport> reports;
    reports.reserve(cells.size());
    for (const auto& cell : cells) {
        MetricReport report = run_experiment(cell, data);
        const std::string stem = sanitize_name(report.name);
        io::write_file_atomic(out_dir / (stem + ".txt"), report.to_text());
        io::write_file_atomic(out_dir / (stem + ".jsonl"), report.to_jsonl());
        reports.push_back(std::move(report));
    }
    return reports;
}

} // namespace chatrank
