// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

// Command-line front end: ingestion, model building, spy weights, domain
// vectors, expansion, ranking, KNRM training, evaluation, and experiment
// grids. Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "chatrank/errors.hpp"
#include "chatrank/experiment.hpp"
#include "chatrank/io.hpp"

namespace {

using namespace chatrank;

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& warning : warnings) {
        std::cerr << "warning: " << warning << "\n";
    }
}

Tokenizer make_tokenizer(const std::string& stopwords_path) {
    return stopwords_path.empty() ? Tokenizer() : Tokenizer::from_stopword_file(stopwords_path);
}

ExperimentConfig assemble_config(const std::string& config_path,
                                 const std::vector<std::string>& sets) {
    ConfigEntries entries;
    if (!config_path.empty()) {
        entries = parse_config_file(config_path);
    }
    for (const auto& set : sets) {
        entries.push_back(parse_override(set));
    }
    return config_from_entries(entries);
}

ConfigEntries assemble_entries(const std::string& config_path,
                               const std::vector<std::string>& sets) {
    ConfigEntries entries;
    if (!config_path.empty()) {
        entries = parse_config_file(config_path);
    }
    for (const auto& set : sets) {
        entries.push_back(parse_override(set));
    }
    return entries;
}

std::string fmt_score(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"chat-based personalized re-ranking experiments"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "tokenize documents and write corpus stats");
    std::string ingest_docs;
    std::string ingest_stopwords;
    std::string ingest_domain;
    std::string ingest_out;
    ingest->add_option("--docs", ingest_docs, "documents JSONL")->required();
    ingest->add_option("--stopwords", ingest_stopwords, "stopword file, one term per line");
    ingest->add_option("--domain", ingest_domain, "restrict to one domain");
    ingest->add_option("--out", ingest_out, "output stats file")->required();
    ingest->callback([&] {
        auto docs = io::load_documents(ingest_docs);
        if (!ingest_domain.empty()) {
            const Domain domain = domain_from_string(ingest_domain);
            std::erase_if(docs, [domain](const Document& d) { return d.domain != domain; });
        }
        const auto result = ingest_documents(std::move(docs), make_tokenizer(ingest_stopwords));
        io::save_corpus_stats(ingest_out, result.stats);
        std::cout << "documents " << result.stats.doc_count << " tokens "
                  << result.stats.total_tokens << " terms "
                  << result.stats.collection_frequency.size() << "\n";
    });

    // build-model
    auto* build = app.add_subcommand("build-model", "build a user model from chats or answers");
    std::string build_chats;
    std::string build_questionnaires;
    std::string build_stopwords;
    std::string build_user;
    std::string build_source;
    std::string build_scope;
    std::string build_domain;
    std::string build_out;
    build->add_option("--chats", build_chats, "chats JSONL");
    build->add_option("--questionnaires", build_questionnaires, "questionnaires JSONL");
    build->add_option("--stopwords", build_stopwords, "stopword file");
    build->add_option("--user", build_user, "user id")->required();
    build->add_option("--source", build_source, "chats or questionnaire")->required();
    build->add_option("--scope", build_scope, "All, Gen, Dom, or DomGen")->required();
    build->add_option("--domain", build_domain, "domain for Dom/DomGen scopes");
    build->add_option("--out", build_out, "output model file")->required();
    build->callback([&] {
        std::vector<ChatSession> chats;
        std::vector<Questionnaire> questionnaires;
        if (!build_chats.empty()) {
            chats = io::load_chats(build_chats);
        }
        if (!build_questionnaires.empty()) {
            questionnaires = io::load_questionnaires(build_questionnaires);
        }
        std::optional<Domain> domain;
        if (!build_domain.empty()) {
            domain = domain_from_string(build_domain);
        }
        const UserModel model = build_user_model(
            build_user, model_source_from_string(build_source),
            scope_config_from_string(build_scope), domain, chats, questionnaires,
            make_tokenizer(build_stopwords));
        io::save_user_model(build_out, model);
        std::cout << "terms " << model.term_counts.size() << "\n";
    });

    // spy
    auto* spy = app.add_subcommand("spy", "domain-specificity weights from pooled corpora");
    std::string spy_docs;
    std::string spy_stopwords;
    std::string spy_domain;
    std::string spy_out;
    spy->add_option("--docs", spy_docs, "documents JSONL (all domains)")->required();
    spy->add_option("--stopwords", spy_stopwords, "stopword file");
    spy->add_option("--domain", spy_domain, "domain pool")->required();
    spy->add_option("--out", spy_out, "output term/weight file")->required();
    spy->callback([&] {
        const Domain domain = domain_from_string(spy_domain);
        const auto result =
            ingest_documents(io::load_documents(spy_docs), make_tokenizer(spy_stopwords));
        std::vector<TokenizedDoc> subset;
        for (std::size_t i = 0; i < result.documents.size(); ++i) {
            if (result.documents[i].domain == domain) {
                subset.push_back(result.tokenized[i]);
            }
        }
        const SpyWeights weights = spy_weights(corpus_stats(subset), result.stats, domain);
        io::save_spy_weights(spy_out, weights);
        std::cout << "terms " << weights.weights.size() << "\n";
    });

    // domain-vector
    auto* dvec = app.add_subcommand("domain-vector", "embedding centroid around a seed entity");
    std::string dvec_vectors;
    std::string dvec_seed;
    std::string dvec_domain;
    int dvec_m = 50;
    std::string dvec_out;
    dvec->add_option("--vectors", dvec_vectors, "embedding text file")->required();
    dvec->add_option("--seed-key", dvec_seed, "seed entity key")->required();
    dvec->add_option("--domain", dvec_domain, "domain label for the output");
    dvec->add_option("--m", dvec_m, "number of nearest keys to average");
    dvec->add_option("--out", dvec_out, "output vector file")->required();
    dvec->callback([&] {
        std::vector<std::string> warnings;
        const EmbeddingStore store = EmbeddingStore::load(dvec_vectors, &warnings);
        print_warnings(warnings);
        DomainVector dv = domain_vector(dvec_seed, store, dvec_m);
        if (!dvec_domain.empty()) {
            dv.domain = domain_from_string(dvec_domain);
        }
        io::save_domain_vector(dvec_out, dv);
        std::cout << "dim " << dv.vector.size() << " m " << dv.m << "\n";
    });

    // expand
    auto* expand = app.add_subcommand("expand", "add entity descriptions to a user model");
    std::string expand_model;
    std::string expand_annotations;
    std::string expand_catalog;
    std::string expand_stopwords;
    std::string expand_variant;
    std::string expand_dv;
    std::string expand_vectors;
    std::string expand_spy;
    std::string expand_spy_domain;
    double expand_tau = 0.0;
    std::string expand_out;
    expand->add_option("--model", expand_model, "user model file")->required();
    expand->add_option("--annotations", expand_annotations, "annotations JSONL")->required();
    expand->add_option("--catalog", expand_catalog, "entity catalog JSONL")->required();
    expand->add_option("--stopwords", expand_stopwords, "stopword file");
    expand->add_option("--variant", expand_variant, "none, all, domain, ne-all, ne-dom")
        ->required();
    expand->add_option("--domain-vector", expand_dv, "domain vector file");
    expand->add_option("--vectors", expand_vectors, "embedding text file");
    auto* tau_opt = expand->add_option("--tau", expand_tau, "relatedness threshold");
    expand->add_option("--spy", expand_spy, "spy weight file for merge weighting");
    expand->add_option("--spy-domain", expand_spy_domain, "domain of the spy weights");
    expand->add_option("--out", expand_out, "output model file")->required();
    expand->callback([&] {
        const UserModel model = io::load_user_model(expand_model);
        const auto annotations = io::load_annotations(expand_annotations);
        const EntityCatalog catalog = io::load_catalog(expand_catalog);
        const ExpansionVariant variant = expansion_variant_from_string(expand_variant);

        std::vector<EntityAnnotation> own;
        const AnnotationKind kind = model.source == ModelSource::chats
                                        ? AnnotationKind::chat
                                        : AnnotationKind::questionnaire;
        for (const auto& a : annotations) {
            if (a.user == model.user && a.kind == kind) {
                own.push_back(a);
            }
        }

        std::optional<DomainVector> dv;
        if (!expand_dv.empty()) {
            dv = io::load_domain_vector(expand_dv);
        }
        std::optional<EmbeddingStore> store;
        if (!expand_vectors.empty()) {
            std::vector<std::string> warnings;
            store = EmbeddingStore::load(expand_vectors, &warnings);
            print_warnings(warnings);
        }
        std::optional<double> tau;
        if (tau_opt->count() > 0) {
            tau = expand_tau;
        }
        std::optional<SpyWeights> spy;
        if (!expand_spy.empty()) {
            if (expand_spy_domain.empty()) {
                throw UsageError("--spy-domain: required with --spy");
            }
            spy = io::load_spy_weights(expand_spy, domain_from_string(expand_spy_domain));
        }

        const auto selected =
            select_entities(own, variant, dv.has_value() ? &*dv : nullptr, tau,
                            store.has_value() ? &*store : nullptr);
        std::vector<std::string> warnings;
        const UserModel expanded =
            expand_user_model(model, selected, catalog, make_tokenizer(expand_stopwords),
                              spy.has_value() ? &*spy : nullptr, &warnings);
        print_warnings(warnings);
        io::save_user_model(expand_out, expanded);
        std::cout << "entities " << selected.size() << " terms "
                  << expanded.term_counts.size() << "\n";
    });

    // rank
    auto* rank = app.add_subcommand("rank", "rank one query's pool for one user");
    std::string rank_config;
    std::vector<std::string> rank_sets;
    std::string rank_user;
    std::string rank_query;
    std::string rank_knrm;
    rank->add_option("--config", rank_config, "key=value config file");
    rank->add_option("--set", rank_sets, "config override key=value");
    rank->add_option("--user", rank_user, "user id")->required();
    rank->add_option("--query", rank_query, "query id")->required();
    rank->add_option("--knrm-model", rank_knrm, "trained KNRM model file");
    rank->callback([&] {
        const ExperimentConfig config = assemble_config(rank_config, rank_sets);
        const Dataset data = Dataset::load(config.paths);
        print_warnings(data.warnings);
        std::optional<KnrmModel> model;
        if (!rank_knrm.empty()) {
            model = KnrmModel::load(rank_knrm);
        }
        const auto ranking =
            rank_pool(config, data, rank_user, rank_query, model.has_value() ? &*model : nullptr);
        for (const auto& doc : ranking) {
            std::cout << doc.rank << "\t" << doc.doc_id << "\t" << fmt_score(doc.score) << "\n";
        }
    });

    // train-knrm
    auto* train = app.add_subcommand("train-knrm", "fit a KNRM model on all judged pairs");
    std::string train_config;
    std::vector<std::string> train_sets;
    std::string train_domain;
    std::string train_out;
    train->add_option("--config", train_config, "key=value config file");
    train->add_option("--set", train_sets, "config override key=value");
    train->add_option("--domain", train_domain, "restrict training to one domain");
    train->add_option("--out", train_out, "output model file")->required();
    train->callback([&] {
        const ExperimentConfig config = assemble_config(train_config, train_sets);
        const Dataset data = Dataset::load(config.paths);
        print_warnings(data.warnings);
        std::optional<Domain> domain;
        if (!train_domain.empty()) {
            domain = domain_from_string(train_domain);
        }
        const KnrmModel model = train_knrm_full(config, data, domain);
        model.save(train_out);
        std::cout << "kernels " << model.kernels.size() << "\n";
    });

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "run one configuration and report metrics");
    std::string eval_config;
    std::vector<std::string> eval_sets;
    std::string eval_baseline;
    std::string eval_out;
    evaluate->add_option("--config", eval_config, "key=value config file");
    evaluate->add_option("--set", eval_sets, "config override key=value");
    evaluate->add_option("--baseline", eval_baseline, "baseline report JSONL for t-tests");
    evaluate->add_option("--out", eval_out, "output path prefix (.txt and .jsonl)");
    evaluate->callback([&] {
        const ExperimentConfig config = assemble_config(eval_config, eval_sets);
        const Dataset data = Dataset::load(config.paths);
        print_warnings(data.warnings);
        MetricReport report = run_experiment(config, data);
        if (!eval_baseline.empty()) {
            const MetricReport baseline = report_from_jsonl(io::read_file(eval_baseline));
            report.compare_to(baseline);
        }
        if (!eval_out.empty()) {
            io::write_file_atomic(eval_out + ".txt", report.to_text());
            io::write_file_atomic(eval_out + ".jsonl", report.to_jsonl());
        }
        std::cout << report.to_text();
    });

    // grid
    auto* grid = app.add_subcommand("grid", "run a cross-product of configurations");
    std::string grid_config;
    std::vector<std::string> grid_sets;
    std::string grid_out;
    grid->add_option("--config", grid_config, "key=value grid manifest")->required();
    grid->add_option("--set", grid_sets, "config override key=value");
    grid->add_option("--out", grid_out, "output directory")->required();
    grid->callback([&] {
        const ConfigEntries entries = assemble_entries(grid_config, grid_sets);
        const std::vector<ExperimentConfig> cells = expand_grid(entries);
        const Dataset data = Dataset::load(cells.front().paths);
        print_warnings(data.warnings);
        const auto reports = run_grid(cells, data, grid_out);
        for (const auto& report : reports) {
            std::cout << report.name;
            for (const auto& metric : report.metric_names) {
                auto it = report.means.find(metric);
                if (it != report.means.end()) {
                    char buf[64];
                    std::snprintf(buf, sizeof(buf), "%.6f", it->second);
                    std::cout << " " << metric << "=" << buf;
                }
            }
            std::cout << "\n";
        }
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
