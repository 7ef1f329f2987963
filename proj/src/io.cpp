// Copyright the chatrank authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#include "chatrank/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "chatrank/errors.hpp"

namespace chatrank::io {

namespace {

using nlohmann::json;

std::string at(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

// Applies `handle(parsed_object, line_number)` to every non-empty line.
template <typename Handler>
void for_each_record(const std::filesystem::path& path, Handler&& handle) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("bad JSON at " + at(path, line_no) + ": " + e.what());
        }
        if (!record.is_object()) {
            throw DataError("expected a JSON object at " + at(path, line_no));
        }
        try {
            handle(record, line_no);
        } catch (const json::exception& e) {
            throw DataError("bad record at " + at(path, line_no) + ": " + e.what());
        }
    }
}

std::string req_string(const json& record, const char* field, const std::filesystem::path& path,
                       std::size_t line_no) {
    auto it = record.find(field);
    if (it == record.end() || !it->is_string()) {
        throw DataError("missing string field \"" + std::string(field) + "\" at " +
                        at(path, line_no));
    }
    return it->get<std::string>();
}

std::string opt_string(const json& record, const char* field) {
    auto it = record.find(field);
    return it != record.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

std::int64_t req_int(const json& record, const char* field, const std::filesystem::path& path,
                     std::size_t line_no) {
    auto it = record.find(field);
    if (it == record.end() || !it->is_number_integer()) {
        throw DataError("missing integer field \"" + std::string(field) + "\" at " +
                        at(path, line_no));
    }
    return it->get<std::int64_t>();
}

bool req_bool(const json& record, const char* field, const std::filesystem::path& path,
              std::size_t line_no) {
    auto it = record.find(field);
    if (it == record.end() || !it->is_boolean()) {
        throw DataError("missing boolean field \"" + std::string(field) + "\" at " +
                        at(path, line_no));
    }
    return it->get<bool>();
}

std::string fmt_weight(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path.string());
    }
    return in;
}

// Splits "key<TAB>value" with exactly one tab.
std::pair<std::string, std::string> split_tab(const std::string& line,
                                              const std::filesystem::path& path,
                                              std::size_t line_no) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
        throw DataError("expected one tab-separated pair at " + at(path, line_no));
    }
    return {line.substr(0, tab), line.substr(tab + 1)};
}

} // namespace

std::vector<Document> load_documents(const std::filesystem::path& path) {
    std::vector<Document> docs;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        Document doc;
        doc.id = req_string(record, "id", path, line_no);
        try {
            doc.domain = domain_from_string(req_string(record, "domain", path, line_no));
        } catch (const DataError& e) {
            throw DataError(std::string(e.what()) + " at " + at(path, line_no));
        }
        doc.entity_key = opt_string(record, "entity_key");
        doc.title = req_string(record, "title", path, line_no);
        doc.body = req_string(record, "body", path, line_no);
        doc.url = opt_string(record, "url");
        docs.push_back(std::move(doc));
    });
    return docs;
}

std::vector<ChatSession> load_chats(const std::filesystem::path& path) {
    std::vector<ChatSession> chats;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        ChatSession session;
        session.session_id = req_string(record, "session_id", path, line_no);
        auto participants = record.find("participants");
        if (participants == record.end() || !participants->is_array() ||
            participants->size() != 2) {
            throw DataError("\"participants\" must list two users at " + at(path, line_no));
        }
        session.participants[0] = (*participants)[0].get<std::string>();
        session.participants[1] = (*participants)[1].get<std::string>();
        session.scope = scope_from_string(req_string(record, "scope", path, line_no));
        auto utterances = record.find("utterances");
        if (utterances == record.end() || !utterances->is_array()) {
            throw DataError("missing array field \"utterances\" at " + at(path, line_no));
        }
        for (const auto& u : *utterances) {
            session.utterances.push_back(Utterance{req_string(u, "speaker", path, line_no),
                                                   req_string(u, "text", path, line_no)});
        }
        chats.push_back(std::move(session));
    });
    return chats;
}

std::vector<Questionnaire> load_questionnaires(const std::filesystem::path& path) {
    std::vector<Questionnaire> questionnaires;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        Questionnaire q;
        q.user = req_string(record, "user", path, line_no);
        q.scope = scope_from_string(req_string(record, "scope", path, line_no));
        auto answers = record.find("answers");
        if (answers == record.end() || !answers->is_array()) {
            throw DataError("missing array field \"answers\" at " + at(path, line_no));
        }
        for (const auto& a : *answers) {
            q.answers.push_back(QuestionAnswer{req_string(a, "question", path, line_no),
                                               req_string(a, "answer", path, line_no)});
        }
        questionnaires.push_back(std::move(q));
    });
    return questionnaires;
}

std::vector<EntityAnnotation> load_annotations(const std::filesystem::path& path) {
    std::vector<EntityAnnotation> annotations;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        EntityAnnotation a;
        a.user = req_string(record, "user", path, line_no);
        a.kind = annotation_kind_from_string(req_string(record, "kind", path, line_no));
        a.record_id = req_string(record, "record_id", path, line_no);
        a.surface = req_string(record, "surface", path, line_no);
        a.entity_id = req_string(record, "entity_id", path, line_no);
        a.is_named_entity = req_bool(record, "is_named_entity", path, line_no);
        annotations.push_back(std::move(a));
    });
    return annotations;
}

EntityCatalog load_catalog(const std::filesystem::path& path) {
    EntityCatalog catalog;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        const std::string entity_id = req_string(record, "entity_id", path, line_no);
        CatalogEntry entry;
        entry.description = req_string(record, "description", path, line_no);
        entry.is_named_entity = req_bool(record, "is_named_entity", path, line_no);
        if (!catalog.entries.emplace(entity_id, std::move(entry)).second) {
            throw DataError("duplicate entity_id \"" + entity_id + "\" at " + at(path, line_no));
        }
    });
    return catalog;
}

std::vector<PoolEntry> load_pools(const std::filesystem::path& path) {
    std::vector<PoolEntry> pools;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        PoolEntry entry;
        entry.query_id = req_string(record, "query_id", path, line_no);
        entry.doc_id = req_string(record, "doc_id", path, line_no);
        entry.se_rank = static_cast<int>(req_int(record, "se_rank", path, line_no));
        if (entry.se_rank < 1) {
            throw DataError("se_rank must be >= 1 at " + at(path, line_no));
        }
        pools.push_back(std::move(entry));
    });
    return pools;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    std::vector<Query> queries;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        Query q;
        q.query_id = req_string(record, "query_id", path, line_no);
        q.domain = domain_from_string(req_string(record, "domain", path, line_no));
        q.text = req_string(record, "text", path, line_no);
        queries.push_back(std::move(q));
    });
    return queries;
}

std::vector<Judgment> load_judgments(const std::filesystem::path& path) {
    std::vector<Judgment> judgments;
    for_each_record(path, [&](const json& record, std::size_t line_no) {
        Judgment j;
        j.user = req_string(record, "user", path, line_no);
        j.query_id = req_string(record, "query_id", path, line_no);
        j.doc_id = req_string(record, "doc_id", path, line_no);
        j.grade = static_cast<int>(req_int(record, "grade", path, line_no));
        if (j.grade < 0 || j.grade > 2) {
            throw DataError("grade must be 0, 1, or 2 at " + at(path, line_no));
        }
        j.pool_tag = pool_tag_from_string(req_string(record, "pool_tag", path, line_no));
        judgments.push_back(std::move(j));
    });
    return judgments;
}

TermCounts load_term_counts(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    TermCounts counts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        auto [term, value] = split_tab(line, path, line_no);
        try {
            counts[term] += std::stoll(value);
        } catch (const std::exception&) {
            throw DataError("bad count at " + at(path, line_no));
        }
    }
    return counts;
}

void save_spy_weights(const std::filesystem::path& path, const SpyWeights& weights) {
    std::string out;
    for (const auto& [term, weight] : weights.weights) {
        out += term + "\t" + fmt_weight(weight) + "\n";
    }
    write_file_atomic(path, out);
}

SpyWeights load_spy_weights(const std::filesystem::path& path, Domain domain) {
    auto in = open_or_throw(path);
    SpyWeights weights;
    weights.domain = domain;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        auto [term, value] = split_tab(line, path, line_no);
        try {
            weights.weights[term] = std::stod(value);
        } catch (const std::exception&) {
            throw DataError("bad weight at " + at(path, line_no));
        }
    }
    return weights;
}

void save_corpus_stats(const std::filesystem::path& path, const CorpusStats& stats) {
    std::string out = "corpus-stats v1\n";
    out += "doc_count " + std::to_string(stats.doc_count) + "\n";
    out += "total_tokens " + std::to_string(stats.total_tokens) + "\n";
    out += "terms " + std::to_string(stats.collection_frequency.size()) + "\n";
    for (const auto& [term, cf] : stats.collection_frequency) {
        out += term + "\t" + std::to_string(stats.df(term)) + "\t" + std::to_string(cf) + "\n";
    }
    write_file_atomic(path, out);
}

CorpusStats load_corpus_stats(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line) || line != "corpus-stats v1") {
        throw DataError("not a corpus-stats file: " + path.string());
    }
    CorpusStats stats;
    std::size_t terms = 0;
    std::string word;
    in >> word >> stats.doc_count;
    in >> word >> stats.total_tokens;
    in >> word >> terms;
    std::getline(in, line);
    std::size_t line_no = 4;
    for (std::size_t i = 0; i < terms; ++i) {
        if (!std::getline(in, line)) {
            throw DataError("truncated corpus-stats file: " + path.string());
        }
        ++line_no;
        std::istringstream row(line);
        std::string term;
        std::int64_t df = 0;
        std::int64_t cf = 0;
        if (!std::getline(row, term, '\t') || !(row >> df >> cf)) {
            throw DataError("bad stats row at " + at(path, line_no));
        }
        stats.document_frequency[term] = df;
        stats.collection_frequency[term] = cf;
    }
    return stats;
}

void save_user_model(const std::filesystem::path& path, const UserModel& model) {
    std::string out = "user-model v1\n";
    out += "user " + model.user + "\n";
    out += "source " + std::string(to_string(model.source)) + "\n";
    out += "scope " + std::string(to_string(model.scope_config)) + "\n";
    out += "domain " +
           (model.domain.has_value() ? std::string(to_string(*model.domain)) : std::string("-")) +
           "\n";
    out += "terms " + std::to_string(model.term_counts.size()) + "\n";
    for (const auto& [term, count] : model.term_counts) {
        out += term + "\t" + fmt_weight(count) + "\n";
    }
    write_file_atomic(path, out);
}

UserModel load_user_model(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line) || line != "user-model v1") {
        throw DataError("not a user-model file: " + path.string());
    }
    UserModel model;
    std::string word;
    std::string value;
    in >> word >> model.user;
    in >> word >> value;
    model.source = model_source_from_string(value);
    in >> word >> value;
    model.scope_config = scope_config_from_string(value);
    in >> word >> value;
    if (value != "-") {
        model.domain = domain_from_string(value);
    }
    std::size_t terms = 0;
    in >> word >> terms;
    std::getline(in, line);
    std::size_t line_no = 6;
    for (std::size_t i = 0; i < terms; ++i) {
        if (!std::getline(in, line)) {
            throw DataError("truncated user-model file: " + path.string());
        }
        ++line_no;
        auto [term, count] = split_tab(line, path, line_no);
        try {
            model.term_counts[term] = std::stod(count);
        } catch (const std::exception&) {
            throw DataError("bad count at " + at(path, line_no));
        }
    }
    model.renormalize();
    return model;
}

void save_domain_vector(const std::filesystem::path& path, const DomainVector& dv) {
    std::string out = "domain-vector v1\n";
    out += "domain " +
           (dv.domain.has_value() ? std::string(to_string(*dv.domain)) : std::string("-")) + "\n";
    out += "m " + std::to_string(dv.m) + "\n";
    out += "dim " + std::to_string(dv.vector.size()) + "\n";
    for (Eigen::Index i = 0; i < dv.vector.size(); ++i) {
        out += (i > 0 ? " " : "") + fmt_weight(dv.vector[i]);
    }
    out += "\n";
    write_file_atomic(path, out);
}

DomainVector load_domain_vector(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::string line;
    if (!std::getline(in, line) || line != "domain-vector v1") {
        throw DataError("not a domain-vector file: " + path.string());
    }
    DomainVector dv;
    std::string word;
    std::string value;
    in >> word >> value;
    if (value != "-") {
        dv.domain = domain_from_string(value);
    }
    Eigen::Index dim = 0;
    in >> word >> dv.m;
    in >> word >> dim;
    dv.vector = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        in >> dv.vector[i];
    }
    if (!in) {
        throw DataError("truncated domain-vector file: " + path.string());
    }
    return dv;
}

std::string read_file(const std::filesystem::path& path) {
    auto in = open_or_throw(path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write file: " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) {
            throw DataError("short write: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

} // namespace chatrank::io
