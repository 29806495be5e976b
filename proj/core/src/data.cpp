#include "meshcap/data.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "meshcap/text.hpp"

namespace meshcap {

namespace {

using nlohmann::json;

std::runtime_error line_error(const std::string& path, std::size_t line, const std::string& why) {
    return std::runtime_error(path + ":" + std::to_string(line) + ": " + why);
}

// Applies `fn` to each non-empty line parsed as a JSON object.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw line_error(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw line_error(path, line_no, "expected a JSON object");
        fn(j, line_no);
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    return f;
}

}  // namespace

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size())
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

FilterResult filter_dataset(const std::vector<CaptionRecord>& records,
                            const EmbeddingTable& table, double threshold) {
    FilterResult result;
    result.stats.total = records.size();
    for (const CaptionRecord& rec : records) {
        FilterDecision d;
        d.image_id = rec.image_id;
        d.embedding_id = rec.embedding_id;
        const auto it = rec.embedding_id.empty() ? table.by_id.end()
                                                 : table.by_id.find(rec.embedding_id);
        if (it == table.by_id.end()) {
            d.error = rec.embedding_id.empty() ? "record has no embedding_id"
                                               : "embedding_id not found";
            d.kept = false;
            result.rejected.push_back(rec);
        } else {
            d.similarity = cosine_similarity(it->second.source, it->second.translation);
            d.kept = d.similarity >= threshold;
            (d.kept ? result.kept : result.rejected).push_back(rec);
        }
        result.stats.records.push_back(std::move(d));
    }
    result.stats.kept = result.kept.size();
    result.stats.rejected = result.rejected.size();
    result.stats.rejection_rate =
        records.empty() ? 0.0
                        : static_cast<double>(result.stats.rejected) /
                              static_cast<double>(result.stats.total);
    return result;
}

std::vector<CaptionRecord> load_captions_jsonl(const std::string& path) {
    std::vector<CaptionRecord> records;
    for_each_jsonl(path, [&](const json& j, std::size_t line_no) {
        CaptionRecord r;
        try {
            r.image_id = j.at("image_id").get<std::string>();
            r.caption = j.at("caption").get<std::string>();
            if (j.contains("source_caption")) r.source_caption = j["source_caption"].get<std::string>();
            if (j.contains("embedding_id")) r.embedding_id = j["embedding_id"].get<std::string>();
        } catch (const json::exception& e) {
            throw line_error(path, line_no, std::string("bad caption record: ") + e.what());
        }
        if (r.image_id.empty()) throw line_error(path, line_no, "empty image_id");
        records.push_back(std::move(r));
    });
    return records;
}

void save_captions_jsonl(const std::string& path, const std::vector<CaptionRecord>& records) {
    std::ofstream f = open_out(path);
    for (const CaptionRecord& r : records) {
        json j;
        j["image_id"] = r.image_id;
        j["caption"] = r.caption;
        if (!r.source_caption.empty()) j["source_caption"] = r.source_caption;
        if (!r.embedding_id.empty()) j["embedding_id"] = r.embedding_id;
        f << j.dump() << '\n';
    }
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

EmbeddingTable load_embeddings_jsonl(const std::string& path) {
    EmbeddingTable table;
    for_each_jsonl(path, [&](const json& j, std::size_t line_no) {
        std::string id;
        EmbeddingPair pair;
        try {
            id = j.at("embedding_id").get<std::string>();
            pair.source = j.at("source_vector").get<std::vector<double>>();
            pair.translation = j.at("translation_vector").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw line_error(path, line_no, std::string("bad embedding record: ") + e.what());
        }
        if (pair.source.size() != pair.translation.size() || pair.source.empty())
            throw line_error(path, line_no, "embedding vectors must share one nonzero dimension");
        for (double x : pair.source)
            if (!std::isfinite(x)) throw line_error(path, line_no, "non-finite source vector");
        for (double x : pair.translation)
            if (!std::isfinite(x)) throw line_error(path, line_no, "non-finite translation vector");
        if (table.dim == 0) table.dim = pair.source.size();
        if (pair.source.size() != table.dim)
            throw line_error(path, line_no, "embedding dimension differs from earlier records");
        if (!table.by_id.emplace(std::move(id), std::move(pair)).second)
            throw line_error(path, line_no, "duplicate embedding_id");
    });
    return table;
}

std::vector<FeatureSet> load_features_jsonl(const std::string& path) {
    std::vector<FeatureSet> out;
    for_each_jsonl(path, [&](const json& j, std::size_t line_no) {
        FeatureSet fs;
        std::vector<std::vector<double>> rows;
        try {
            fs.image_id = j.at("image_id").get<std::string>();
            rows = j.at("features").get<std::vector<std::vector<double>>>();
        } catch (const json::exception& e) {
            throw line_error(path, line_no, std::string("bad feature record: ") + e.what());
        }
        if (fs.image_id.empty()) throw line_error(path, line_no, "empty image_id");
        if (rows.empty()) throw line_error(path, line_no, "feature matrix needs K >= 1 rows");
        for (const auto& row : rows) {
            if (row.size() != rows.front().size() || row.empty())
                throw line_error(path, line_no, "ragged feature matrix");
            for (double x : row)
                if (!std::isfinite(x)) throw line_error(path, line_no, "non-finite feature value");
        }
        fs.features = Tensor::from_rows(rows);
        out.push_back(std::move(fs));
    });
    return out;
}

void save_features_jsonl(const std::string& path, const std::vector<FeatureSet>& features) {
    std::ofstream f = open_out(path);
    for (const FeatureSet& fs : features) {
        json rows = json::array();
        for (std::size_t i = 0; i < fs.features.rows(); ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < fs.features.cols(); ++j) row.push_back(fs.features.at(i, j));
            rows.push_back(std::move(row));
        }
        json j;
        j["image_id"] = fs.image_id;
        j["features"] = std::move(rows);
        f << j.dump() << '\n';
    }
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

void save_filter_report_json(const std::string& path, const FilterStats& stats) {
    json records = json::array();
    for (const FilterDecision& d : stats.records) {
        json j;
        j["image_id"] = d.image_id;
        j["embedding_id"] = d.embedding_id;
        j["kept"] = d.kept;
        if (d.error.empty()) {
            j["similarity"] = d.similarity;
        } else {
            j["error"] = d.error;
        }
        records.push_back(std::move(j));
    }
    json j;
    j["total"] = stats.total;
    j["kept"] = stats.kept;
    j["rejected"] = stats.rejected;
    j["rejection_rate"] = stats.rejection_rate;
    j["records"] = std::move(records);
    std::ofstream f = open_out(path);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

EvalCorpus load_eval_corpus(const std::string& candidates_path,
                            const std::string& references_path) {
    EvalCorpus corpus;
    for (const CaptionRecord& r : load_captions_jsonl(candidates_path)) {
        auto [it, fresh] = corpus.emplace(r.image_id, EvalEntry{});
        if (!fresh)
            throw std::runtime_error("evaluate: duplicate candidate for image '" + r.image_id + "'");
        it->second.candidate = split_tokens(normalize_text(r.caption));
    }
    for (const CaptionRecord& r : load_captions_jsonl(references_path)) {
        const auto it = corpus.find(r.image_id);
        if (it == corpus.end()) continue;  // references for unscored images are legal
        it->second.references.push_back(split_tokens(normalize_text(r.caption)));
    }
    for (const auto& [id, entry] : corpus) {
        if (entry.references.empty())
            throw std::runtime_error("evaluate: image '" + id + "' has no references");
    }
    return corpus;
}

void save_eval_report_json(const std::string& path, const EvalReport& report) {
    json images = json::object();
    for (const auto& [id, s] : report.per_image) {
        images[id] = {{"bleu1", s.bleu1},
                      {"bleu4", s.bleu4},
                      {"rouge_l", s.rouge_l},
                      {"cider", s.cider}};
    }
    json j;
    j["bleu1"] = report.bleu1;
    j["bleu4"] = report.bleu4;
    j["rouge_l"] = report.rouge_l;
    j["cider"] = report.cider;
    j["images"] = std::move(images);
    std::ofstream f = open_out(path);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace meshcap
