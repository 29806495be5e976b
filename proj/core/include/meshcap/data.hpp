#pragma once

#include <map>
#include <string>
#include <vector>

#include "meshcap/encoder.hpp"
#include "meshcap/metrics.hpp"

namespace meshcap {

struct CaptionRecord {
    std::string image_id;
    std::string caption;
    std::string source_caption;  // optional, empty when absent
    std::string embedding_id;    // optional, empty when absent
};

// Paired sentence vectors for one record: the translation source and the
// translated caption, embedded by an external model and ingested here.
struct EmbeddingPair {
    std::vector<double> source;
    std::vector<double> translation;
};

struct EmbeddingTable {
    std::map<std::string, EmbeddingPair> by_id;
    std::size_t dim{0};
};

// u·v / (‖u‖‖v‖); zero when either norm is zero.
double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

struct FilterDecision {
    std::string image_id;
    std::string embedding_id;
    double similarity{0.0};  // meaningless when error is set
    bool kept{false};
    std::string error;  // empty unless the embedding lookup failed
};

struct FilterStats {
    std::size_t total{0};
    std::size_t kept{0};
    std::size_t rejected{0};
    double rejection_rate{0.0};
    std::vector<FilterDecision> records;  // input order
};

struct FilterResult {
    std::vector<CaptionRecord> kept;
    std::vector<CaptionRecord> rejected;
    FilterStats stats;
};

// Keeps records whose source/translation cosine similarity reaches the
// threshold (boundary kept); records with missing embeddings are rejected
// with a per-record error. Order is preserved within each partition.
FilterResult filter_dataset(const std::vector<CaptionRecord>& records,
                            const EmbeddingTable& table, double threshold);

// ---------------------------------------------------------------------------
// file formats (JSON Lines for data, JSON for reports)
// ---------------------------------------------------------------------------

std::vector<CaptionRecord> load_captions_jsonl(const std::string& path);
void save_captions_jsonl(const std::string& path, const std::vector<CaptionRecord>& records);

EmbeddingTable load_embeddings_jsonl(const std::string& path);

std::vector<FeatureSet> load_features_jsonl(const std::string& path);
void save_features_jsonl(const std::string& path, const std::vector<FeatureSet>& features);

void save_filter_report_json(const std::string& path, const FilterStats& stats);

// Joins candidate and reference caption files on image_id, normalizing and
// whitespace-splitting every caption. Every candidate image needs at least
// one reference.
EvalCorpus load_eval_corpus(const std::string& candidates_path, const std::string& references_path);

void save_eval_report_json(const std::string& path, const EvalReport& report);

}  // namespace meshcap
