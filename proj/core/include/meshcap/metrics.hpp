#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace meshcap {

// Whitespace-split tokens of one normalized caption.
using TokenizedCaption = std::vector<std::string>;

struct EvalEntry {
    TokenizedCaption candidate;
    std::vector<TokenizedCaption> references;  // at least one
};

// image id -> candidate/references. Ordered so every pass is deterministic.
using EvalCorpus = std::map<std::string, EvalEntry>;

// Throws unless every image has >=1 reference and no caption carries an empty
// token. Empty candidates are legal (a model may emit nothing).
void validate_corpus(const EvalCorpus& corpus);

// Corpus-wide clipped n-gram matches and candidate n-gram total; per image,
// each candidate n-gram count is clipped by its maximum count in any single
// reference. Candidates shorter than n contribute nothing.
std::pair<std::size_t, std::size_t> modified_precision(const EvalCorpus& corpus, std::size_t n);

// Geometric mean of modified precisions 1..max_n times the brevity penalty
// min(1, e^{1-r/c}); r sums each image's closest reference length (ties go
// shorter), c sums candidate lengths. Zero when any precision is zero.
double bleu(const EvalCorpus& corpus, std::size_t max_n);

// Mean over images of the best LCS F-measure against any reference,
// F = (1+β²)PR / (R+β²P) with β = 1.2.
double rouge_l(const EvalCorpus& corpus);

// CIDEr-D: tf-idf n-gram cosine (n = 1..4) against each reference with
// per-reference clipping of candidate weights, Gaussian length penalty
// (σ = 6), 10× scaling; idf documents are the per-image reference sets.
double cider(const EvalCorpus& corpus);
std::map<std::string, double> cider_per_image(const EvalCorpus& corpus);

struct ImageScores {
    double bleu1{0.0};
    double bleu4{0.0};
    double rouge_l{0.0};
    double cider{0.0};
};

struct EvalReport {
    double bleu1{0.0};
    double bleu4{0.0};
    double rouge_l{0.0};
    double cider{0.0};
    std::map<std::string, ImageScores> per_image;
};

// All four corpus metrics plus a per-image breakdown (per-image BLEU treats
// the image as a one-image corpus; per-image CIDEr keeps corpus idf).
EvalReport evaluate(const EvalCorpus& corpus);

}  // namespace meshcap
