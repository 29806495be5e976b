#include "meshcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace meshcap {

namespace {

constexpr std::size_t kCiderMaxN = 4;
constexpr double kCiderSigma = 6.0;
constexpr double kRougeBeta = 1.2;

// n-gram key: tokens joined on a separator no token can contain (tokens come
// from whitespace splitting, and 0x1F is not whitespace).
std::map<std::string, std::size_t> ngram_counts(const TokenizedCaption& tokens, std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key.push_back('\x1f');
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

std::size_t lcs_length(const TokenizedCaption& a, const TokenizedCaption& b) {
    const std::size_t m = a.size(), n = b.size();
    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

double lcs_f_measure(const TokenizedCaption& cand, const TokenizedCaption& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(cand.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = kRougeBeta * kRougeBeta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

}  // namespace

void validate_corpus(const EvalCorpus& corpus) {
    if (corpus.empty()) throw std::invalid_argument("metrics: empty corpus");
    for (const auto& [id, entry] : corpus) {
        if (entry.references.empty())
            throw std::invalid_argument("metrics: image '" + id + "' has no references");
        for (const std::string& tok : entry.candidate)
            if (tok.empty()) throw std::invalid_argument("metrics: empty token in candidate");
        for (const TokenizedCaption& ref : entry.references)
            for (const std::string& tok : ref)
                if (tok.empty()) throw std::invalid_argument("metrics: empty token in reference");
    }
}

std::pair<std::size_t, std::size_t> modified_precision(const EvalCorpus& corpus, std::size_t n) {
    if (n == 0) throw std::invalid_argument("modified_precision: n must be >= 1");
    std::size_t matches = 0, total = 0;
    for (const auto& [id, entry] : corpus) {
        const auto cand = ngram_counts(entry.candidate, n);
        if (cand.empty()) continue;
        std::map<std::string, std::size_t> max_ref;
        for (const TokenizedCaption& ref : entry.references) {
            for (const auto& [gram, count] : ngram_counts(ref, n)) {
                max_ref[gram] = std::max(max_ref[gram], count);
            }
        }
        for (const auto& [gram, count] : cand) {
            total += count;
            const auto it = max_ref.find(gram);
            if (it != max_ref.end()) matches += std::min(count, it->second);
        }
    }
    return {matches, total};
}

double bleu(const EvalCorpus& corpus, std::size_t max_n) {
    validate_corpus(corpus);
    if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: max_n must be in 1..4");

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto [matches, total] = modified_precision(corpus, n);
        if (matches == 0 || total == 0) return 0.0;
        log_sum += std::log(static_cast<double>(matches) / static_cast<double>(total));
    }
    log_sum /= static_cast<double>(max_n);

    std::size_t c = 0, r = 0;
    for (const auto& [id, entry] : corpus) {
        const std::size_t clen = entry.candidate.size();
        c += clen;
        std::size_t best = entry.references.front().size();
        for (const TokenizedCaption& ref : entry.references) {
            const std::size_t len = ref.size();
            const auto dist = [&](std::size_t l) {
                return l > clen ? l - clen : clen - l;
            };
            if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best)) best = len;
        }
        r += best;
    }
    if (c == 0) return 0.0;
    const double bp =
        c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_sum);
}

double rouge_l(const EvalCorpus& corpus) {
    validate_corpus(corpus);
    double sum = 0.0;
    for (const auto& [id, entry] : corpus) {
        double best = 0.0;
        for (const TokenizedCaption& ref : entry.references)
            best = std::max(best, lcs_f_measure(entry.candidate, ref));
        sum += best;
    }
    return sum / static_cast<double>(corpus.size());
}

std::map<std::string, double> cider_per_image(const EvalCorpus& corpus) {
    validate_corpus(corpus);

    // Document frequency: one document per image = its reference set.
    std::vector<std::map<std::string, std::size_t>> df(kCiderMaxN);
    for (const auto& [id, entry] : corpus) {
        for (std::size_t n = 1; n <= kCiderMaxN; ++n) {
            std::map<std::string, bool> seen;
            for (const TokenizedCaption& ref : entry.references)
                for (const auto& [gram, count] : ngram_counts(ref, n)) seen[gram] = true;
            for (const auto& [gram, present] : seen) ++df[n - 1][gram];
        }
    }
    const double log_docs = std::log(static_cast<double>(corpus.size()));
    const auto idf = [&](std::size_t n, const std::string& gram) {
        const auto it = df[n - 1].find(gram);
        const double count = it == df[n - 1].end() ? 0.0 : static_cast<double>(it->second);
        return log_docs - std::log(std::max(1.0, count));
    };
    const auto tfidf_vec = [&](const TokenizedCaption& tokens, std::size_t n) {
        std::map<std::string, double> vec;
        for (const auto& [gram, count] : ngram_counts(tokens, n))
            vec[gram] = static_cast<double>(count) * idf(n, gram);
        return vec;
    };
    const auto norm = [](const std::map<std::string, double>& vec) {
        double s = 0.0;
        for (const auto& [gram, w] : vec) s += w * w;
        return std::sqrt(s);
    };

    std::map<std::string, double> scores;
    for (const auto& [id, entry] : corpus) {
        std::vector<std::map<std::string, double>> hyp(kCiderMaxN);
        std::vector<double> hyp_norm(kCiderMaxN);
        for (std::size_t n = 1; n <= kCiderMaxN; ++n) {
            hyp[n - 1] = tfidf_vec(entry.candidate, n);
            hyp_norm[n - 1] = norm(hyp[n - 1]);
        }
        const double hyp_len = static_cast<double>(entry.candidate.size());

        std::vector<double> per_n(kCiderMaxN, 0.0);
        for (const TokenizedCaption& ref : entry.references) {
            const double delta = hyp_len - static_cast<double>(ref.size());
            const double penalty = std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
            for (std::size_t n = 1; n <= kCiderMaxN; ++n) {
                const auto ref_vec = tfidf_vec(ref, n);
                const double ref_norm = norm(ref_vec);
                double dot = 0.0;
                for (const auto& [gram, w] : hyp[n - 1]) {
                    const auto it = ref_vec.find(gram);
                    if (it != ref_vec.end()) dot += std::min(w, it->second) * it->second;
                }
                const double denom = hyp_norm[n - 1] * ref_norm;
                if (denom > 0.0) per_n[n - 1] += penalty * (dot / denom);
            }
        }

        double mean_n = 0.0;
        for (std::size_t n = 0; n < kCiderMaxN; ++n)
            mean_n += per_n[n] / static_cast<double>(entry.references.size());
        scores[id] = 10.0 * mean_n / static_cast<double>(kCiderMaxN);
    }
    return scores;
}

double cider(const EvalCorpus& corpus) {
    const auto scores = cider_per_image(corpus);
    double sum = 0.0;
    for (const auto& [id, s] : scores) sum += s;
    return sum / static_cast<double>(scores.size());
}

EvalReport evaluate(const EvalCorpus& corpus) {
    validate_corpus(corpus);
    EvalReport report;
    report.bleu1 = bleu(corpus, 1);
    report.bleu4 = bleu(corpus, 4);
    report.rouge_l = rouge_l(corpus);
    report.cider = cider(corpus);

    const auto cider_scores = cider_per_image(corpus);
    for (const auto& [id, entry] : corpus) {
        EvalCorpus single;
        single[id] = entry;
        ImageScores s;
        s.bleu1 = bleu(single, 1);
        s.bleu4 = bleu(single, 4);
        s.rouge_l = rouge_l(single);
        s.cider = cider_scores.at(id);
        report.per_image[id] = s;
    }
    return report;
}

}  // namespace meshcap
