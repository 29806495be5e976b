#include "meshcap/bpe.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "meshcap/text.hpp"

namespace meshcap {

namespace {

constexpr std::size_t kSpecialCount = 4;

std::vector<std::string> to_symbols(const std::string& line) {
    std::vector<std::string> symbols;
    for (char32_t cp : utf8_decode(line)) symbols.push_back(utf8_encode_cp(cp));
    return symbols;
}

// Replaces every adjacent (a, b) with their concatenation, left to right.
void apply_merge(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < symbols.size();) {
        if (r + 1 < symbols.size() && symbols[r] == a && symbols[r + 1] == b) {
            symbols[w] = a + b;
            r += 2;
        } else {
            // guard the no-op case: self-move-assignment may clear the string
            if (w != r) symbols[w] = std::move(symbols[r]);
            r += 1;
        }
        ++w;
    }
    symbols.resize(w);
}

}  // namespace

BpeTokenizer bpe_train(const std::vector<std::string>& corpus, std::size_t vocab_size) {
    if (corpus.empty()) throw std::invalid_argument("bpe_train: empty corpus");

    std::vector<std::vector<std::string>> lines;
    std::set<std::string> alphabet_set;
    for (const std::string& line : corpus) {
        lines.push_back(to_symbols(line));
        for (const std::string& sym : lines.back()) alphabet_set.insert(sym);
    }

    if (alphabet_set.empty()) throw std::invalid_argument("bpe_train: corpus has no symbols");

    BpeTokenizer t;
    t.alphabet.assign(alphabet_set.begin(), alphabet_set.end());
    const std::size_t floor_size = kSpecialCount + t.alphabet.size();
    if (vocab_size < floor_size)
        throw std::invalid_argument("bpe_train: vocab_size below specials + base alphabet");

    while (kSpecialCount + t.alphabet.size() + t.merges.size() < vocab_size) {
        std::map<std::pair<std::string, std::string>, std::size_t> pair_counts;
        for (const auto& symbols : lines) {
            for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
                ++pair_counts[{symbols[i], symbols[i + 1]}];
            }
        }
        // Most frequent pair; ties go to the lexicographically smallest, an
        // order independent of map internals (std::map is already sorted, so
        // the first maximal entry is the smallest such pair).
        const std::pair<std::string, std::string>* best = nullptr;
        std::size_t best_count = 1;  // a pair must repeat to be worth a merge
        for (const auto& [pair, count] : pair_counts) {
            if (count > best_count) {
                best = &pair;
                best_count = count;
            }
        }
        if (!best) break;
        for (auto& symbols : lines) apply_merge(symbols, best->first, best->second);
        t.merges.push_back(*best);
    }

    t.id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (const std::string& sym : t.alphabet) t.id_to_token.push_back(sym);
    for (const auto& [a, b] : t.merges) t.id_to_token.push_back(a + b);
    for (std::size_t id = kSpecialCount; id < t.id_to_token.size(); ++id) {
        // Distinct merge paths can concatenate to one surface string; the
        // first id keeps the string, later duplicates stay decode-only.
        t.token_to_id.emplace(t.id_to_token[id], static_cast<std::int64_t>(id));
    }
    return t;
}

std::vector<std::int64_t> bpe_encode(const BpeTokenizer& t, const std::string& s) {
    std::vector<std::string> symbols;
    for (char32_t cp : utf8_decode(s)) {
        std::string sym = utf8_encode_cp(cp);
        // Outside the base alphabet -> a marker no merge rule touches.
        if (!std::binary_search(t.alphabet.begin(), t.alphabet.end(), sym)) sym.clear();
        symbols.push_back(std::move(sym));
    }
    for (const auto& [a, b] : t.merges) apply_merge(symbols, a, b);

    std::vector<std::int64_t> ids;
    ids.reserve(symbols.size());
    for (const std::string& sym : symbols) {
        if (sym.empty()) {
            ids.push_back(BpeTokenizer::kUnk);
            continue;
        }
        auto it = t.token_to_id.find(sym);
        if (it == t.token_to_id.end())
            throw std::runtime_error("bpe_encode: merge produced an unknown token");
        ids.push_back(it->second);
    }
    return ids;
}

std::string bpe_decode(const BpeTokenizer& t, const std::vector<std::int64_t>& ids) {
    std::string out;
    for (std::int64_t id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= t.id_to_token.size())
            throw std::invalid_argument("bpe_decode: id outside vocabulary");
        if (id == BpeTokenizer::kPad || id == BpeTokenizer::kBos || id == BpeTokenizer::kEos)
            continue;
        if (id == BpeTokenizer::kUnk) {
            out += utf8_encode_cp(0xFFFD);
            continue;
        }
        out += t.id_to_token[static_cast<std::size_t>(id)];
    }
    return out;
}

std::vector<std::int64_t> bpe_encode_wrapped(const BpeTokenizer& t, const std::string& s) {
    std::vector<std::int64_t> ids{BpeTokenizer::kBos};
    std::vector<std::int64_t> body = bpe_encode(t, s);
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(BpeTokenizer::kEos);
    return ids;
}

}  // namespace meshcap
