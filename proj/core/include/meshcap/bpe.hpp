#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace meshcap {

// Byte-pair tokenizer over normalized text. Symbols start as single code
// points (spaces included, so merges may cross word boundaries); merges are
// learned most-frequent-first with lexicographic tie-breaking. Ids are dense:
// specials, then the sorted base alphabet, then merge products in order.
struct BpeTokenizer {
    static constexpr std::int64_t kPad = 0;
    static constexpr std::int64_t kBos = 1;
    static constexpr std::int64_t kEos = 2;
    static constexpr std::int64_t kUnk = 3;

    std::vector<std::string> alphabet;                         // sorted base symbols
    std::vector<std::pair<std::string, std::string>> merges;   // learned order
    std::map<std::string, std::int64_t> token_to_id;
    std::vector<std::string> id_to_token;                      // specials use sentinels

    std::size_t vocab_size() const { return id_to_token.size(); }
};

// Learns merges until `vocab_size` tokens exist or no adjacent pair repeats.
// vocab_size must cover the specials plus the corpus alphabet.
BpeTokenizer bpe_train(const std::vector<std::string>& corpus, std::size_t vocab_size);

// Greedy merge application in learned order; code points outside the base
// alphabet map to UNK.
std::vector<std::int64_t> bpe_encode(const BpeTokenizer& t, const std::string& s);

// Concatenation of token strings. PAD/BOS/EOS decode to nothing, UNK to
// U+FFFD. decode(encode(s)) == s for normalized s over the base alphabet.
std::string bpe_decode(const BpeTokenizer& t, const std::vector<std::int64_t>& ids);

// Wraps an encoded body as BOS body EOS.
std::vector<std::int64_t> bpe_encode_wrapped(const BpeTokenizer& t, const std::string& s);

}  // namespace meshcap
