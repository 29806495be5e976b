#pragma once

#include <cstdint>
#include <string>

#include "meshcap/data.hpp"
#include "meshcap/decoder.hpp"
#include "meshcap/encoder.hpp"
#include "meshcap/toml.hpp"

namespace meshcap {

// Everything a pipeline stage needs, parsed from one TOML file plus command-line
// overrides. Unknown keys are rejected so typos fail loudly instead of silently
// falling back to defaults. Which paths are mandatory depends on the subcommand,
// so path presence is checked by the caller via require_path().
struct RunConfig {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = "out";

    // [paths] — all optional at parse time; stages demand the ones they use.
    std::string captions;
    std::string val_captions;
    std::string features;
    std::string embeddings;
    std::string corpus;
    std::string checkpoint;
    std::string candidates;
    std::string references;

    GeminiConfig model;    // [model]; vocab_size comes from the tokenizer, not TOML
    EncoderConfig encoder; // [encoder]
    TrainConfig train;     // [train]; tau mirrors model.tau

    // [pretrain]
    int pretrain_epochs = 10;
    int pretrain_batch_size = 16;
    double pretrain_learning_rate = 1e-4;
    std::size_t pretrain_vocab_size = 256;

    // [filter]
    double filter_threshold = 0.6;

    // [generate]
    std::size_t generate_max_len = 16;

    static RunConfig from_toml(const TomlTable& table);
    void validate() const; // throws ConfigError on any out-of-range value
};

// Throws ConfigError naming the missing key when value is empty.
const std::string& require_path(const std::string& value, const std::string& key);

} // namespace meshcap
