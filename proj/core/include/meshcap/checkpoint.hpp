#pragma once

#include <string>

#include "meshcap/bpe.hpp"
#include "meshcap/decoder.hpp"
#include "meshcap/encoder.hpp"
#include "meshcap/param_store.hpp"

namespace meshcap {

// Everything one training stage hands to the next: configs, tokenizer, and
// the parameter registry, plus wired model views into it. Move-only — the
// model views hold pointers into the store (map nodes survive moves).
struct PipelineModel {
    GeminiConfig gcfg;
    EncoderConfig ecfg;
    bool fused{false};
    bool has_encoder{false};
    BpeTokenizer tokenizer;
    ParamStore store;
    GeminiModel decoder;
    EncoderModel encoder;

    PipelineModel() = default;
    PipelineModel(PipelineModel&&) = default;
    PipelineModel& operator=(PipelineModel&&) = default;
    PipelineModel(const PipelineModel&) = delete;
    PipelineModel& operator=(const PipelineModel&) = delete;

    // Rewires decoder/encoder views into the store (after load).
    void bind();
};

// Single binary file: config + tokenizer header, then every named tensor with
// frozen flag and optimizer state, in registry order. Raw 64-bit payloads, so
// a save/load round trip is bit-exact on one machine.
void save_checkpoint(const std::string& path, const PipelineModel& m);
PipelineModel load_checkpoint(const std::string& path);

}  // namespace meshcap
