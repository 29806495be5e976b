#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshcap/attention.hpp"
#include "meshcap/encoder.hpp"
#include "meshcap/fusion.hpp"
#include "meshcap/layers.hpp"
#include "meshcap/optim.hpp"
#include "meshcap/param_store.hpp"

namespace meshcap {

struct GeminiConfig {
    std::size_t n_layers{12};
    std::size_t d_model{768};
    std::size_t n_heads{12};
    std::size_t vocab_size{63999};
    std::size_t max_positions{64};
    std::size_t mesh_layers{3};  // encoder depths each fusion block attends to
    std::size_t ff_dim{0};       // 0 -> 4·d_model
    double tau{0.3};

    std::size_t split_index() const { return n_layers / 2; }
    std::size_t effective_ff_dim() const { return ff_dim == 0 ? 4 * d_model : ff_dim; }
    void validate() const;
};

struct FusionBlockParams {
    std::vector<AttentionParams> xattn;  // one cross-attention per encoder depth
    MeshParams mesh;
};

struct DecoderLayerParams {
    LayerNormParams ln1;
    AttentionParams attn;
    LayerNormParams ln2;
    FeedForwardParams ff;
    bool has_fusion{false};
    FusionBlockParams fusion;
};

// Split decoder: plain causal layers in the first half; after conversion the
// second half interleaves cross-attention fusion between self-attention and
// feed-forward. The first half plus both embedding tables freeze at
// conversion; the output head stays trainable and untied.
struct GeminiModel {
    GeminiConfig cfg;
    Param* tok_emb{nullptr};  // [vocab × d_model]
    Param* pos_emb{nullptr};  // [max_positions × d_model], learned absolute
    std::vector<DecoderLayerParams> layers;
    LayerNormParams final_ln;
    Param* head_w{nullptr};  // [d_model × vocab]
    bool fused{false};
};

// Plain decoder, freshly initialized (create=true) or rebound from a loaded
// store (create=false).
GeminiModel make_decoder(ParamStore& store, const GeminiConfig& cfg, bool create,
                         Rng* rng = nullptr, double init_std = 0.02,
                         const std::string& prefix = "dec");

// Conversion: copies every pretrained tensor bit-exactly from src into dst,
// inserts freshly initialized fusion blocks (cross-attention output
// projections start at zero) into each second-half layer, and freezes the
// first-half layers plus token/positional embeddings. Optimizer moments reset.
GeminiModel build_gemini(const ParamStore& src, const GeminiConfig& cfg, ParamStore& dst,
                         Rng& rng, double init_std = 0.02, const std::string& prefix = "dec");

// Rebind an already-converted model from a loaded store.
GeminiModel bind_gemini(ParamStore& store, const GeminiConfig& cfg,
                        const std::string& prefix = "dec");

struct DecoderLayerCache {
    Tensor x_in;
    LayerNormCache ln1;
    Tensor h1;  // ln1(x_in), the states self-attention consumes
    AttentionCache self_attn;
    Tensor self_out;
    std::vector<AttentionCache> xattn;
    FuseCache fuse;
    LayerNormCache ln2;
    FeedForwardCache ff;
};

struct DecoderCache {
    std::vector<std::int64_t> tokens;
    std::vector<DecoderLayerCache> layers;
    LayerNormCache final_ln;
    Tensor final_hidden;
};

// tokens -> logits [T × vocab]. enc is required (and consumed) only by fused
// models; layer wiring is pre-norm residual throughout, cross-attention
// queries come from the self-attention output, and mesh weights read the
// normalized layer input as S_t.
Tensor decoder_forward(const GeminiModel& model, const std::vector<std::int64_t>& tokens,
                       const EncoderStack* enc = nullptr, DecoderCache* cache = nullptr);

// Accumulates every parameter gradient; returns per-encoder-depth gradients
// (empty for plain models).
std::vector<Tensor> decoder_backward(const GeminiModel& model, const DecoderCache& cache,
                                     const Tensor& d_logits);

// ---------------------------------------------------------------------------
// training / inference drivers
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate{1e-4};
    std::size_t batch_size{60};
    std::size_t max_epochs{20};
    std::size_t early_stop_patience{5};
    double tau{0.3};
    void validate() const;
};

struct TrainSample {
    FeatureSet features;
    std::vector<std::int64_t> tokens;  // BOS body... EOS
};

// One causal next-token step over a batch of token sequences (each BOS..EOS),
// including the optimizer update. Plain models only.
double pretrain_lm_step(ParamStore& store, const GeminiModel& model,
                        const std::vector<std::vector<std::int64_t>>& batch,
                        const OptimHyper& hyper);

// Teacher-forced captioning step through encoder + fused decoder, one AdamW
// update. Gradients are averaged over the batch in a fixed order.
double train_step(ParamStore& store, const GeminiModel& model, const EncoderModel& encoder,
                  const std::vector<const TrainSample*>& batch, const OptimHyper& hyper);

// Mean teacher-forced loss without gradient work. encoder may be null for
// plain models.
double evaluate_loss(const GeminiModel& model, const EncoderModel* encoder,
                     const std::vector<TrainSample>& samples);

struct FitResult {
    std::size_t epochs_run{0};
    std::size_t best_epoch{0};
    double best_val_loss{0.0};
    std::vector<double> train_losses;
    std::vector<double> val_losses;
};

// Epoch loop with deterministic shuffling, validation-loss early stopping
// (patience epochs without strict improvement), and restoration of the best
// parameter snapshot. val_set may be null: the train set then doubles as the
// monitor set.
FitResult fit(ParamStore& store, const GeminiModel& model, const EncoderModel& encoder,
              const std::vector<TrainSample>& train_set, const std::vector<TrainSample>* val_set,
              const TrainConfig& tcfg, Rng& rng);

// Greedy decode: starts from BOS, appends the argmax token (ties -> lowest
// id), stops at EOS, max_len emitted tokens, or the position limit. The
// returned sequence carries neither BOS nor EOS.
std::vector<std::int64_t> generate_greedy(const GeminiModel& model, const EncoderStack* enc,
                                          std::size_t max_len, std::int64_t bos_id,
                                          std::int64_t eos_id);

// exp(mean next-token NLL) over the sequence's transitions.
double perplexity(const GeminiModel& model, const std::vector<std::int64_t>& tokens,
                  const EncoderStack* enc = nullptr);
double perplexity_from_logits(const Tensor& logits, const std::vector<std::int64_t>& targets);

// Closed-form scalar count for the plain or converted decoder (embeddings,
// layers, fusion blocks, final norm, head); asserted against the store.
std::size_t expected_param_count(const GeminiConfig& cfg, bool fused);

}  // namespace meshcap
