#pragma once

#include <string>
#include <vector>

#include "meshcap/attention.hpp"
#include "meshcap/layers.hpp"
#include "meshcap/param_store.hpp"
#include "meshcap/tensor.hpp"

namespace meshcap {

// One image's detector region features, [K × feature_dim].
struct FeatureSet {
    std::string image_id;
    Tensor features;
};

struct EncoderConfig {
    std::size_t layers{3};
    std::size_t d_model{768};
    std::size_t n_heads{12};
    std::size_t ff_dim{0};  // 0 -> 4·d_model
    std::size_t feature_dim{2048};

    std::size_t effective_ff_dim() const { return ff_dim == 0 ? 4 * d_model : ff_dim; }
    void validate() const;
};

struct EncoderLayerParams {
    LayerNormParams ln1;
    AttentionParams attn;
    LayerNormParams ln2;
    FeedForwardParams ff;
};

struct EncoderModel {
    EncoderConfig cfg;
    Param* proj_w{nullptr};  // [feature_dim × d_model]
    Param* proj_b{nullptr};
    std::vector<EncoderLayerParams> layers;
};

EncoderModel make_encoder(ParamStore& store, const EncoderConfig& cfg, bool create,
                          Rng* rng = nullptr, double init_std = 0.02,
                          const std::string& prefix = "enc");

// All refined region states, one entry per layer (the mesh reads every depth).
struct EncoderStack {
    std::vector<Tensor> layer_outputs;
};

// Affine map of raw region features into the model dimension.
Tensor project_features(const Tensor& features, const EncoderModel& model);
// Accumulates projection grads; returns d(features).
Tensor project_features_backward(const EncoderModel& model, const Tensor& features_in,
                                 const Tensor& d_projected);

struct EncoderLayerCache {
    Tensor x_in;
    LayerNormCache ln1;
    AttentionCache attn;
    Tensor x_mid;  // after attention residual
    LayerNormCache ln2;
    FeedForwardCache ff;
};

struct EncoderCache {
    Tensor features_in;  // set by encode_features only
    std::vector<EncoderLayerCache> layers;
};

// Pre-norm residual layers: x += attn(ln1(x)); x += ff(ln2(x)). No positional
// encoding — regions are an unordered set.
EncoderStack encoder_forward(const Tensor& s0, const EncoderModel& model,
                             EncoderCache* cache = nullptr);

// projection + encoder_forward.
EncoderStack encode_features(const FeatureSet& f, const EncoderModel& model,
                             EncoderCache* cache = nullptr);

// d_layer_outputs[i] is the external gradient on layer i's output (the mesh
// feeds one per depth). Accumulates layer grads; returns d(s0).
Tensor encoder_backward(const EncoderModel& model, const EncoderCache& cache,
                        const std::vector<Tensor>& d_layer_outputs);

// encoder_backward + projection backward for caches from encode_features.
Tensor encode_features_backward(const EncoderModel& model, const EncoderCache& cache,
                                const std::vector<Tensor>& d_layer_outputs);

}  // namespace meshcap
