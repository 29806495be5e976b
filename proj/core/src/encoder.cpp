#include "meshcap/encoder.hpp"

#include <stdexcept>

namespace meshcap {

void EncoderConfig::validate() const {
    if (layers == 0) throw std::invalid_argument("encoder: layers must be positive");
    if (d_model == 0) throw std::invalid_argument("encoder: d_model must be positive");
    if (n_heads == 0 || d_model % n_heads != 0)
        throw std::invalid_argument("encoder: n_heads must divide d_model");
    if (feature_dim == 0) throw std::invalid_argument("encoder: feature_dim must be positive");
}

EncoderModel make_encoder(ParamStore& store, const EncoderConfig& cfg, bool create, Rng* rng,
                          double init_std, const std::string& prefix) {
    cfg.validate();
    EncoderModel model;
    model.cfg = cfg;
    if (create) {
        if (!rng) throw std::invalid_argument("encoder: rng required for fresh weights");
        model.proj_w =
            &store.add(prefix + ".proj.w", gaussian(*rng, {cfg.feature_dim, cfg.d_model}, init_std));
        model.proj_b = &store.add(prefix + ".proj.b", Tensor::zeros({cfg.d_model}));
    } else {
        model.proj_w = &store.at(prefix + ".proj.w");
        model.proj_b = &store.at(prefix + ".proj.b");
    }
    for (std::size_t i = 0; i < cfg.layers; ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i);
        EncoderLayerParams layer;
        layer.ln1 = make_layer_norm(store, base + ".ln1", cfg.d_model, create);
        layer.attn = make_attention_params(store, base + ".attn", cfg.d_model, cfg.n_heads,
                                           create, rng, init_std, false);
        layer.ln2 = make_layer_norm(store, base + ".ln2", cfg.d_model, create);
        layer.ff = make_feed_forward(store, base + ".ff", cfg.d_model, cfg.effective_ff_dim(),
                                     create, rng, init_std);
        model.layers.push_back(layer);
    }
    return model;
}

Tensor project_features(const Tensor& features, const EncoderModel& model) {
    if (features.rank() != 2 || features.cols() != model.cfg.feature_dim)
        throw std::invalid_argument("project_features: feature width mismatch");
    if (features.rows() == 0) throw std::invalid_argument("project_features: need K >= 1 regions");
    if (!features.all_finite()) throw std::invalid_argument("project_features: non-finite input");
    return add_row_broadcast(matmul(features, model.proj_w->value), model.proj_b->value);
}

Tensor project_features_backward(const EncoderModel& model, const Tensor& features_in,
                                 const Tensor& d_projected) {
    add_inplace(model.proj_w->grad, matmul_tn(features_in, d_projected));
    add_inplace(model.proj_b->grad, colsum(d_projected));
    return matmul_nt(d_projected, model.proj_w->value);
}

EncoderStack encoder_forward(const Tensor& s0, const EncoderModel& model, EncoderCache* cache) {
    if (s0.rank() != 2 || s0.cols() != model.cfg.d_model)
        throw std::invalid_argument("encoder_forward: input width must equal d_model");
    EncoderStack stack;
    Tensor x = s0;
    if (cache) cache->layers.assign(model.layers.size(), EncoderLayerCache{});
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const EncoderLayerParams& layer = model.layers[i];
        EncoderLayerCache* lc = cache ? &cache->layers[i] : nullptr;
        if (lc) lc->x_in = x;

        Tensor h = layer_norm_forward(x, layer.ln1, lc ? &lc->ln1 : nullptr);
        AttentionResult attn = self_attention(h, layer.attn, false, lc ? &lc->attn : nullptr);
        add_inplace(x, attn.out);
        if (lc) lc->x_mid = x;

        Tensor h2 = layer_norm_forward(x, layer.ln2, lc ? &lc->ln2 : nullptr);
        Tensor f = feed_forward(h2, layer.ff, lc ? &lc->ff : nullptr);
        add_inplace(x, f);

        stack.layer_outputs.push_back(x);
    }
    return stack;
}

EncoderStack encode_features(const FeatureSet& f, const EncoderModel& model, EncoderCache* cache) {
    Tensor s0 = project_features(f.features, model);
    if (cache) cache->features_in = f.features;
    return encoder_forward(s0, model, cache);
}

Tensor encoder_backward(const EncoderModel& model, const EncoderCache& cache,
                        const std::vector<Tensor>& d_layer_outputs) {
    if (d_layer_outputs.size() != model.layers.size())
        throw std::invalid_argument("encoder_backward: need one gradient per layer output");

    Tensor dx;  // running gradient on the residual stream
    for (std::size_t i = model.layers.size(); i-- > 0;) {
        const EncoderLayerParams& layer = model.layers[i];
        const EncoderLayerCache& lc = cache.layers[i];
        if (dx.data.empty()) {
            dx = d_layer_outputs[i];
        } else {
            add_inplace(dx, d_layer_outputs[i]);
        }

        Tensor dh2 = feed_forward_backward(dx, layer.ff, lc.ff);
        add_inplace(dx, layer_norm_param_backward(dh2, layer.ln2, lc.ln2));

        Tensor dh = self_attention_backward(layer.attn, lc.attn, dx);
        add_inplace(dx, layer_norm_param_backward(dh, layer.ln1, lc.ln1));
    }
    return dx;
}

Tensor encode_features_backward(const EncoderModel& model, const EncoderCache& cache,
                                const std::vector<Tensor>& d_layer_outputs) {
    Tensor d_s0 = encoder_backward(model, cache, d_layer_outputs);
    return project_features_backward(model, cache.features_in, d_s0);
}

}  // namespace meshcap
