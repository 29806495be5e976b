#include "meshcap/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "meshcap/loss.hpp"

namespace meshcap {

void GeminiConfig::validate() const {
    if (n_layers == 0 || n_layers % 2 != 0)
        throw std::invalid_argument("decoder: n_layers must be a positive even number");
    if (d_model == 0) throw std::invalid_argument("decoder: d_model must be positive");
    if (n_heads == 0 || d_model % n_heads != 0)
        throw std::invalid_argument("decoder: n_heads must divide d_model");
    if (vocab_size == 0) throw std::invalid_argument("decoder: vocab_size must be positive");
    if (max_positions == 0) throw std::invalid_argument("decoder: max_positions must be positive");
    if (mesh_layers == 0) throw std::invalid_argument("decoder: mesh_layers must be positive");
    if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("decoder: tau must be in [0, 1)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be positive");
    if (early_stop_patience == 0)
        throw std::invalid_argument("train: early_stop_patience must be positive");
    if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("train: tau must be in [0, 1)");
}

namespace {

std::string layer_prefix(const std::string& prefix, std::size_t i) {
    return prefix + ".layer" + std::to_string(i);
}

void check_shape(const Param* p, std::vector<std::size_t> want, const char* what) {
    if (p->value.shape != want)
        throw std::invalid_argument(std::string("decoder: loaded tensor shape mismatch for ") +
                                    what);
}

GeminiModel wire_decoder(ParamStore& store, const GeminiConfig& cfg, bool create_plain,
                         bool fused, bool create_fusion, Rng* rng, double init_std,
                         const std::string& prefix) {
    cfg.validate();
    GeminiModel model;
    model.cfg = cfg;
    model.fused = fused;

    if (create_plain) {
        if (!rng) throw std::invalid_argument("decoder: rng required for fresh weights");
        model.tok_emb =
            &store.add(prefix + ".tok_emb", gaussian(*rng, {cfg.vocab_size, cfg.d_model}, init_std));
        model.pos_emb = &store.add(prefix + ".pos_emb",
                                   gaussian(*rng, {cfg.max_positions, cfg.d_model}, init_std));
    } else {
        model.tok_emb = &store.at(prefix + ".tok_emb");
        model.pos_emb = &store.at(prefix + ".pos_emb");
        check_shape(model.tok_emb, {cfg.vocab_size, cfg.d_model}, "token embedding");
        check_shape(model.pos_emb, {cfg.max_positions, cfg.d_model}, "positional embedding");
    }

    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        const std::string base = layer_prefix(prefix, i);
        DecoderLayerParams layer;
        layer.ln1 = make_layer_norm(store, base + ".ln1", cfg.d_model, create_plain);
        layer.attn = make_attention_params(store, base + ".attn", cfg.d_model, cfg.n_heads,
                                           create_plain, rng, init_std, false);
        layer.ln2 = make_layer_norm(store, base + ".ln2", cfg.d_model, create_plain);
        layer.ff = make_feed_forward(store, base + ".ff", cfg.d_model, cfg.effective_ff_dim(),
                                     create_plain, rng, init_std);
        if (fused && i >= cfg.split_index()) {
            layer.has_fusion = true;
            for (std::size_t j = 0; j < cfg.mesh_layers; ++j) {
                layer.fusion.xattn.push_back(
                    make_attention_params(store, base + ".xattn" + std::to_string(j), cfg.d_model,
                                          cfg.n_heads, create_fusion, rng, init_std,
                                          /*zero_out_proj=*/true));
            }
            layer.fusion.mesh = make_mesh_params(store, base + ".mesh", cfg.mesh_layers,
                                                 cfg.d_model, create_fusion, rng, init_std);
        }
        model.layers.push_back(std::move(layer));
    }

    model.final_ln = make_layer_norm(store, prefix + ".final_ln", cfg.d_model, create_plain);
    if (create_plain) {
        model.head_w =
            &store.add(prefix + ".head.w", gaussian(*rng, {cfg.d_model, cfg.vocab_size}, init_std));
    } else {
        model.head_w = &store.at(prefix + ".head.w");
        check_shape(model.head_w, {cfg.d_model, cfg.vocab_size}, "output head");
    }
    return model;
}

void freeze_pretrained_half(GeminiModel& model) {
    model.tok_emb->frozen = true;
    model.pos_emb->frozen = true;
    for (std::size_t i = 0; i < model.cfg.split_index(); ++i) {
        DecoderLayerParams& layer = model.layers[i];
        for (Param* p : {layer.ln1.gain, layer.ln1.bias, layer.attn.w_q, layer.attn.w_k,
                         layer.attn.w_v, layer.attn.w_o, layer.ln2.gain, layer.ln2.bias,
                         layer.ff.w1, layer.ff.b1, layer.ff.w2, layer.ff.b2}) {
            p->frozen = true;
        }
    }
}

}  // namespace

GeminiModel make_decoder(ParamStore& store, const GeminiConfig& cfg, bool create, Rng* rng,
                         double init_std, const std::string& prefix) {
    return wire_decoder(store, cfg, create, /*fused=*/false, /*create_fusion=*/false, rng,
                        init_std, prefix);
}

GeminiModel build_gemini(const ParamStore& src, const GeminiConfig& cfg, ParamStore& dst,
                         Rng& rng, double init_std, const std::string& prefix) {
    cfg.validate();
    const std::string guard = layer_prefix(prefix, cfg.n_layers) + ".ln1.gain";
    if (!src.contains(layer_prefix(prefix, cfg.n_layers - 1) + ".ln1.gain") ||
        src.contains(guard))
        throw std::invalid_argument("build_gemini: pretrained decoder layer count mismatch");
    if (src.contains(layer_prefix(prefix, cfg.split_index()) + ".xattn0.w_q"))
        throw std::invalid_argument("build_gemini: source already carries fusion blocks");

    const std::string want = prefix + ".";
    for (const auto& [name, param] : src) {
        if (name.rfind(want, 0) == 0) dst.add(name, param.value);
    }
    GeminiModel model = wire_decoder(dst, cfg, /*create_plain=*/false, /*fused=*/true,
                                     /*create_fusion=*/true, &rng, init_std, prefix);
    freeze_pretrained_half(model);
    return model;
}

GeminiModel bind_gemini(ParamStore& store, const GeminiConfig& cfg, const std::string& prefix) {
    GeminiModel model = wire_decoder(store, cfg, /*create_plain=*/false, /*fused=*/true,
                                     /*create_fusion=*/false, nullptr, 0.0, prefix);
    freeze_pretrained_half(model);
    return model;
}

Tensor decoder_forward(const GeminiModel& model, const std::vector<std::int64_t>& tokens,
                       const EncoderStack* enc, DecoderCache* cache) {
    const GeminiConfig& cfg = model.cfg;
    const std::size_t t_len = tokens.size();
    if (t_len == 0) throw std::invalid_argument("decoder_forward: empty token sequence");
    if (t_len > cfg.max_positions)
        throw std::invalid_argument("decoder_forward: sequence longer than max_positions");
    for (std::int64_t id : tokens)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw std::invalid_argument("decoder_forward: token id outside vocabulary");
    if (model.fused) {
        if (!enc) throw std::invalid_argument("decoder_forward: fused model needs encoder outputs");
        if (enc->layer_outputs.size() != cfg.mesh_layers)
            throw std::invalid_argument("decoder_forward: encoder stack depth mismatch");
        for (const Tensor& s : enc->layer_outputs)
            if (s.rank() != 2 || s.cols() != cfg.d_model)
                throw std::invalid_argument("decoder_forward: encoder output width mismatch");
    }

    Tensor x = Tensor::zeros({t_len, cfg.d_model});
    for (std::size_t t = 0; t < t_len; ++t) {
        const double* te = model.tok_emb->value.data.data() +
                           static_cast<std::size_t>(tokens[t]) * cfg.d_model;
        const double* pe = model.pos_emb->value.data.data() + t * cfg.d_model;
        double* row = x.data.data() + t * cfg.d_model;
        for (std::size_t c = 0; c < cfg.d_model; ++c) row[c] = te[c] + pe[c];
    }

    if (cache) {
        cache->tokens = tokens;
        cache->layers.assign(model.layers.size(), DecoderLayerCache{});
    }
    GateConfig gate{cfg.tau};

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const DecoderLayerParams& layer = model.layers[i];
        DecoderLayerCache* lc = cache ? &cache->layers[i] : nullptr;
        if (lc) lc->x_in = x;

        Tensor h1 = layer_norm_forward(x, layer.ln1, lc ? &lc->ln1 : nullptr);
        if (lc) lc->h1 = h1;
        AttentionResult self =
            self_attention(h1, layer.attn, /*causal=*/true, lc ? &lc->self_attn : nullptr);

        if (layer.has_fusion) {
            if (lc) {
                lc->self_out = self.out;
                lc->xattn.assign(cfg.mesh_layers, AttentionCache{});
            }
            std::vector<Tensor> branches;
            branches.reserve(cfg.mesh_layers);
            for (std::size_t j = 0; j < cfg.mesh_layers; ++j) {
                branches.push_back(cross_attention(self.out, enc->layer_outputs[j],
                                                   layer.fusion.xattn[j],
                                                   lc ? &lc->xattn[j] : nullptr));
            }
            FusionOutput fo =
                fuse_layer(self.out, branches, layer.fusion.mesh, gate, h1, lc ? &lc->fuse : nullptr);
            add_inplace(x, fo.z);
        } else {
            add_inplace(x, self.out);
        }

        Tensor h2 = layer_norm_forward(x, layer.ln2, lc ? &lc->ln2 : nullptr);
        Tensor f = feed_forward(h2, layer.ff, lc ? &lc->ff : nullptr);
        add_inplace(x, f);
    }

    Tensor y = layer_norm_forward(x, model.final_ln, cache ? &cache->final_ln : nullptr);
    if (cache) cache->final_hidden = y;
    return matmul(y, model.head_w->value);
}

std::vector<Tensor> decoder_backward(const GeminiModel& model, const DecoderCache& cache,
                                     const Tensor& d_logits) {
    const GeminiConfig& cfg = model.cfg;
    const std::size_t t_len = cache.tokens.size();
    if (d_logits.rank() != 2 || d_logits.rows() != t_len || d_logits.cols() != cfg.vocab_size)
        throw std::invalid_argument("decoder_backward: d_logits shape mismatch");

    std::vector<Tensor> d_enc;
    if (model.fused) {
        // Depth sizes come from the cached cross-attention memories.
        for (std::size_t j = 0; j < cfg.mesh_layers; ++j) {
            const std::size_t k = cache.layers[cfg.split_index()].xattn[j].memory_in.rows();
            d_enc.push_back(Tensor::zeros({k, cfg.d_model}));
        }
    }

    add_inplace(model.head_w->grad, matmul_tn(cache.final_hidden, d_logits));
    Tensor dy = matmul_nt(d_logits, model.head_w->value);
    Tensor dx = layer_norm_param_backward(dy, model.final_ln, cache.final_ln);

    for (std::size_t i = model.layers.size(); i-- > 0;) {
        const DecoderLayerParams& layer = model.layers[i];
        const DecoderLayerCache& lc = cache.layers[i];

        Tensor dh2 = feed_forward_backward(dx, layer.ff, lc.ff);
        add_inplace(dx, layer_norm_param_backward(dh2, layer.ln2, lc.ln2));

        Tensor dh1;
        if (layer.has_fusion) {
            FuseGrads fg = fuse_layer_backward(layer.fusion.mesh, lc.fuse, dx);
            Tensor da = std::move(fg.d_self_out);
            for (std::size_t j = 0; j < cfg.mesh_layers; ++j) {
                Tensor dq, dm;
                cross_attention_backward(layer.fusion.xattn[j], lc.xattn[j], fg.d_xattn[j], dq, dm);
                add_inplace(da, dq);
                add_inplace(d_enc[j], dm);
            }
            dh1 = self_attention_backward(layer.attn, lc.self_attn, da);
            add_inplace(dh1, fg.d_s_t);
        } else {
            dh1 = self_attention_backward(layer.attn, lc.self_attn, dx);
        }
        add_inplace(dx, layer_norm_param_backward(dh1, layer.ln1, lc.ln1));
    }

    for (std::size_t t = 0; t < t_len; ++t) {
        const double* row = dx.data.data() + t * cfg.d_model;
        double* te = model.tok_emb->grad.data.data() +
                     static_cast<std::size_t>(cache.tokens[t]) * cfg.d_model;
        double* pe = model.pos_emb->grad.data.data() + t * cfg.d_model;
        for (std::size_t c = 0; c < cfg.d_model; ++c) {
            te[c] += row[c];
            pe[c] += row[c];
        }
    }
    return d_enc;
}

// ---------------------------------------------------------------------------
// training / inference drivers
// ---------------------------------------------------------------------------

namespace {

// Teacher-forced forward/backward for one sample; returns the sample loss.
// d_logits is scaled by `weight` before backprop so batch gradients average.
double caption_step(const GeminiModel& model, const EncoderModel* encoder,
                    const FeatureSet* features, const std::vector<std::int64_t>& tokens,
                    double weight) {
    if (tokens.size() < 2)
        throw std::invalid_argument("train: sequences need at least two tokens");
    std::vector<std::int64_t> inputs(tokens.begin(), tokens.end() - 1);
    std::vector<std::int64_t> targets(tokens.begin() + 1, tokens.end());

    EncoderCache ecache;
    EncoderStack enc;
    const EncoderStack* enc_ptr = nullptr;
    if (features) {
        enc = encode_features(*features, *encoder, &ecache);
        enc_ptr = &enc;
    }

    DecoderCache dcache;
    Tensor logits = decoder_forward(model, inputs, enc_ptr, &dcache);
    Tensor d_logits;
    const double loss = cross_entropy(logits, targets, /*ignore_id=*/-1, &d_logits);
    for (double& g : d_logits.data) g *= weight;

    std::vector<Tensor> d_enc = decoder_backward(model, dcache, d_logits);
    if (features) {
        encode_features_backward(*encoder, ecache, d_enc);
    }
    return loss;
}

}  // namespace

double pretrain_lm_step(ParamStore& store, const GeminiModel& model,
                        const std::vector<std::vector<std::int64_t>>& batch,
                        const OptimHyper& hyper) {
    if (model.fused)
        throw std::invalid_argument("pretrain: model must carry no cross-attention blocks");
    if (batch.empty()) throw std::invalid_argument("pretrain: empty batch");
    store.zero_grads();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& seq : batch) {
        total += caption_step(model, nullptr, nullptr, seq, inv_b);
    }
    adamw_step(store, hyper);
    return total * inv_b;
}

double train_step(ParamStore& store, const GeminiModel& model, const EncoderModel& encoder,
                  const std::vector<const TrainSample*>& batch, const OptimHyper& hyper) {
    if (!model.fused) throw std::invalid_argument("train: model has no fusion half");
    if (batch.empty()) throw std::invalid_argument("train: empty batch");
    store.zero_grads();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const TrainSample* s : batch) {
        if (s->features.features.size() == 0)
            throw std::invalid_argument("train: missing features for image '" +
                                        s->features.image_id + "'");
        total += caption_step(model, &encoder, &s->features, s->tokens, inv_b);
    }
    adamw_step(store, hyper);
    return total * inv_b;
}

double evaluate_loss(const GeminiModel& model, const EncoderModel* encoder,
                     const std::vector<TrainSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("evaluate_loss: no samples");
    double total = 0.0;
    for (const TrainSample& s : samples) {
        std::vector<std::int64_t> inputs(s.tokens.begin(), s.tokens.end() - 1);
        std::vector<std::int64_t> targets(s.tokens.begin() + 1, s.tokens.end());
        if (inputs.empty())
            throw std::invalid_argument("evaluate_loss: sequences need at least two tokens");
        EncoderStack enc;
        const EncoderStack* enc_ptr = nullptr;
        if (model.fused) {
            if (!encoder) throw std::invalid_argument("evaluate_loss: fused model needs encoder");
            enc = encode_features(s.features, *encoder, nullptr);
            enc_ptr = &enc;
        }
        Tensor logits = decoder_forward(model, inputs, enc_ptr, nullptr);
        total += cross_entropy(logits, targets, /*ignore_id=*/-1, nullptr);
    }
    return total / static_cast<double>(samples.size());
}

FitResult fit(ParamStore& store, const GeminiModel& model, const EncoderModel& encoder,
              const std::vector<TrainSample>& train_set, const std::vector<TrainSample>* val_set,
              const TrainConfig& tcfg, Rng& rng) {
    tcfg.validate();
    if (train_set.empty()) throw std::invalid_argument("fit: empty training set");
    const std::vector<TrainSample>& monitor = val_set ? *val_set : train_set;

    OptimHyper hyper;
    hyper.learning_rate = tcfg.learning_rate;

    struct Snapshot {
        Tensor value, m, v;
        std::int64_t steps;
    };
    std::map<std::string, Snapshot> best_state;
    auto take_snapshot = [&] {
        best_state.clear();
        for (auto& [name, p] : store) {
            if (!p.frozen) best_state[name] = Snapshot{p.value, p.m, p.v, p.steps};
        }
    };

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    FitResult res;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
            std::vector<const TrainSample*> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) batch.push_back(&train_set[order[k]]);
            epoch_loss += train_step(store, model, encoder, batch, hyper);
            ++steps;
        }
        res.train_losses.push_back(epoch_loss / static_cast<double>(steps));

        const double val = evaluate_loss(model, &encoder, monitor);
        res.val_losses.push_back(val);
        res.epochs_run = epoch + 1;
        if (val < best) {
            best = val;
            res.best_epoch = epoch;
            since_best = 0;
            take_snapshot();
        } else if (++since_best >= tcfg.early_stop_patience) {
            break;
        }
    }

    for (auto& [name, snap] : best_state) {
        Param& p = store.at(name);
        p.value = snap.value;
        p.m = snap.m;
        p.v = snap.v;
        p.steps = snap.steps;
    }
    res.best_val_loss = best;
    return res;
}

std::vector<std::int64_t> generate_greedy(const GeminiModel& model, const EncoderStack* enc,
                                          std::size_t max_len, std::int64_t bos_id,
                                          std::int64_t eos_id) {
    if (max_len == 0) throw std::invalid_argument("generate: max_len must be at least 1");
    std::vector<std::int64_t> seq{bos_id};
    std::vector<std::int64_t> out;
    while (out.size() < max_len && seq.size() <= model.cfg.max_positions) {
        Tensor logits = decoder_forward(model, seq, enc, nullptr);
        const double* row = logits.data.data() + (logits.rows() - 1) * logits.cols();
        std::size_t best = 0;
        for (std::size_t v = 1; v < logits.cols(); ++v) {
            if (row[v] > row[best]) best = v;  // strict: ties keep the lowest id
        }
        const auto id = static_cast<std::int64_t>(best);
        if (id == eos_id) break;
        out.push_back(id);
        seq.push_back(id);
    }
    return out;
}

double perplexity_from_logits(const Tensor& logits, const std::vector<std::int64_t>& targets) {
    return std::exp(cross_entropy(logits, targets, /*ignore_id=*/-1, nullptr));
}

double perplexity(const GeminiModel& model, const std::vector<std::int64_t>& tokens,
                  const EncoderStack* enc) {
    if (tokens.size() < 2)
        throw std::invalid_argument("perplexity: need at least two tokens");
    std::vector<std::int64_t> inputs(tokens.begin(), tokens.end() - 1);
    std::vector<std::int64_t> targets(tokens.begin() + 1, tokens.end());
    Tensor logits = decoder_forward(model, inputs, enc, nullptr);
    return perplexity_from_logits(logits, targets);
}

std::size_t expected_param_count(const GeminiConfig& cfg, bool fused) {
    const std::size_t d = cfg.d_model;
    const std::size_t ff = cfg.effective_ff_dim();
    const std::size_t ln = 2 * d;
    const std::size_t attn = 4 * d * d;
    const std::size_t ff_params = d * ff + ff + ff * d + d;
    std::size_t count = cfg.vocab_size * d + cfg.max_positions * d +
                        cfg.n_layers * (2 * ln + attn + ff_params) + ln + d * cfg.vocab_size;
    if (fused) {
        const std::size_t per_block = cfg.mesh_layers * (attn + 2 * d * d + d);
        count += cfg.split_index() * per_block;
    }
    return count;
}

}  // namespace meshcap
