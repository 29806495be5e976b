#include "meshcap/layers.hpp"

#include <stdexcept>

namespace meshcap {

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, std::size_t dim,
                                bool create) {
    LayerNormParams p;
    if (create) {
        p.gain = &store.add(prefix + ".gain", Tensor::full({dim}, 1.0));
        p.bias = &store.add(prefix + ".bias", Tensor::zeros({dim}));
    } else {
        p.gain = &store.at(prefix + ".gain");
        p.bias = &store.at(prefix + ".bias");
    }
    return p;
}

Tensor layer_norm_forward(const Tensor& x, const LayerNormParams& p, LayerNormCache* cache) {
    return layer_norm(x, p.gain->value, p.bias->value, p.eps, cache);
}

Tensor layer_norm_param_backward(const Tensor& dy, const LayerNormParams& p,
                                 const LayerNormCache& cache) {
    LayerNormGrads g = layer_norm_backward(dy, p.gain->value, cache);
    add_inplace(p.gain->grad, g.dgain);
    add_inplace(p.bias->grad, g.dbias);
    return std::move(g.dx);
}

FeedForwardParams make_feed_forward(ParamStore& store, const std::string& prefix,
                                    std::size_t d_model, std::size_t ff_dim, bool create,
                                    Rng* rng, double init_std) {
    if (ff_dim == 0) throw std::invalid_argument("feed_forward: ff_dim must be positive");
    FeedForwardParams p;
    if (create) {
        if (!rng) throw std::invalid_argument("feed_forward: rng required for fresh weights");
        p.w1 = &store.add(prefix + ".w1", gaussian(*rng, {d_model, ff_dim}, init_std));
        p.b1 = &store.add(prefix + ".b1", Tensor::zeros({ff_dim}));
        p.w2 = &store.add(prefix + ".w2", gaussian(*rng, {ff_dim, d_model}, init_std));
        p.b2 = &store.add(prefix + ".b2", Tensor::zeros({d_model}));
    } else {
        p.w1 = &store.at(prefix + ".w1");
        p.b1 = &store.at(prefix + ".b1");
        p.w2 = &store.at(prefix + ".w2");
        p.b2 = &store.at(prefix + ".b2");
    }
    return p;
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p, FeedForwardCache* cache) {
    if (x.rank() != 2 || x.cols() != p.w1->value.rows())
        throw std::invalid_argument("feed_forward: input width mismatch");
    Tensor pre = add_row_broadcast(matmul(x, p.w1->value), p.b1->value);
    Tensor h = gelu(pre);
    Tensor out = add_row_broadcast(matmul(h, p.w2->value), p.b2->value);
    if (cache) {
        cache->x = x;
        cache->pre = std::move(pre);
        cache->h = std::move(h);
    }
    return out;
}

Tensor feed_forward_backward(const Tensor& d_out, const FeedForwardParams& p,
                             const FeedForwardCache& cache) {
    add_inplace(p.b2->grad, colsum(d_out));
    add_inplace(p.w2->grad, matmul_tn(cache.h, d_out));
    Tensor dh = matmul_nt(d_out, p.w2->value);
    Tensor dpre = gelu_backward(cache.pre, dh);
    add_inplace(p.b1->grad, colsum(dpre));
    add_inplace(p.w1->grad, matmul_tn(cache.x, dpre));
    return matmul_nt(dpre, p.w1->value);
}

}  // namespace meshcap
