#pragma once

#include <string>

#include "meshcap/param_store.hpp"
#include "meshcap/tensor.hpp"

namespace meshcap {

struct LayerNormParams {
    Param* gain{nullptr};
    Param* bias{nullptr};
    double eps{1e-5};
};

LayerNormParams make_layer_norm(ParamStore& store, const std::string& prefix, std::size_t dim,
                                bool create);

Tensor layer_norm_forward(const Tensor& x, const LayerNormParams& p,
                          LayerNormCache* cache = nullptr);
// Accumulates gain/bias grads into the store and returns dx.
Tensor layer_norm_param_backward(const Tensor& dy, const LayerNormParams& p,
                                 const LayerNormCache& cache);

// Two-layer position-wise feed-forward with exact GELU:
//   out = gelu(x·w1 + b1)·w2 + b2
struct FeedForwardParams {
    Param* w1{nullptr};
    Param* b1{nullptr};
    Param* w2{nullptr};
    Param* b2{nullptr};
};

FeedForwardParams make_feed_forward(ParamStore& store, const std::string& prefix,
                                    std::size_t d_model, std::size_t ff_dim, bool create,
                                    Rng* rng = nullptr, double init_std = 0.02);

struct FeedForwardCache {
    Tensor x;
    Tensor pre;  // x·w1 + b1
    Tensor h;    // gelu(pre)
};

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p,
                    FeedForwardCache* cache = nullptr);
Tensor feed_forward_backward(const Tensor& d_out, const FeedForwardParams& p,
                             const FeedForwardCache& cache);

}  // namespace meshcap
