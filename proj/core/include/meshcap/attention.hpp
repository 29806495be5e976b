#pragma once

#include <string>
#include <vector>

#include "meshcap/param_store.hpp"
#include "meshcap/tensor.hpp"

namespace meshcap {

// Multi-head attention weights. Heads live in column blocks of combined
// [d_model × d_model] projection matrices (block h spans columns
// [h·head_dim, (h+1)·head_dim)); this is the same parameterization as a list
// of per-head [d_model × head_dim] matrices, stored contiguously. d_k is the
// scaling denominator and normally equals head_dim, but it is carried
// explicitly so the √d_k factor is independently testable.
struct AttentionParams {
    Param* w_q{nullptr};
    Param* w_k{nullptr};
    Param* w_v{nullptr};
    Param* w_o{nullptr};
    std::size_t n_heads{1};
    std::size_t d_k{0};

    std::size_t d_model() const { return w_q->value.cols(); }
    std::size_t head_dim() const { return d_model() / n_heads; }
};

// Registers (create=true) or rebinds (create=false) w_q/w_k/w_v/w_o under
// `prefix` + ".w_q" etc. Fresh weights are N(0, init_std²); zero_out_proj
// zeroes w_o so a freshly inserted block starts as an identity-free path.
AttentionParams make_attention_params(ParamStore& store, const std::string& prefix,
                                      std::size_t d_model, std::size_t n_heads, bool create,
                                      Rng* rng = nullptr, double init_std = 0.02,
                                      bool zero_out_proj = false);

struct AttentionResult {
    Tensor out;      // post output-projection, [T × d_model]
    Tensor preproj;  // concatenated head outputs before w_o (diagnostics)
};

struct AttentionCache {
    Tensor queries_in;  // [T × d_model]
    Tensor memory_in;   // [M × d_model] (same content as queries_in when self)
    Tensor q, k, v;
    std::vector<Tensor> attn;  // per head, [T × M] softmax rows
    Tensor preproj;
    bool causal{false};
};

// softmax(q_h·k_hᵀ/√d_k)·v_h per head over a single sequence; causal masks
// positions j > i with −∞ before the softmax.
AttentionResult self_attention(const Tensor& s, const AttentionParams& p, bool causal,
                               AttentionCache* cache = nullptr);

// Queries from s_t, keys/values from memory s_m; never masked.
Tensor cross_attention(const Tensor& s_t, const Tensor& s_m, const AttentionParams& p,
                       AttentionCache* cache = nullptr);

// Accumulates weight gradients into the store entries and returns d(input).
Tensor self_attention_backward(const AttentionParams& p, const AttentionCache& cache,
                               const Tensor& d_out);

// Same, split into the two input paths.
void cross_attention_backward(const AttentionParams& p, const AttentionCache& cache,
                              const Tensor& d_out, Tensor& d_queries, Tensor& d_memory);

}  // namespace meshcap
