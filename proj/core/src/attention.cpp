#include "meshcap/attention.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace meshcap {

namespace {

void check_params(const AttentionParams& p) {
    const std::size_t d = p.w_q->value.cols();
    for (const Param* w : {p.w_q, p.w_k, p.w_v, p.w_o}) {
        if (w->value.rank() != 2 || w->value.rows() != d || w->value.cols() != d)
            throw std::invalid_argument("attention: weight matrices must all be d_model square");
    }
    if (p.n_heads == 0 || d % p.n_heads != 0)
        throw std::invalid_argument("attention: n_heads must divide d_model");
    if (p.d_k == 0) throw std::invalid_argument("attention: d_k must be positive");
}

// Shared forward: queries from x_q, keys/values from x_m.
AttentionResult attend(const Tensor& x_q, const Tensor& x_m, const AttentionParams& p,
                       bool causal, AttentionCache* cache) {
    check_params(p);
    const std::size_t d = p.d_model();
    if (x_q.rank() != 2 || x_q.cols() != d || x_m.rank() != 2 || x_m.cols() != d)
        throw std::invalid_argument("attention: input width must equal d_model");
    if (causal && x_q.rows() != x_m.rows())
        throw std::invalid_argument("attention: causal mask needs query and key counts equal");

    const std::size_t t_len = x_q.rows();
    const std::size_t m_len = x_m.rows();
    const std::size_t hd = p.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.d_k));
    const double neg_inf = -std::numeric_limits<double>::infinity();

    Tensor q = matmul(x_q, p.w_q->value);
    Tensor k = matmul(x_m, p.w_k->value);
    Tensor v = matmul(x_m, p.w_v->value);

    Tensor preproj = Tensor::zeros({t_len, d});
    std::vector<Tensor> attn_rows;
    attn_rows.reserve(p.n_heads);
    for (std::size_t h = 0; h < p.n_heads; ++h) {
        Tensor q_h = col_range(q, h * hd, hd);
        Tensor k_h = col_range(k, h * hd, hd);
        Tensor v_h = col_range(v, h * hd, hd);
        Tensor scores = scale(matmul_nt(q_h, k_h), inv_sqrt_dk);
        if (causal) {
            for (std::size_t i = 0; i < t_len; ++i)
                for (std::size_t j = i + 1; j < m_len; ++j) scores.at(i, j) = neg_inf;
        }
        Tensor attn = softmax_rows(scores);
        add_col_range(preproj, h * hd, matmul(attn, v_h));
        attn_rows.push_back(std::move(attn));
    }

    AttentionResult res;
    res.out = matmul(preproj, p.w_o->value);
    res.preproj = preproj;
    if (cache) {
        cache->queries_in = x_q;
        cache->memory_in = x_m;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->attn = std::move(attn_rows);
        cache->preproj = std::move(preproj);
        cache->causal = causal;
    }
    return res;
}

// Shared backward. d_q_in/d_m_in are assigned (not accumulated).
void attend_backward(const AttentionParams& p, const AttentionCache& cache, const Tensor& d_out,
                     Tensor& d_q_in, Tensor& d_m_in) {
    const std::size_t d = p.d_model();
    const std::size_t t_len = cache.queries_in.rows();
    const std::size_t m_len = cache.memory_in.rows();
    const std::size_t hd = p.head_dim();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(p.d_k));
    if (d_out.rank() != 2 || d_out.rows() != t_len || d_out.cols() != d)
        throw std::invalid_argument("attention backward: d_out shape mismatch");

    add_inplace(p.w_o->grad, matmul_tn(cache.preproj, d_out));
    Tensor d_pre = matmul_nt(d_out, p.w_o->value);

    Tensor dq = Tensor::zeros({t_len, d});
    Tensor dk = Tensor::zeros({m_len, d});
    Tensor dv = Tensor::zeros({m_len, d});
    for (std::size_t h = 0; h < p.n_heads; ++h) {
        Tensor d_pre_h = col_range(d_pre, h * hd, hd);
        Tensor q_h = col_range(cache.q, h * hd, hd);
        Tensor k_h = col_range(cache.k, h * hd, hd);
        Tensor v_h = col_range(cache.v, h * hd, hd);
        const Tensor& attn = cache.attn[h];

        Tensor d_attn = matmul_nt(d_pre_h, v_h);
        add_col_range(dv, h * hd, matmul_tn(attn, d_pre_h));
        Tensor d_scores = softmax_rows_backward(attn, d_attn);
        add_col_range(dq, h * hd, scale(matmul(d_scores, k_h), inv_sqrt_dk));
        add_col_range(dk, h * hd, scale(matmul_tn(d_scores, q_h), inv_sqrt_dk));
    }

    add_inplace(p.w_q->grad, matmul_tn(cache.queries_in, dq));
    add_inplace(p.w_k->grad, matmul_tn(cache.memory_in, dk));
    add_inplace(p.w_v->grad, matmul_tn(cache.memory_in, dv));

    d_q_in = matmul_nt(dq, p.w_q->value);
    d_m_in = matmul_nt(dk, p.w_k->value);
    add_inplace(d_m_in, matmul_nt(dv, p.w_v->value));
}

}  // namespace

AttentionParams make_attention_params(ParamStore& store, const std::string& prefix,
                                      std::size_t d_model, std::size_t n_heads, bool create,
                                      Rng* rng, double init_std, bool zero_out_proj) {
    if (n_heads == 0 || d_model % n_heads != 0)
        throw std::invalid_argument("attention: n_heads must divide d_model");
    AttentionParams p;
    p.n_heads = n_heads;
    p.d_k = d_model / n_heads;
    auto wire = [&](const char* leaf, bool zero) -> Param* {
        const std::string name = prefix + "." + leaf;
        if (!create) return &store.at(name);
        if (zero) return &store.add(name, Tensor::zeros({d_model, d_model}));
        if (!rng) throw std::invalid_argument("attention: rng required for fresh weights");
        return &store.add(name, gaussian(*rng, {d_model, d_model}, init_std));
    };
    p.w_q = wire("w_q", false);
    p.w_k = wire("w_k", false);
    p.w_v = wire("w_v", false);
    p.w_o = wire("w_o", zero_out_proj);
    check_params(p);
    return p;
}

AttentionResult self_attention(const Tensor& s, const AttentionParams& p, bool causal,
                               AttentionCache* cache) {
    return attend(s, s, p, causal, cache);
}

Tensor cross_attention(const Tensor& s_t, const Tensor& s_m, const AttentionParams& p,
                       AttentionCache* cache) {
    return attend(s_t, s_m, p, false, cache).out;
}

Tensor self_attention_backward(const AttentionParams& p, const AttentionCache& cache,
                               const Tensor& d_out) {
    Tensor d_q_in, d_m_in;
    attend_backward(p, cache, d_out, d_q_in, d_m_in);
    add_inplace(d_q_in, d_m_in);
    return d_q_in;
}

void cross_attention_backward(const AttentionParams& p, const AttentionCache& cache,
                              const Tensor& d_out, Tensor& d_queries, Tensor& d_memory) {
    attend_backward(p, cache, d_out, d_queries, d_memory);
}

}  // namespace meshcap
