#include "meshcap/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace meshcap {

void GateConfig::validate() const {
    if (!(tau >= 0.0 && tau < 1.0)) throw std::invalid_argument("gate tau must be in [0, 1)");
}

GateMasks srau_gates(const Tensor& attn_out, const GateConfig& cfg) {
    cfg.validate();
    if (!attn_out.all_finite()) throw std::invalid_argument("srau_gates: non-finite input");
    GateMasks g;
    g.pi_m = Tensor(attn_out.shape);
    g.pi_t = Tensor(attn_out.shape);
    for (std::size_t i = 0; i < attn_out.data.size(); ++i) {
        const double s = sigmoid_scalar(attn_out.data[i]);
        g.pi_m.data[i] = s > cfg.tau ? s : 0.0;
        g.pi_t.data[i] = (1.0 - s) > cfg.tau ? (1.0 - s) : 0.0;
    }
    return g;
}

MeshParams make_mesh_params(ParamStore& store, const std::string& prefix, std::size_t n_branches,
                            std::size_t d_model, bool create, Rng* rng, double init_std) {
    if (n_branches == 0) throw std::invalid_argument("mesh: need at least one branch");
    MeshParams mesh;
    for (std::size_t i = 0; i < n_branches; ++i) {
        const std::string base = prefix + std::to_string(i);
        MeshLayerParams p;
        if (create) {
            if (!rng) throw std::invalid_argument("mesh: rng required for fresh weights");
            p.w = &store.add(base + ".w", gaussian(*rng, {2 * d_model, d_model}, init_std));
            p.b = &store.add(base + ".b", Tensor::zeros({d_model}));
        } else {
            p.w = &store.at(base + ".w");
            p.b = &store.at(base + ".b");
        }
        mesh.layers.push_back(p);
    }
    return mesh;
}

Tensor mesh_alpha(const Tensor& s_t, const Tensor& xattn, const MeshLayerParams& p,
                  MeshAlphaCache* cache) {
    const std::size_t d = p.w->value.cols();
    if (p.w->value.rows() != 2 * d) throw std::invalid_argument("mesh_alpha: w must be [2d × d]");
    if (s_t.rank() != 2 || s_t.cols() != d || !s_t.same_shape(xattn))
        throw std::invalid_argument("mesh_alpha: inputs must be matching [T × d] tensors");
    if (p.b->value.size() != d) throw std::invalid_argument("mesh_alpha: bias must be length d");

    Tensor cat = concat_features(s_t, add_row_broadcast(xattn, p.b->value));
    Tensor alpha = sigmoid(matmul(cat, p.w->value));
    if (cache) {
        cache->concat = std::move(cat);
        cache->alpha = alpha;
    }
    return alpha;
}

void mesh_alpha_backward(const MeshLayerParams& p, const MeshAlphaCache& cache,
                         const Tensor& d_alpha, Tensor& d_s_t, Tensor& d_xattn) {
    const std::size_t d = p.w->value.cols();
    Tensor d_pre = sigmoid_backward(cache.alpha, d_alpha);
    add_inplace(p.w->grad, matmul_tn(cache.concat, d_pre));
    Tensor d_cat = matmul_nt(d_pre, p.w->value);
    add_inplace(d_s_t, col_range(d_cat, 0, d));
    Tensor d_x = col_range(d_cat, d, d);
    add_inplace(p.b->grad, colsum(d_x));
    add_inplace(d_xattn, d_x);
}

FusionOutput fuse_layer(const Tensor& self_out, const std::vector<Tensor>& xattn_list,
                        const MeshParams& mesh, const GateConfig& cfg, const Tensor& s_t,
                        FuseCache* cache) {
    if (xattn_list.empty() || xattn_list.size() != mesh.count())
        throw std::invalid_argument("fuse_layer: branch count must match mesh entry count");
    for (const Tensor& x : xattn_list)
        if (!x.same_shape(self_out))
            throw std::invalid_argument("fuse_layer: branch shape mismatch");
    if (!s_t.same_shape(self_out))
        throw std::invalid_argument("fuse_layer: s_t shape mismatch");

    const std::size_t l_count = xattn_list.size();
    const double inv_sqrt_l = 1.0 / std::sqrt(static_cast<double>(l_count));
    GateMasks gates = srau_gates(self_out, cfg);

    FusionOutput out;
    out.z = Tensor(self_out.shape);
    std::vector<MeshAlphaCache> alpha_caches(l_count);
    for (std::size_t i = 0; i < l_count; ++i) {
        Tensor z_i = add(hadamard(gates.pi_m, xattn_list[i]), hadamard(gates.pi_t, self_out));
        Tensor alpha = mesh_alpha(s_t, xattn_list[i], mesh.layers[i], &alpha_caches[i]);
        axpy_inplace(out.z, 1.0, hadamard(alpha, z_i));
        out.z_i.push_back(std::move(z_i));
        out.alpha_i.push_back(std::move(alpha));
    }
    for (double& x : out.z.data) x *= inv_sqrt_l;

    if (cache) {
        cache->self_out = self_out;
        cache->s_t = s_t;
        cache->xattn = xattn_list;
        cache->sig = sigmoid(self_out);
        cache->mask_m = Tensor(self_out.shape);
        cache->mask_t = Tensor(self_out.shape);
        for (std::size_t i = 0; i < cache->sig.data.size(); ++i) {
            cache->mask_m.data[i] = cache->sig.data[i] > cfg.tau ? 1.0 : 0.0;
            cache->mask_t.data[i] = (1.0 - cache->sig.data[i]) > cfg.tau ? 1.0 : 0.0;
        }
        cache->gates = gates;
        cache->alpha_caches = std::move(alpha_caches);
        cache->z_i = out.z_i;
    }
    return out;
}

FuseGrads fuse_layer_backward(const MeshParams& mesh, const FuseCache& cache, const Tensor& d_z) {
    const std::size_t l_count = cache.xattn.size();
    const double inv_sqrt_l = 1.0 / std::sqrt(static_cast<double>(l_count));
    if (!d_z.same_shape(cache.self_out))
        throw std::invalid_argument("fuse_layer backward: d_z shape mismatch");

    FuseGrads g;
    g.d_self_out = Tensor(cache.self_out.shape);
    g.d_s_t = Tensor(cache.s_t.shape);
    g.d_xattn.assign(l_count, Tensor(cache.self_out.shape));

    Tensor d_pi_m = Tensor(cache.self_out.shape);
    Tensor d_pi_t = Tensor(cache.self_out.shape);
    for (std::size_t i = 0; i < l_count; ++i) {
        Tensor d_alpha = scale(hadamard(d_z, cache.z_i[i]), inv_sqrt_l);
        Tensor d_z_i = scale(hadamard(d_z, cache.alpha_caches[i].alpha), inv_sqrt_l);

        mesh_alpha_backward(mesh.layers[i], cache.alpha_caches[i], d_alpha, g.d_s_t, g.d_xattn[i]);

        add_inplace(g.d_xattn[i], hadamard(d_z_i, cache.gates.pi_m));
        add_inplace(g.d_self_out, hadamard(d_z_i, cache.gates.pi_t));
        add_inplace(d_pi_m, hadamard(d_z_i, cache.xattn[i]));
        add_inplace(d_pi_t, hadamard(d_z_i, cache.self_out));
    }

    // Gate path: pi_m = σ·mask_m, pi_t = (1−σ)·mask_t with the masks constant.
    for (std::size_t i = 0; i < d_pi_m.data.size(); ++i) {
        const double s = cache.sig.data[i];
        const double d_sig = d_pi_m.data[i] * cache.mask_m.data[i] -
                             d_pi_t.data[i] * cache.mask_t.data[i];
        g.d_self_out.data[i] += d_sig * s * (1.0 - s);
    }
    return g;
}

}  // namespace meshcap
