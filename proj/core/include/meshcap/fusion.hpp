#pragma once

#include <string>
#include <vector>

#include "meshcap/param_store.hpp"
#include "meshcap/tensor.hpp"

namespace meshcap {

// Threshold for the hard sigmoid gates.
struct GateConfig {
    double tau{0.3};
    void validate() const;  // 0 ≤ tau < 1
};

// Elementwise gate masks over a [T × d_model] activation A:
//   pi_m = σ(A)·𝟙(σ(A) > τ)        (visual branch)
//   pi_t = (1−σ(A))·𝟙(1−σ(A) > τ)  (text branch)
// Gated-off entries are exactly 0.0.
struct GateMasks {
    Tensor pi_m;
    Tensor pi_t;
};

GateMasks srau_gates(const Tensor& attn_out, const GateConfig& cfg);

// Per-branch fusion weights: w [2·d_model × d_model], b [d_model].
struct MeshLayerParams {
    Param* w{nullptr};
    Param* b{nullptr};
};

struct MeshParams {
    std::vector<MeshLayerParams> layers;  // one per encoder layer
    std::size_t count() const { return layers.size(); }
};

MeshParams make_mesh_params(ParamStore& store, const std::string& prefix, std::size_t n_branches,
                            std::size_t d_model, bool create, Rng* rng = nullptr,
                            double init_std = 0.02);

struct MeshAlphaCache {
    Tensor concat;  // [T × 2·d_model]: s_t ∥ (xattn + b)
    Tensor alpha;
};

// alpha = σ( concat(s_t, xattn + b) · w ), entries in (0,1).
Tensor mesh_alpha(const Tensor& s_t, const Tensor& xattn, const MeshLayerParams& p,
                  MeshAlphaCache* cache = nullptr);

// Accumulates dw/db into the store; adds the input gradients into d_s_t and
// d_xattn (which must be zero- or grad-accumulating tensors of input shape).
void mesh_alpha_backward(const MeshLayerParams& p, const MeshAlphaCache& cache,
                         const Tensor& d_alpha, Tensor& d_s_t, Tensor& d_xattn);

struct FusionOutput {
    Tensor z;                     // (1/√L) Σ alpha_i ⊙ z_i
    std::vector<Tensor> z_i;      // gated branch mixtures
    std::vector<Tensor> alpha_i;  // per-branch mesh weights
};

struct FuseCache {
    Tensor self_out;
    Tensor s_t;
    std::vector<Tensor> xattn;
    Tensor sig;           // σ(self_out)
    Tensor mask_m;        // 𝟙(σ > τ) as 0/1
    Tensor mask_t;        // 𝟙(1−σ > τ) as 0/1
    GateMasks gates;
    std::vector<MeshAlphaCache> alpha_caches;
    std::vector<Tensor> z_i;
};

// Gates computed once from self_out and shared across every branch:
//   z_i = pi_m ⊙ xattn[i] + pi_t ⊙ self_out
//   alpha_i = mesh_alpha(s_t, xattn[i], mesh[i])
//   z = (1/√L) Σ alpha_i ⊙ z_i
FusionOutput fuse_layer(const Tensor& self_out, const std::vector<Tensor>& xattn_list,
                        const MeshParams& mesh, const GateConfig& cfg, const Tensor& s_t,
                        FuseCache* cache = nullptr);

struct FuseGrads {
    Tensor d_self_out;
    std::vector<Tensor> d_xattn;
    Tensor d_s_t;
};

// Literal almost-everywhere derivative: σ factors are differentiated, the
// indicator masks are constants, so gated-off entries pass no gradient.
FuseGrads fuse_layer_backward(const MeshParams& mesh, const FuseCache& cache, const Tensor& d_z);

}  // namespace meshcap
