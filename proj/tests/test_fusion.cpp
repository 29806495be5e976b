#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "meshcap/fusion.hpp"
#include "meshcap/grad_check.hpp"
#include "meshcap/param_store.hpp"
#include "meshcap/rng.hpp"
#include "test_util.hpp"

using namespace meshcap;

namespace {

double zeroed_fraction(const GateMasks& masks) {
    std::size_t zeros = 0;
    for (double v : masks.pi_m.data)
        if (v == 0.0) ++zeros;
    for (double v : masks.pi_t.data)
        if (v == 0.0) ++zeros;
    return static_cast<double>(zeros) /
           static_cast<double>(masks.pi_m.size() + masks.pi_t.size());
}

}  // namespace

TEST_CASE("gates split an all-zero activation evenly") {
    Tensor a = Tensor::zeros({2, 3});
    GateMasks masks = srau_gates(a, GateConfig{0.3});
    for (double v : masks.pi_m.data) CHECK(v == 0.5);
    for (double v : masks.pi_t.data) CHECK(v == 0.5);
}

TEST_CASE("gates at sigma = 1/4 shut the visual branch at tau = 0.3") {
    // σ(ln(1/3)) = 0.25 < 0.3 so pi_m is exactly 0; 1−σ = 0.75 passes.
    Tensor a = Tensor::full({1, 4}, std::log(1.0 / 3.0));
    GateMasks masks = srau_gates(a, GateConfig{0.3});
    for (double v : masks.pi_m.data) CHECK(v == 0.0);
    for (double v : masks.pi_t.data) CHECK(v == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("gates with tau = 0 are exact complements") {
    Rng rng(3);
    Tensor a = gaussian(rng, {4, 6}, 2.0);
    GateMasks masks = srau_gates(a, GateConfig{0.0});
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(masks.pi_m.data[i] + masks.pi_t.data[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(masks.pi_m.data[i] > 0.0);
        CHECK(masks.pi_t.data[i] > 0.0);
    }
}

TEST_CASE("gated-off entries are bit-level zero") {
    // ±8 saturates σ well past any reasonable threshold on one side.
    Tensor a = Tensor::from_rows({{8.0, -8.0}});
    GateMasks masks = srau_gates(a, GateConfig{0.3});
    CHECK(masks.pi_t.at(0, 0) == 0.0);  // 1−σ(8) ≈ 3e-4 < 0.3
    CHECK(masks.pi_m.at(0, 1) == 0.0);  // σ(−8) ≈ 3e-4 < 0.3
    CHECK(masks.pi_m.at(0, 0) > 0.9);
    CHECK(masks.pi_t.at(0, 1) > 0.9);
}

TEST_CASE("zeroed fraction grows monotonically with tau") {
    Rng rng(7);
    Tensor a = gaussian(rng, {8, 8}, 3.0);
    double previous = -1.0;
    for (double tau : {0.0, 0.1, 0.3, 0.5}) {
        const double frac = zeroed_fraction(srau_gates(a, GateConfig{tau}));
        CHECK(frac >= previous);
        previous = frac;
    }
    // both thresholds below 1/2 leave something alive; at 0.5 one side of
    // each entry is necessarily shut.
    CHECK(zeroed_fraction(srau_gates(a, GateConfig{0.5})) >= 0.5);
}

TEST_CASE("gate config validation") {
    CHECK_THROWS_AS(GateConfig{-0.1}.validate(), std::invalid_argument);
    CHECK_THROWS_AS(GateConfig{1.0}.validate(), std::invalid_argument);
    CHECK_NOTHROW(GateConfig{0.0}.validate());
    CHECK_NOTHROW(GateConfig{0.99}.validate());
}

TEST_CASE("mesh weights of zero give alpha one half") {
    ParamStore store;
    Rng rng(11);
    MeshParams mesh = make_mesh_params(store, "mesh", 1, 3, /*create=*/true, &rng, 0.0);
    for (double& v : mesh.layers[0].w->value.data) v = 0.0;

    Tensor s_t = gaussian(rng, {2, 3}, 1.0);
    Tensor xattn = gaussian(rng, {2, 3}, 1.0);
    Tensor alpha = mesh_alpha(s_t, xattn, mesh.layers[0]);
    for (double v : alpha.data) CHECK(v == 0.5);
}

TEST_CASE("mesh alpha stays strictly inside the unit interval") {
    ParamStore store;
    Rng rng(13);
    MeshParams mesh = make_mesh_params(store, "mesh", 1, 4, /*create=*/true, &rng, 0.8);
    Tensor s_t = gaussian(rng, {5, 4}, 2.0);
    Tensor xattn = gaussian(rng, {5, 4}, 2.0);
    Tensor alpha = mesh_alpha(s_t, xattn, mesh.layers[0]);
    for (double v : alpha.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("width-one mesh alpha matches a hand computation") {
    // s_t = [1], xattn = [2], b = 0, w = [[1],[1]] stacked over the concat:
    // alpha = σ(1·1 + 2·1) = σ(3).
    ParamStore store;
    Rng rng(12);
    MeshParams mesh = make_mesh_params(store, "mesh", 1, 1, /*create=*/true, &rng, 0.0);
    mesh.layers[0].w->value = Tensor::from_rows({{1.0}, {1.0}});
    Tensor s_t = Tensor::from_rows({{1.0}});
    Tensor xattn = Tensor::from_rows({{2.0}});
    Tensor alpha = mesh_alpha(s_t, xattn, mesh.layers[0]);
    CHECK(alpha.at(0, 0) == doctest::Approx(sigmoid_scalar(3.0)).epsilon(1e-14));
}

TEST_CASE("mesh alpha backward passes the finite-difference check") {
    ParamStore store;
    Rng rng(17);
    MeshParams mesh = make_mesh_params(store, "mesh", 1, 3, /*create=*/true, &rng, 0.5);
    Param& s_t = store.add("s_t", gaussian(rng, {2, 3}, 1.0));
    Param& xattn = store.add("xattn", gaussian(rng, {2, 3}, 1.0));
    Tensor weights = gaussian(rng, {2, 3}, 1.0);

    const auto loss = [&](bool accumulate) {
        MeshAlphaCache cache;
        Tensor alpha = mesh_alpha(s_t.value, xattn.value, mesh.layers[0], &cache);
        double s = 0.0;
        for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha.data[i] * weights.data[i];
        if (accumulate) mesh_alpha_backward(mesh.layers[0], cache, weights, s_t.grad, xattn.grad);
        return s;
    };
    auto results = check_gradients(store, loss, std::vector<double>{1e-4, 1e-6});
    CHECK(results.size() == 4);  // w, b, and both inputs
    CHECK(max_rel_err(results) < 1e-4);
}

TEST_CASE("single-branch fusion is exactly alpha times the gated mixture") {
    ParamStore store;
    Rng rng(19);
    MeshParams mesh = make_mesh_params(store, "mesh", 1, 4, /*create=*/true, &rng, 0.4);
    Tensor self_out = gaussian(rng, {3, 4}, 1.0);
    Tensor s_t = gaussian(rng, {3, 4}, 1.0);
    std::vector<Tensor> xattn = {gaussian(rng, {3, 4}, 1.0)};

    FusionOutput out = fuse_layer(self_out, xattn, mesh, GateConfig{0.3}, s_t);
    REQUIRE(out.z_i.size() == 1);
    REQUIRE(out.alpha_i.size() == 1);
    // 1/√1 = 1, so the combination must be bitwise alpha ⊙ z_1.
    Tensor expected = hadamard(out.alpha_i[0], out.z_i[0]);
    CHECK(testutil::bits_equal(out.z, expected));
}

TEST_CASE("with tau 0 and identical branches the mixture collapses to self_out") {
    ParamStore store;
    Rng rng(23);
    MeshParams mesh = make_mesh_params(store, "mesh", 2, 4, /*create=*/true, &rng, 0.4);
    Tensor self_out = gaussian(rng, {3, 4}, 1.0);
    Tensor s_t = gaussian(rng, {3, 4}, 1.0);
    std::vector<Tensor> xattn = {self_out, self_out};

    FusionOutput out = fuse_layer(self_out, xattn, mesh, GateConfig{0.0}, s_t);
    // z_i = σ⊙x + (1−σ)⊙x = x up to rounding when the xattn branch equals
    // self_out and no gate is clipped.
    for (const Tensor& z : out.z_i) {
        CHECK(testutil::max_abs_diff(z, self_out) < 1e-12);
    }
}

TEST_CASE("equal branches with equal mesh weights reduce to sqrt(L) scaling") {
    ParamStore store;
    Rng rng(29);
    const std::size_t L = 3;
    MeshParams mesh = make_mesh_params(store, "mesh", L, 4, /*create=*/true, &rng, 0.4);
    // copy branch 0's weights into every branch.
    for (std::size_t i = 1; i < L; ++i) {
        mesh.layers[i].w->value = mesh.layers[0].w->value;
        mesh.layers[i].b->value = mesh.layers[0].b->value;
    }
    Tensor self_out = gaussian(rng, {3, 4}, 1.0);
    Tensor s_t = gaussian(rng, {3, 4}, 1.0);
    Tensor shared = gaussian(rng, {3, 4}, 1.0);
    std::vector<Tensor> xattn = {shared, shared, shared};

    FusionOutput out = fuse_layer(self_out, xattn, mesh, GateConfig{0.3}, s_t);
    // all alpha_i and z_i coincide, so z = (L/√L)·alpha ⊙ z_0 = √L·alpha ⊙ z_0.
    Tensor expected = scale(hadamard(out.alpha_i[0], out.z_i[0]), std::sqrt(3.0));
    CHECK(testutil::max_abs_diff(out.z, expected) < 1e-12);
}

TEST_CASE("fusion output recomputes from its published parts") {
    ParamStore store;
    Rng rng(31);
    const std::size_t L = 2;
    MeshParams mesh = make_mesh_params(store, "mesh", L, 5, /*create=*/true, &rng, 0.5);
    Tensor self_out = gaussian(rng, {4, 5}, 1.0);
    Tensor s_t = gaussian(rng, {4, 5}, 1.0);
    std::vector<Tensor> xattn = {gaussian(rng, {4, 5}, 1.0), gaussian(rng, {4, 5}, 1.0)};

    FuseCache cache;
    FusionOutput out = fuse_layer(self_out, xattn, mesh, GateConfig{0.3}, s_t, &cache);

    Tensor recombined = Tensor::zeros({4, 5});
    for (std::size_t i = 0; i < L; ++i)
        add_inplace(recombined, hadamard(out.alpha_i[i], out.z_i[i]));
    recombined = scale(recombined, 1.0 / std::sqrt(static_cast<double>(L)));
    CHECK(testutil::max_abs_diff(out.z, recombined) < 1e-12);

    // cached gate masks and branch mixtures agree with a direct evaluation.
    GateMasks masks = srau_gates(self_out, GateConfig{0.3});
    for (std::size_t i = 0; i < L; ++i) {
        Tensor z_direct =
            add(hadamard(masks.pi_m, xattn[i]), hadamard(masks.pi_t, self_out));
        CHECK(testutil::max_abs_diff(cache.z_i[i], z_direct) < 1e-14);
    }
}

TEST_CASE("branch count must match the mesh") {
    ParamStore store;
    Rng rng(37);
    MeshParams mesh = make_mesh_params(store, "mesh", 2, 4, /*create=*/true, &rng, 0.5);
    Tensor x = gaussian(rng, {2, 4}, 1.0);
    std::vector<Tensor> one_branch = {x};
    CHECK_THROWS_AS(fuse_layer(x, one_branch, mesh, GateConfig{0.3}, x), std::invalid_argument);
}

TEST_CASE("fusion gradients pass the finite-difference check away from thresholds") {
    ParamStore store;
    Rng rng(41);
    const std::size_t L = 2;
    MeshParams mesh = make_mesh_params(store, "mesh", L, 4, /*create=*/true, &rng, 0.5);
    // keep σ(self_out) clear of τ and 1−τ so the indicators cannot flip
    // inside the finite-difference window.
    GateConfig cfg{0.3};
    Tensor self_init = gaussian(rng, {3, 4}, 1.5);
    for (double& v : self_init.data) {
        const double sig = sigmoid_scalar(v);
        if (std::abs(sig - cfg.tau) < 5e-2 || std::abs(1.0 - sig - cfg.tau) < 5e-2) v += 0.5;
    }
    Param& self_out = store.add("self_out", self_init);
    Param& s_t = store.add("s_t", gaussian(rng, {3, 4}, 1.0));
    Param& x0 = store.add("x0", gaussian(rng, {3, 4}, 1.0));
    Param& x1 = store.add("x1", gaussian(rng, {3, 4}, 1.0));
    Tensor weights = gaussian(rng, {3, 4}, 1.0);

    const auto loss = [&](bool accumulate) {
        FuseCache cache;
        std::vector<Tensor> xattn = {x0.value, x1.value};
        FusionOutput out = fuse_layer(self_out.value, xattn, mesh, cfg, s_t.value, &cache);
        double s = 0.0;
        for (std::size_t i = 0; i < out.z.size(); ++i) s += out.z.data[i] * weights.data[i];
        if (accumulate) {
            FuseGrads grads = fuse_layer_backward(mesh, cache, weights);
            add_inplace(self_out.grad, grads.d_self_out);
            add_inplace(s_t.grad, grads.d_s_t);
            add_inplace(x0.grad, grads.d_xattn[0]);
            add_inplace(x1.grad, grads.d_xattn[1]);
        }
        return s;
    };
    auto results = check_gradients(store, loss, std::vector<double>{1e-4, 1e-6});
    CHECK(results.size() == 8);  // 2 mesh w, 2 mesh b, 4 inputs
    CHECK(max_rel_err(results) < 1e-4);
}
