#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "meshcap/encoder.hpp"
#include "meshcap/grad_check.hpp"
#include "meshcap/param_store.hpp"
#include "meshcap/rng.hpp"
#include "test_util.hpp"

using namespace meshcap;

namespace {

EncoderConfig toy_config() {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.d_model = 4;
    cfg.n_heads = 2;
    cfg.ff_dim = 8;
    cfg.feature_dim = 3;
    return cfg;
}

}  // namespace

TEST_CASE("encoder config validation") {
    EncoderConfig cfg = toy_config();
    CHECK_NOTHROW(cfg.validate());
    CHECK(EncoderConfig{}.effective_ff_dim() == 4 * 768);
    CHECK(cfg.effective_ff_dim() == 8);

    cfg.n_heads = 3;  // does not divide d_model = 4
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config();
    cfg.layers = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = toy_config();
    cfg.feature_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("zero projection weights collapse features onto the bias") {
    ParamStore store;
    Rng rng(5);
    EncoderModel model = make_encoder(store, toy_config(), /*create=*/true, &rng);
    for (double& v : model.proj_w->value.data) v = 0.0;
    model.proj_b->value.data = {1.0, 2.0, 3.0, 4.0};

    Tensor features = gaussian(rng, {3, 3}, 1.0);
    Tensor projected = project_features(features, model);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(projected.at(i, j) == (double)(j + 1));
}

TEST_CASE("projection fixtures") {
    ParamStore store;
    Rng rng(6);
    EncoderConfig cfg = toy_config();
    cfg.feature_dim = 4;
    EncoderModel model = make_encoder(store, cfg, /*create=*/true, &rng);

    // identity weights pass features straight through.
    for (double& v : model.proj_w->value.data) v = 0.0;
    for (std::size_t i = 0; i < 4; ++i) model.proj_w->value.at(i, i) = 1.0;
    for (double& v : model.proj_b->value.data) v = 0.0;
    Tensor features = gaussian(rng, {2, 4}, 1.0);
    CHECK(testutil::max_abs_diff(project_features(features, model), features) == 0.0);

    // single-region hand case: [1, 2] · [[1, 0, 2, 0], [0, 1, 0, 3]] + bias.
    ParamStore store2;
    EncoderConfig cfg2 = toy_config();
    cfg2.feature_dim = 2;
    EncoderModel model2 = make_encoder(store2, cfg2, /*create=*/true, &rng);
    model2.proj_w->value = Tensor::from_rows({{1.0, 0.0, 2.0, 0.0}, {0.0, 1.0, 0.0, 3.0}});
    model2.proj_b->value.data = {0.5, 0.5, 0.5, 0.5};
    Tensor one = Tensor::from_rows({{1.0, 2.0}});
    Tensor out = project_features(one, model2);
    CHECK(out.at(0, 0) == 1.5);
    CHECK(out.at(0, 1) == 2.5);
    CHECK(out.at(0, 2) == 2.5);
    CHECK(out.at(0, 3) == 6.5);
}

TEST_CASE("encoder stack returns one refined state per layer") {
    ParamStore store;
    Rng rng(9);
    EncoderModel model = make_encoder(store, toy_config(), /*create=*/true, &rng);
    FeatureSet f{"img0", gaussian(rng, {5, 3}, 1.0)};
    EncoderStack stack = encode_features(f, model);
    REQUIRE(stack.layer_outputs.size() == 2);
    for (const Tensor& t : stack.layer_outputs) {
        CHECK(t.rows() == 5);
        CHECK(t.cols() == 4);
        CHECK(t.all_finite());
    }
    // successive layers actually transform the state.
    CHECK(testutil::max_abs_diff(stack.layer_outputs[0], stack.layer_outputs[1]) > 1e-9);
}

TEST_CASE("encoder is permutation equivariant at every depth") {
    ParamStore store;
    Rng rng(15);
    EncoderModel model = make_encoder(store, toy_config(), /*create=*/true, &rng, 0.3);
    Tensor features = gaussian(rng, {4, 3}, 1.0);

    const std::size_t perm[4] = {2, 0, 3, 1};
    Tensor shuffled({4, 3});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) shuffled.at(i, j) = features.at(perm[i], j);

    EncoderStack base = encode_features({"a", features}, model);
    EncoderStack permuted = encode_features({"b", shuffled}, model);

    for (std::size_t layer = 0; layer < 2; ++layer) {
        const Tensor& x = base.layer_outputs[layer];
        const Tensor& y = permuted.layer_outputs[layer];
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(y.at(i, j) == doctest::Approx(x.at(perm[i], j)).epsilon(1e-11));
            }
        }
    }
}

TEST_CASE("one encoder layer composes from the published primitives") {
    ParamStore store;
    Rng rng(21);
    EncoderConfig cfg = toy_config();
    cfg.layers = 1;
    EncoderModel model = make_encoder(store, cfg, /*create=*/true, &rng, 0.4);
    Tensor features = gaussian(rng, {2, 3}, 1.0);

    EncoderStack stack = encode_features({"img", features}, model);

    // replica built op by op from the same parameters.
    Tensor x = project_features(features, model);
    const EncoderLayerParams& lp = model.layers[0];
    Tensor h1 = layer_norm_forward(x, lp.ln1);
    Tensor attn = self_attention(h1, lp.attn, /*causal=*/false).out;
    Tensor x_mid = add(x, attn);
    Tensor h2 = layer_norm_forward(x_mid, lp.ln2);
    Tensor x_out = add(x_mid, feed_forward(h2, lp.ff));

    CHECK(testutil::max_abs_diff(stack.layer_outputs[0], x_out) < 1e-13);
}

TEST_CASE("feature width is validated") {
    ParamStore store;
    Rng rng(25);
    EncoderModel model = make_encoder(store, toy_config(), /*create=*/true, &rng);
    FeatureSet bad{"img", Tensor::zeros({2, 5})};
    CHECK_THROWS_AS(encode_features(bad, model), std::invalid_argument);
}

TEST_CASE("encoder gradients pass the finite-difference check") {
    ParamStore store;
    Rng rng(33);
    EncoderModel model = make_encoder(store, toy_config(), /*create=*/true, &rng, 0.4);
    Param& feats = store.add("feats", gaussian(rng, {3, 3}, 1.0));
    Tensor w0 = gaussian(rng, {3, 4}, 1.0);
    Tensor w1 = gaussian(rng, {3, 4}, 1.0);

    // weighted sum over both published depths so every path carries gradient.
    const auto loss = [&](bool accumulate) {
        EncoderCache cache;
        EncoderStack stack = encode_features({"img", feats.value}, model, &cache);
        double s = 0.0;
        for (std::size_t i = 0; i < w0.size(); ++i) {
            s += stack.layer_outputs[0].data[i] * w0.data[i];
            s += stack.layer_outputs[1].data[i] * w1.data[i];
        }
        if (accumulate) {
            Tensor d_feats = encode_features_backward(model, cache, {w0, w1});
            add_inplace(feats.grad, d_feats);
        }
        return s;
    };
    auto results = check_gradients(store, loss, std::vector<double>{1e-4, 1e-6});
    CHECK(max_rel_err(results) < 1e-4);
    // projection, 2 layers × (ln1 2 + attn 4 + ln2 2 + ff 4), features input.
    CHECK(results.size() == 2 + 24 + 1);
}
