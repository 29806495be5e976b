#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "meshcap/attention.hpp"
#include "meshcap/bpe.hpp"
#include "meshcap/decoder.hpp"
#include "meshcap/encoder.hpp"
#include "meshcap/fusion.hpp"
#include "meshcap/metrics.hpp"
#include "meshcap/param_store.hpp"

using namespace meshcap;

namespace {

constexpr std::size_t kDModel = 64;
constexpr std::size_t kHeads = 4;

GeminiConfig bench_gcfg() {
    GeminiConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = kDModel;
    cfg.n_heads = kHeads;
    cfg.vocab_size = 512;
    cfg.max_positions = 128;
    cfg.mesh_layers = 2;
    cfg.ff_dim = 128;
    cfg.tau = 0.3;
    return cfg;
}

std::vector<std::int64_t> bench_tokens(std::size_t len) {
    std::vector<std::int64_t> tokens(len);
    for (std::size_t i = 0; i < len; ++i) tokens[i] = static_cast<std::int64_t>(4 + (i * 7) % 500);
    return tokens;
}

EvalCorpus bench_corpus(std::size_t n_images) {
    std::mt19937 gen(7);
    std::uniform_int_distribution<int> word(0, 29);
    std::uniform_int_distribution<int> len(4, 14);
    const auto sentence = [&] {
        std::vector<std::string> toks;
        const int n = len(gen);
        for (int i = 0; i < n; ++i) toks.push_back("w" + std::to_string(word(gen)));
        return toks;
    };
    EvalCorpus corpus;
    for (std::size_t i = 0; i < n_images; ++i) {
        EvalEntry e;
        e.candidate = sentence();
        for (int r = 0; r < 3; ++r) e.references.push_back(sentence());
        corpus["img" + std::to_string(i)] = std::move(e);
    }
    return corpus;
}

void BM_self_attention_forward(benchmark::State& state) {
    const auto seq_len = static_cast<std::size_t>(state.range(0));
    Rng rng(11);
    ParamStore store;
    AttentionParams p = make_attention_params(store, "attn", kDModel, kHeads, true, &rng);
    const Tensor s = gaussian(rng, {seq_len, kDModel}, 1.0);
    for (auto _ : state) {
        AttentionResult r = self_attention(s, p, /*causal=*/true);
        benchmark::DoNotOptimize(r.out.data.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_self_attention_forward)->Arg(16)->Arg(64)->Arg(128)->Complexity();

void BM_self_attention_backward(benchmark::State& state) {
    const auto seq_len = static_cast<std::size_t>(state.range(0));
    Rng rng(13);
    ParamStore store;
    AttentionParams p = make_attention_params(store, "attn", kDModel, kHeads, true, &rng);
    const Tensor s = gaussian(rng, {seq_len, kDModel}, 1.0);
    AttentionCache cache;
    self_attention(s, p, /*causal=*/true, &cache);
    const Tensor d_out = gaussian(rng, {seq_len, kDModel}, 1.0);
    for (auto _ : state) {
        store.zero_grads();
        Tensor d_in = self_attention_backward(p, cache, d_out);
        benchmark::DoNotOptimize(d_in.data.data());
    }
}
BENCHMARK(BM_self_attention_backward)->Arg(16)->Arg(64);

void BM_fuse_layer(benchmark::State& state) {
    const std::size_t branches = 3;
    const std::size_t seq_len = 32;
    Rng rng(17);
    ParamStore store;
    MeshParams mesh = make_mesh_params(store, "mesh", branches, kDModel, true, &rng, 0.02);
    const Tensor self_out = gaussian(rng, {seq_len, kDModel}, 1.0);
    const Tensor s_t = gaussian(rng, {seq_len, kDModel}, 1.0);
    std::vector<Tensor> xattn;
    for (std::size_t i = 0; i < branches; ++i) xattn.push_back(gaussian(rng, {seq_len, kDModel}, 1.0));
    for (auto _ : state) {
        FusionOutput out = fuse_layer(self_out, xattn, mesh, GateConfig{0.3}, s_t);
        benchmark::DoNotOptimize(out.z.data.data());
    }
}
BENCHMARK(BM_fuse_layer);

void BM_decoder_forward_fused(benchmark::State& state) {
    const auto seq_len = static_cast<std::size_t>(state.range(0));
    const GeminiConfig gcfg = bench_gcfg();
    Rng rng(19);
    ParamStore pretrained;
    make_decoder(pretrained, gcfg, true, &rng);
    ParamStore store;
    GeminiModel model = build_gemini(pretrained, gcfg, store, rng);
    EncoderConfig ecfg;
    ecfg.layers = gcfg.mesh_layers;
    ecfg.d_model = gcfg.d_model;
    ecfg.n_heads = kHeads;
    ecfg.ff_dim = 128;
    ecfg.feature_dim = 32;
    EncoderModel encoder = make_encoder(store, ecfg, true, &rng);
    const FeatureSet features{"img", gaussian(rng, {16, 32}, 1.0)};
    const EncoderStack enc = encode_features(features, encoder);
    const auto tokens = bench_tokens(seq_len);
    for (auto _ : state) {
        Tensor logits = decoder_forward(model, tokens, &enc);
        benchmark::DoNotOptimize(logits.data.data());
    }
}
BENCHMARK(BM_decoder_forward_fused)->Arg(16)->Arg(48);

void BM_train_step(benchmark::State& state) {
    const GeminiConfig gcfg = bench_gcfg();
    Rng rng(23);
    ParamStore pretrained;
    make_decoder(pretrained, gcfg, true, &rng);
    ParamStore store;
    GeminiModel model = build_gemini(pretrained, gcfg, store, rng);
    EncoderConfig ecfg;
    ecfg.layers = gcfg.mesh_layers;
    ecfg.d_model = gcfg.d_model;
    ecfg.n_heads = kHeads;
    ecfg.ff_dim = 128;
    ecfg.feature_dim = 32;
    EncoderModel encoder = make_encoder(store, ecfg, true, &rng);
    std::vector<TrainSample> samples(4);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].features = {"img" + std::to_string(i), gaussian(rng, {16, 32}, 1.0)};
        samples[i].tokens = bench_tokens(12);
        samples[i].tokens.front() = 1;
        samples[i].tokens.back() = 2;
    }
    std::vector<const TrainSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);
    OptimHyper hyper;
    for (auto _ : state) {
        double loss = train_step(store, model, encoder, batch, hyper);
        benchmark::DoNotOptimize(loss);
    }
}
BENCHMARK(BM_train_step);

void BM_metrics_evaluate(benchmark::State& state) {
    const EvalCorpus corpus = bench_corpus(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        EvalReport rep = evaluate(corpus);
        benchmark::DoNotOptimize(rep.cider);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_metrics_evaluate)->Arg(8)->Arg(64)->Arg(256)->Complexity();

void BM_bpe_encode(benchmark::State& state) {
    std::vector<std::string> corpus;
    std::mt19937 gen(31);
    std::uniform_int_distribution<int> word(0, 49);
    for (int i = 0; i < 300; ++i) {
        std::string line;
        for (int w = 0; w < 8; ++w) {
            if (w) line += ' ';
            line += "tok" + std::to_string(word(gen));
        }
        corpus.push_back(std::move(line));
    }
    const BpeTokenizer tok = bpe_train(corpus, 512);
    const std::string text = corpus[0] + " " + corpus[1] + " " + corpus[2];
    for (auto _ : state) {
        auto ids = bpe_encode(tok, text);
        benchmark::DoNotOptimize(ids.data());
    }
}
BENCHMARK(BM_bpe_encode);

}  // namespace

BENCHMARK_MAIN();
