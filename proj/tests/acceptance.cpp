// Acceptance gate: nine end-to-end criteria, one pass/fail line each.
// Exits nonzero when any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "meshcap/bpe.hpp"
#include "meshcap/data.hpp"
#include "meshcap/decoder.hpp"
#include "meshcap/encoder.hpp"
#include "meshcap/fusion.hpp"
#include "meshcap/metrics.hpp"
#include "meshcap/optim.hpp"
#include "meshcap/selfcheck.hpp"
#include "meshcap/text.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace meshcap;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

int g_failures = 0;

void report(int id, const std::string& label, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << label;
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << "\n" << std::flush;
    if (!ok) ++g_failures;
}

using Outcome = std::pair<bool, std::string>;

void run_criterion(int id, const std::string& label, const std::function<Outcome()>& body) {
    try {
        const auto [ok, detail] = body();
        report(id, label, ok, detail);
    } catch (const std::exception& e) {
        report(id, label, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// shared toy model plumbing
// ---------------------------------------------------------------------------

GeminiConfig toy_gcfg() {
    GeminiConfig cfg;
    cfg.n_layers = 4;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.vocab_size = 40;
    cfg.max_positions = 12;
    cfg.mesh_layers = 2;
    cfg.ff_dim = 32;
    cfg.tau = 0.3;
    return cfg;
}

EncoderConfig toy_ecfg(const GeminiConfig& g, std::size_t feature_dim) {
    EncoderConfig cfg;
    cfg.layers = g.mesh_layers;
    cfg.d_model = g.d_model;
    cfg.n_heads = 2;
    cfg.ff_dim = 32;
    cfg.feature_dim = feature_dim;
    return cfg;
}

// ---------------------------------------------------------------------------
// criterion 1: exhaustive finite-difference sweep of the fused toy model
// ---------------------------------------------------------------------------

Outcome criterion_gradcheck() {
    const auto start = Clock::now();
    SelfCheckReport rep = run_model_gradcheck(12345);
    const double elapsed = seconds_since(start);

    const bool ok = rep.passed(1e-3) && rep.gate_margin > 1e-3 && elapsed < 120.0;
    std::ostringstream os;
    os << rep.groups.size() << " tensors, worst rel err " << fmt(rep.worst_rel_err())
       << ", gate margin " << fmt(rep.gate_margin) << ", " << fmt(elapsed) << "s";
    if (!(rep.gate_margin > 1e-3)) os << " [gate margin too small]";
    if (!(elapsed < 120.0)) os << " [over the 120s budget]";
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 2: conversion freezes the first half; training moves every
// trainable group while frozen tensors stay bit-identical
// ---------------------------------------------------------------------------

std::string trainable_group(const std::string& name) {
    if (name.rfind("enc.proj", 0) == 0) return "encoder projection";
    if (name.rfind("enc.layer", 0) == 0) return "encoder layers";
    if (name.find(".xattn") != std::string::npos) return "cross-attention";
    if (name.find(".mesh") != std::string::npos) return "mesh weights";
    if (name.rfind("dec.head", 0) == 0) return "output head";
    if (name.rfind("dec.final_ln", 0) == 0) return "final norm";
    if (name.find(".attn.") != std::string::npos) return "fused-half self-attention";
    if (name.find(".ln1.") != std::string::npos || name.find(".ln2.") != std::string::npos)
        return "fused-half layer norms";
    if (name.find(".ff.") != std::string::npos) return "fused-half feed-forward";
    return "other";
}

Outcome criterion_freeze_audit() {
    const GeminiConfig gcfg = toy_gcfg();
    Rng rng(301);
    ParamStore pretrained;
    make_decoder(pretrained, gcfg, /*create=*/true, &rng);
    ParamStore store;
    GeminiModel model = build_gemini(pretrained, gcfg, store, rng);
    EncoderModel encoder = make_encoder(store, toy_ecfg(gcfg, 8), /*create=*/true, &rng);

    std::map<std::string, Tensor> before;
    for (const auto& [name, param] : store) before[name] = param.value;

    std::vector<TrainSample> samples(3);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].features = {"img" + std::to_string(i), gaussian(rng, {3, 8}, 1.0)};
        samples[i].tokens = {1, static_cast<std::int64_t>(4 + 2 * i),
                             static_cast<std::int64_t>(5 + 3 * i), 2};
    }
    std::vector<const TrainSample*> batch;
    for (const auto& s : samples) batch.push_back(&s);

    OptimHyper hyper;
    hyper.learning_rate = 1e-3;
    hyper.weight_decay = 0.0;  // keep "changed" evidence gradient-driven
    for (int step = 0; step < 100; ++step) train_step(store, model, encoder, batch, hyper);

    std::size_t frozen_total = 0, frozen_clean = 0;
    std::map<std::string, bool> group_changed;
    for (const auto& [name, param] : store) {
        const bool same = testutil::bits_equal(param.value, before.at(name));
        if (param.frozen) {
            ++frozen_total;
            if (same && param.steps == 0) ++frozen_clean;
        } else {
            const std::string group = trainable_group(name);
            group_changed[group] = group_changed[group] || !same;
        }
    }

    std::vector<std::string> stale;
    for (const auto& [group, changed] : group_changed)
        if (!changed) stale.push_back(group);

    const bool ok = frozen_total > 0 && frozen_clean == frozen_total && stale.empty() &&
                    !group_changed.count("other") && store.at("dec.head.w").steps == 100;
    std::ostringstream os;
    os << frozen_clean << "/" << frozen_total << " frozen tensors bit-identical after 100 steps, "
       << group_changed.size() << " trainable groups all moved";
    for (const auto& g : stale) os << " [unmoved: " << g << "]";
    if (group_changed.count("other")) os << " [unclassified trainable tensor]";
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 3: the full training paradigm memorizes a toy caption set
// ---------------------------------------------------------------------------

Outcome criterion_end_to_end() {
    const auto start = Clock::now();
    const std::vector<std::string> vocab = {
        "sun",  "river", "stone", "bird",  "tall", "under", "red",  "walks",
        "blue", "sky",   "green", "leaf",  "wind", "over",  "gray", "cloud",
        "fox",  "jumps", "moon",  "light", "sand", "wave",  "cold", "warm"};

    std::mt19937 gen(99);
    std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
    std::uniform_int_distribution<std::size_t> sentence_len(3, 6);

    std::vector<std::string> corpus;
    for (int i = 0; i < 200; ++i) {
        std::string line;
        const std::size_t len = sentence_len(gen);
        for (std::size_t w = 0; w < len; ++w) {
            if (w) line += ' ';
            line += vocab[pick(gen)];
        }
        corpus.push_back(std::move(line));
    }

    BpeTokenizer tok = bpe_train(corpus, 256);

    GeminiConfig gcfg;
    gcfg.n_layers = 4;
    gcfg.d_model = 32;
    gcfg.n_heads = 4;
    gcfg.vocab_size = tok.vocab_size();
    gcfg.max_positions = 48;
    gcfg.mesh_layers = 2;
    gcfg.ff_dim = 64;
    gcfg.tau = 0.3;

    Rng rng(4242);
    ParamStore pretrained;
    GeminiModel plain = make_decoder(pretrained, gcfg, /*create=*/true, &rng);

    std::vector<std::vector<std::int64_t>> lm_corpus;
    for (const std::string& line : corpus) {
        auto ids = bpe_encode_wrapped(tok, line);
        if (ids.size() > gcfg.max_positions)
            return {false, "pretrain sentence spans " + std::to_string(ids.size()) + " tokens"};
        lm_corpus.push_back(std::move(ids));
    }

    OptimHyper lm_hyper;
    lm_hyper.learning_rate = 3e-3;
    lm_hyper.weight_decay = 0.0;
    double lm_loss = 0.0;
    for (int epoch = 0; epoch < 4; ++epoch) {
        for (std::size_t at = 0; at < lm_corpus.size(); at += 16) {
            std::vector<std::vector<std::int64_t>> batch(
                lm_corpus.begin() + at,
                lm_corpus.begin() + std::min(at + 16, lm_corpus.size()));
            lm_loss = pretrain_lm_step(pretrained, plain, batch, lm_hyper);
        }
    }

    ParamStore store;
    GeminiModel model = build_gemini(pretrained, gcfg, store, rng);
    EncoderModel encoder = make_encoder(store, toy_ecfg(gcfg, 8), /*create=*/true, &rng);

    // 32 images with five-word captions; features are the only way apart.
    std::vector<TrainSample> pairs(32);
    std::vector<std::string> captions(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::vector<std::string> shuffled = vocab;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        std::string caption = shuffled[0];
        for (int w = 1; w < 5; ++w) caption += " " + shuffled[w];
        captions[i] = caption;
        pairs[i].features = {"img" + std::to_string(i), gaussian(rng, {3, 8}, 1.0)};
        pairs[i].tokens = bpe_encode_wrapped(tok, caption);
        if (pairs[i].tokens.size() > gcfg.max_positions)
            return {false, "caption spans " + std::to_string(pairs[i].tokens.size()) + " tokens"};
    }
    std::vector<const TrainSample*> batch;
    for (const auto& s : pairs) batch.push_back(&s);

    OptimHyper hyper;
    hyper.learning_rate = 3e-3;
    hyper.weight_decay = 0.0;
    double loss = std::numeric_limits<double>::infinity();
    int steps = 0;
    for (steps = 1; steps <= 3000; ++steps) {
        loss = train_step(store, model, encoder, batch, hyper);
        if (loss < 0.09) break;
    }

    std::size_t exact = 0;
    EvalCorpus corpus_eval;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const EncoderStack enc = encode_features(pairs[i].features, encoder);
        const auto out = generate_greedy(model, &enc, 40, BpeTokenizer::kBos, BpeTokenizer::kEos);
        const std::vector<std::int64_t> body(pairs[i].tokens.begin() + 1,
                                             pairs[i].tokens.end() - 1);
        if (out == body) ++exact;
        EvalEntry entry;
        entry.candidate = split_tokens(normalize_text(bpe_decode(tok, out)));
        entry.references.push_back(split_tokens(normalize_text(captions[i])));
        corpus_eval[pairs[i].features.image_id] = std::move(entry);
    }
    const double train_cider = cider(corpus_eval);
    const double elapsed = seconds_since(start);
    const double exact_frac = static_cast<double>(exact) / static_cast<double>(pairs.size());

    const bool ok = loss < 0.1 && exact_frac >= 0.9 && train_cider >= 2.0 && elapsed < 300.0;
    std::ostringstream os;
    os << "pretrain loss " << fmt(lm_loss) << ", caption loss " << fmt(loss) << " after " << steps
       << " steps, " << exact << "/" << pairs.size() << " captions reproduced exactly, cider "
       << fmt(train_cider) << ", " << fmt(elapsed) << "s";
    if (!(loss < 0.1)) os << " [loss gate missed]";
    if (!(exact_frac >= 0.9)) os << " [reproduction gate missed]";
    if (!(train_cider >= 2.0)) os << " [cider gate missed]";
    if (!(elapsed < 300.0)) os << " [over the 300s budget]";
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 4: gate algebra — complement at tau 0, monotone sparsity, hard 0s
// ---------------------------------------------------------------------------

Outcome criterion_gates() {
    Rng rng(17);
    const Tensor a = gaussian(rng, {8, 16}, 2.0);

    const GateMasks open = srau_gates(a, GateConfig{0.0});
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(open.pi_m.data[i] + open.pi_t.data[i] - 1.0));
    const bool complement_ok = worst < 1e-12;

    const auto zeroed_fraction = [&](double tau) {
        const GateMasks g = srau_gates(a, GateConfig{tau});
        std::size_t zeros = 0;
        for (const double x : g.pi_m.data) zeros += (x == 0.0) ? 1 : 0;
        for (const double x : g.pi_t.data) zeros += (x == 0.0) ? 1 : 0;
        return static_cast<double>(zeros) / static_cast<double>(2 * a.data.size());
    };
    bool monotone = true;
    double prev = -1.0;
    for (const double tau : {0.0, 0.1, 0.3, 0.5}) {
        const double f = zeroed_fraction(tau);
        monotone = monotone && f >= prev;
        prev = f;
    }

    Tensor extremes({1, 2}, {8.0, -8.0});
    const GateMasks hard = srau_gates(extremes, GateConfig{0.3});
    // sigmoid(-8) < 0.3 gates the visual side off; sigmoid(8) > 0.7 gates the
    // text side off. both must be stored as exact 0.0, not merely small.
    const bool zeros_ok = hard.pi_m.data[1] == 0.0 && hard.pi_t.data[0] == 0.0 &&
                          hard.pi_m.data[0] > 0.0 && hard.pi_t.data[1] > 0.0;

    const bool ok = complement_ok && monotone && zeros_ok;
    std::ostringstream os;
    os << "complement dev " << fmt(worst) << ", zeroed fraction monotone "
       << (monotone ? "yes" : "NO") << ", gated-off entries exactly zero "
       << (zeros_ok ? "yes" : "NO");
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 5: fusion algebra — single branch bitwise, equal branches scale
// ---------------------------------------------------------------------------

Outcome criterion_fusion_algebra() {
    Rng rng(23);
    const std::size_t d = 16;
    const Tensor self_out = gaussian(rng, {5, d}, 1.0);
    const Tensor s_t = gaussian(rng, {5, d}, 1.0);

    ParamStore store1;
    MeshParams mesh1 = make_mesh_params(store1, "one", 1, d, /*create=*/true, &rng, 0.4);
    const FusionOutput single =
        fuse_layer(self_out, {gaussian(rng, {5, d}, 1.0)}, mesh1, GateConfig{0.3}, s_t);
    const Tensor expected1 = hadamard(single.alpha_i[0], single.z_i[0]);
    const bool single_ok = testutil::bits_equal(single.z, expected1);

    ParamStore store3;
    MeshParams mesh3 = make_mesh_params(store3, "three", 3, d, /*create=*/true, &rng, 0.4);
    for (std::size_t i = 1; i < 3; ++i) {
        mesh3.layers[i].w->value = mesh3.layers[0].w->value;
        mesh3.layers[i].b->value = mesh3.layers[0].b->value;
    }
    const Tensor shared = gaussian(rng, {5, d}, 1.0);
    const FusionOutput triple =
        fuse_layer(self_out, {shared, shared, shared}, mesh3, GateConfig{0.3}, s_t);
    const Tensor expected3 = scale(hadamard(triple.alpha_i[0], triple.z_i[0]), std::sqrt(3.0));
    const double triple_err = testutil::max_abs_diff(triple.z, expected3);

    const bool ok = single_ok && triple_err < 1e-12;
    std::ostringstream os;
    os << "one branch bitwise " << (single_ok ? "yes" : "NO")
       << ", three equal branches off by " << fmt(triple_err);
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 6: metric implementations against brute-force oracles
// ---------------------------------------------------------------------------

Outcome criterion_metric_oracles() {
    EvalCorpus clipped;
    clipped["img"] = {{"the", "the", "the", "the", "the", "the", "the"},
                      {{"the", "cat", "is", "on", "the", "mat"}}};
    const auto [matches, total] = modified_precision(clipped, 1);
    const bool clip_ok = matches == 2 && total == 7;

    EvalCorpus swapped;
    swapped["img"] = {{"a", "b", "c", "d"}, {{"a", "c", "b", "d"}}};
    const bool rouge_ok = std::abs(rouge_l(swapped) - 0.75) < 1e-12;

    EvalCorpus short_cand;
    short_cand["img"] = {{"a", "b"}, {{"a", "b", "c", "d"}}};
    const bool bp_ok = bleu(short_cand, 1) == std::exp(-1.0);

    std::mt19937 gen(61);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const EvalCorpus corpus = oracles::random_corpus(gen);
        worst = std::max(worst, std::abs(bleu(corpus, 1) - oracles::oracle_bleu(corpus, 1)));
        worst = std::max(worst, std::abs(bleu(corpus, 4) - oracles::oracle_bleu(corpus, 4)));
        worst = std::max(worst, std::abs(rouge_l(corpus) - oracles::oracle_rouge_l(corpus)));
        worst = std::max(worst, std::abs(cider(corpus) - oracles::oracle_cider(corpus)));
    }
    const bool oracle_ok = worst < 1e-6;

    const bool ok = clip_ok && rouge_ok && bp_ok && oracle_ok;
    std::ostringstream os;
    os << "clipped (" << matches << "," << total << "), swap rouge "
       << (rouge_ok ? "0.75" : fmt(rouge_l(swapped))) << ", brevity penalty exact "
       << (bp_ok ? "yes" : "NO") << ", worst oracle gap over 20 corpora " << fmt(worst);
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 7: similarity filter keeps the boundary and reconciles its stats
// ---------------------------------------------------------------------------

Outcome criterion_filter() {
    EmbeddingTable table;
    table.dim = 2;
    table.by_id["aligned"] = {{0.0, 3.0}, {0.0, 3.0}};       // similarity 1.0
    table.by_id["boundary"] = {{3.0, 4.0}, {1.0, 0.0}};      // 3/5 = 0.6 exactly
    table.by_id["below"] = {{2.99, 4.0}, {1.0, 0.0}};        // just under 0.6
    table.by_id["orthogonal"] = {{1.0, 0.0}, {0.0, 1.0}};    // similarity 0.0

    std::vector<CaptionRecord> records(4);
    records[0] = {"i1", "c1", "", "aligned"};
    records[1] = {"i2", "c2", "", "boundary"};
    records[2] = {"i3", "c3", "", "below"};
    records[3] = {"i4", "c4", "", "orthogonal"};

    const FilterResult r = filter_dataset(records, table, 0.6);
    const bool partition_ok = r.kept.size() == 2 && r.rejected.size() == 2 &&
                              r.kept[0].image_id == "i1" && r.kept[1].image_id == "i2" &&
                              r.rejected[0].image_id == "i3" && r.rejected[1].image_id == "i4";
    const bool sims_ok = r.stats.records.size() == 4 && r.stats.records[0].similarity == 1.0 &&
                         r.stats.records[1].similarity == 0.6 &&
                         r.stats.records[2].similarity < 0.6 &&
                         r.stats.records[3].similarity == 0.0;
    const bool stats_ok = r.stats.total == 4 && r.stats.kept == 2 && r.stats.rejected == 2 &&
                          r.stats.rejection_rate == 0.5;

    const bool ok = partition_ok && sims_ok && stats_ok;
    std::ostringstream os;
    os << "kept {1.0, 0.6}, rejected {" << fmt(r.stats.records[2].similarity)
       << ", 0.0}, rejection rate " << fmt(r.stats.rejection_rate);
    if (!partition_ok) os << " [partition wrong]";
    if (!sims_ok) os << " [similarities wrong]";
    if (!stats_ok) os << " [stats wrong]";
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 8: a zeroed output head yields uniform logits, so perplexity
// equals the vocabulary size
// ---------------------------------------------------------------------------

Outcome criterion_perplexity_ceiling() {
    GeminiConfig cfg = toy_gcfg();
    Rng rng(53);
    ParamStore store;
    GeminiModel model = make_decoder(store, cfg, /*create=*/true, &rng);
    for (double& x : store.at("dec.head.w").value.data) x = 0.0;

    const double ppl = perplexity(model, {1, 5, 7, 9, 2});
    const double rel = std::abs(ppl - static_cast<double>(cfg.vocab_size)) /
                       static_cast<double>(cfg.vocab_size);
    const bool ok = rel < 1e-9;
    return {ok, "perplexity " + fmt(ppl) + " vs vocabulary " + std::to_string(cfg.vocab_size) +
                    ", rel err " + fmt(rel)};
}

// ---------------------------------------------------------------------------
// criterion 9: the seeded cli pipeline is reproducible byte for byte
// ---------------------------------------------------------------------------

Outcome criterion_cli_determinism() {
    const auto dir = testutil::make_scratch_dir("acceptance_cli");

    const auto cfg_path = dir / "run.toml";
    testutil::write_file(cfg_path,
                         "threads = 1\n"
                         "[model]\n"
                         "n_layers = 2\n"
                         "d_model = 16\n"
                         "n_heads = 2\n"
                         "max_positions = 32\n"
                         "mesh_layers = 1\n"
                         "ff_dim = 32\n"
                         "tau = 0.3\n"
                         "[encoder]\n"
                         "layers = 1\n"
                         "n_heads = 2\n"
                         "ff_dim = 32\n"
                         "feature_dim = 4\n"
                         "[train]\n"
                         "learning_rate = 1e-3\n"
                         "batch_size = 4\n"
                         "max_epochs = 2\n"
                         "early_stop_patience = 2\n"
                         "[pretrain]\n"
                         "epochs = 2\n"
                         "batch_size = 8\n"
                         "learning_rate = 1e-3\n"
                         "vocab_size = 64\n"
                         "[generate]\n"
                         "max_len = 12\n");

    const auto corpus_path = dir / "corpus.txt";
    testutil::write_file(corpus_path,
                         "red bird sings\n"
                         "tall stone wall\n"
                         "blue sky above\n"
                         "red stone path\n"
                         "bird on wall\n"
                         "sky above stone\n"
                         "tall red bird\n"
                         "wall of stone\n"
                         "blue bird sings\n"
                         "path above all\n"
                         "red sky above\n"
                         "stone bird path\n");

    const auto caps_path = dir / "captions.jsonl";
    testutil::write_file(caps_path,
                         "{\"image_id\":\"a\",\"caption\":\"red bird\"}\n"
                         "{\"image_id\":\"b\",\"caption\":\"tall stone\"}\n"
                         "{\"image_id\":\"c\",\"caption\":\"blue sky\"}\n"
                         "{\"image_id\":\"d\",\"caption\":\"stone path\"}\n"
                         "{\"image_id\":\"e\",\"caption\":\"bird sings\"}\n"
                         "{\"image_id\":\"f\",\"caption\":\"red sky\"}\n");

    const auto feats_path = dir / "features.jsonl";
    std::ostringstream feats;
    for (int i = 0; i < 6; ++i) {
        const char id = static_cast<char>('a' + i);
        feats << "{\"image_id\":\"" << id << "\",\"features\":[[" << 0.1 * (i + 1) << ",0.5,"
              << -0.2 * i << ",1.0],[0.3," << 0.25 * i << ",-0.5,0.75]]}\n";
    }
    testutil::write_file(feats_path, feats.str());

    const auto run_pipeline = [&](const std::string& out_dir) -> std::string {
        const std::string base = "--config " + cfg_path.string() + " --seed 7 --out " + out_dir;
        std::string log;
        const std::vector<std::string> invocations = {
            "pretrain " + base + " --corpus " + corpus_path.string(),
            "convert " + base + " --checkpoint " + out_dir + "/pretrained.ckpt",
            "train " + base + " --checkpoint " + out_dir + "/fused.ckpt --captions " +
                caps_path.string() + " --features " + feats_path.string(),
            "generate " + base + " --checkpoint " + out_dir + "/trained.ckpt --features " +
                feats_path.string(),
            "evaluate " + base + " --candidates " + out_dir + "/captions.jsonl --references " +
                caps_path.string(),
        };
        for (const std::string& inv : invocations) {
            if (testutil::run_cli(inv, &log) != 0)
                throw std::runtime_error("cli stage failed: " + inv + "\n" + log);
        }
        return log;
    };

    run_pipeline((dir / "out_a").string());
    run_pipeline((dir / "out_b").string());

    std::vector<std::string> mismatched;
    for (const char* artifact : {"pretrained.ckpt", "fused.ckpt", "trained.ckpt",
                                 "captions.jsonl", "train_report.json", "eval_report.json"}) {
        const std::string a = testutil::read_file(dir / "out_a" / artifact);
        const std::string b = testutil::read_file(dir / "out_b" / artifact);
        if (a != b || a.empty()) mismatched.push_back(artifact);
    }

    const bool ok = mismatched.empty();
    std::ostringstream os;
    if (ok) {
        os << "two seeded runs produced byte-identical checkpoints, captions, and reports";
    } else {
        os << "differing artifacts:";
        for (const auto& m : mismatched) os << " " << m;
    }
    return {ok, os.str()};
}

}  // namespace

int main() {
    run_criterion(1, "exhaustive finite-difference gradient check of the fused model",
                  criterion_gradcheck);
    run_criterion(2, "conversion freezes the pretrained half under live training",
                  criterion_freeze_audit);
    run_criterion(3, "pretrain/convert/train paradigm memorizes a toy caption set",
                  criterion_end_to_end);
    run_criterion(4, "srau gates: complement at tau 0, monotone sparsity, exact zeros",
                  criterion_gates);
    run_criterion(5, "fusion algebra: single-branch bitwise, equal-branch scaling",
                  criterion_fusion_algebra);
    run_criterion(6, "captioning metrics agree with brute-force oracles", criterion_metric_oracles);
    run_criterion(7, "similarity filter keeps the boundary and reconciles stats", criterion_filter);
    run_criterion(8, "zeroed head perplexity equals the vocabulary size",
                  criterion_perplexity_ceiling);
    run_criterion(9, "seeded cli pipeline runs are byte-identical", criterion_cli_determinism);

    if (g_failures > 0) {
        std::cout << g_failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all 9 criteria passed\n";
    return 0;
}
