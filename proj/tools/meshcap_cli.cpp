// Batch pipeline driver: pretrain -> convert -> train -> generate -> evaluate,
// plus the dataset filter and the full-model gradient selfcheck. Exit codes:
// 0 success, 1 runtime failure (message names the stage), 2 config errors.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "meshcap/bpe.hpp"
#include "meshcap/checkpoint.hpp"
#include "meshcap/data.hpp"
#include "meshcap/decoder.hpp"
#include "meshcap/encoder.hpp"
#include "meshcap/metrics.hpp"
#include "meshcap/run_config.hpp"
#include "meshcap/selfcheck.hpp"
#include "meshcap/tensor.hpp"
#include "meshcap/text.hpp"
#include "meshcap/toml.hpp"

namespace fs = std::filesystem;
using namespace meshcap;
using nlohmann::json;

namespace {

struct CliArgs {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::optional<std::int64_t> threads;
    std::string out_dir;
    std::string captions;
    std::string val_captions;
    std::string features;
    std::string embeddings;
    std::string corpus;
    std::string checkpoint;
    std::string candidates;
    std::string references;
};

RunConfig load_config(const CliArgs& a) {
    TomlTable table;
    if (!a.config_path.empty()) table = parse_toml_file(a.config_path);
    if (a.seed) table.set_int("seed", *a.seed);
    if (a.threads) table.set_int("threads", *a.threads);
    if (!a.out_dir.empty()) table.set_string("out_dir", a.out_dir);
    if (!a.captions.empty()) table.set_string("paths.captions", a.captions);
    if (!a.val_captions.empty()) table.set_string("paths.val_captions", a.val_captions);
    if (!a.features.empty()) table.set_string("paths.features", a.features);
    if (!a.embeddings.empty()) table.set_string("paths.embeddings", a.embeddings);
    if (!a.corpus.empty()) table.set_string("paths.corpus", a.corpus);
    if (!a.checkpoint.empty()) table.set_string("paths.checkpoint", a.checkpoint);
    if (!a.candidates.empty()) table.set_string("paths.candidates", a.candidates);
    if (!a.references.empty()) table.set_string("paths.references", a.references);
    return RunConfig::from_toml(table);
}

std::string artifact(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Re-tags model/config invariant violations as config errors (exit 2).
template <typename Fn>
void config_scope(Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

std::vector<std::string> read_corpus_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string norm = normalize_text(line);
        if (!norm.empty()) lines.push_back(std::move(norm));
    }
    if (lines.empty()) throw std::runtime_error("corpus has no usable lines: " + path);
    return lines;
}

int run_pretrain(const RunConfig& cfg) {
    const std::string corpus_path = require_path(cfg.corpus, "paths.corpus");
    const std::vector<std::string> lines = read_corpus_lines(corpus_path);

    BpeTokenizer tok;
    config_scope([&] { tok = bpe_train(lines, cfg.pretrain_vocab_size); });

    PipelineModel pm;
    pm.gcfg = cfg.model;
    pm.gcfg.vocab_size = tok.vocab_size();
    pm.ecfg = cfg.encoder;
    config_scope([&] { pm.gcfg.validate(); });
    pm.tokenizer = std::move(tok);

    std::vector<std::vector<std::int64_t>> sequences;
    sequences.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto ids = bpe_encode_wrapped(pm.tokenizer, lines[i]);
        if (ids.size() > pm.gcfg.max_positions)
            throw std::runtime_error("corpus line " + std::to_string(i + 1) + " spans " +
                                     std::to_string(ids.size()) +
                                     " tokens, above model.max_positions");
        sequences.push_back(std::move(ids));
    }

    Rng rng(cfg.seed);
    pm.decoder = make_decoder(pm.store, pm.gcfg, /*create=*/true, &rng);

    OptimHyper hyper;
    hyper.learning_rate = cfg.pretrain_learning_rate;
    hyper.validate();

    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch_size = static_cast<std::size_t>(cfg.pretrain_batch_size);
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::size_t stop = std::min(order.size(), start + batch_size);
            std::vector<std::vector<std::int64_t>> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) batch.push_back(sequences[order[k]]);
            total += pretrain_lm_step(pm.store, pm.decoder, batch, hyper);
            ++steps;
        }
        std::cout << "epoch " << (epoch + 1) << "/" << cfg.pretrain_epochs << " lm loss "
                  << total / static_cast<double>(steps) << "\n";
    }

    const std::string out_path = artifact(cfg, "pretrained.ckpt");
    save_checkpoint(out_path, pm);
    std::cout << "vocab " << pm.tokenizer.vocab_size() << ", wrote " << out_path << "\n";
    return 0;
}

int run_convert(const RunConfig& cfg) {
    const std::string in_path = require_path(cfg.checkpoint, "paths.checkpoint");
    PipelineModel src = load_checkpoint(in_path);
    if (src.fused) throw ConfigError("checkpoint is already converted: " + in_path);

    PipelineModel dst;
    dst.gcfg = src.gcfg;  // architecture travels with the weights
    dst.gcfg.mesh_layers = cfg.model.mesh_layers;
    dst.gcfg.tau = cfg.model.tau;
    dst.ecfg = cfg.encoder;
    dst.ecfg.d_model = dst.gcfg.d_model;
    config_scope([&] {
        dst.gcfg.validate();
        dst.ecfg.validate();
        if (dst.ecfg.layers != dst.gcfg.mesh_layers)
            throw ConfigError("encoder.layers must equal model.mesh_layers");
    });
    dst.fused = true;
    dst.has_encoder = true;
    dst.tokenizer = std::move(src.tokenizer);

    Rng rng(cfg.seed);
    dst.decoder = build_gemini(src.store, dst.gcfg, dst.store, rng);
    dst.encoder = make_encoder(dst.store, dst.ecfg, /*create=*/true, &rng);

    const std::string out_path = artifact(cfg, "fused.ckpt");
    save_checkpoint(out_path, dst);
    std::size_t frozen = 0, trainable = 0;
    for (const auto& [name, p] : dst.store) (p.frozen ? frozen : trainable) += 1;
    std::cout << "converted " << in_path << ": " << frozen << " frozen / " << trainable
              << " trainable tensors, wrote " << out_path << "\n";
    return 0;
}

std::vector<TrainSample> build_samples(const std::vector<CaptionRecord>& records,
                                       const std::vector<FeatureSet>& features,
                                       const BpeTokenizer& tok, std::size_t max_positions,
                                       const std::string& what) {
    std::map<std::string, const FeatureSet*> by_id;
    for (const auto& f : features) by_id[f.image_id] = &f;

    std::vector<TrainSample> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        auto it = by_id.find(r.image_id);
        if (it == by_id.end())
            throw std::runtime_error(what + ": no features for image_id '" + r.image_id + "'");
        TrainSample s;
        s.features = *it->second;
        s.tokens = bpe_encode_wrapped(tok, normalize_text(r.caption));
        if (s.tokens.size() > max_positions)
            throw std::runtime_error(what + ": caption for image_id '" + r.image_id +
                                     "' spans " + std::to_string(s.tokens.size()) +
                                     " tokens, above model.max_positions");
        out.push_back(std::move(s));
    }
    return out;
}

int run_train(const RunConfig& cfg) {
    PipelineModel pm = load_checkpoint(require_path(cfg.checkpoint, "paths.checkpoint"));
    if (!pm.fused || !pm.has_encoder)
        throw ConfigError("train needs a converted checkpoint (run convert first)");
    pm.gcfg.tau = cfg.train.tau;
    pm.decoder.cfg.tau = cfg.train.tau;

    const auto records = load_captions_jsonl(require_path(cfg.captions, "paths.captions"));
    const auto features = load_features_jsonl(require_path(cfg.features, "paths.features"));
    const auto train_set =
        build_samples(records, features, pm.tokenizer, pm.gcfg.max_positions, "train");

    std::optional<std::vector<TrainSample>> val_set;
    if (!cfg.val_captions.empty()) {
        val_set = build_samples(load_captions_jsonl(cfg.val_captions), features, pm.tokenizer,
                                pm.gcfg.max_positions, "validation");
    }

    Rng rng(cfg.seed);
    FitResult fr;
    config_scope([&] { cfg.train.validate(); });
    fr = fit(pm.store, pm.decoder, pm.encoder, train_set, val_set ? &*val_set : nullptr,
             cfg.train, rng);

    const std::string ckpt_path = artifact(cfg, "trained.ckpt");
    save_checkpoint(ckpt_path, pm);

    json report{{"epochs_run", fr.epochs_run},
                {"best_epoch", fr.best_epoch},
                {"best_val_loss", fr.best_val_loss},
                {"train_losses", fr.train_losses},
                {"val_losses", fr.val_losses}};
    const std::string report_path = artifact(cfg, "train_report.json");
    write_json_file(report_path, report);

    std::cout << "trained " << fr.epochs_run << " epochs, best epoch " << fr.best_epoch
              << " (monitor loss " << fr.best_val_loss << "), wrote " << ckpt_path << " and "
              << report_path << "\n";
    return 0;
}

int run_generate(const RunConfig& cfg) {
    PipelineModel pm = load_checkpoint(require_path(cfg.checkpoint, "paths.checkpoint"));
    if (!pm.fused || !pm.has_encoder)
        throw ConfigError("generate needs a converted checkpoint (run convert first)");

    const auto features = load_features_jsonl(require_path(cfg.features, "paths.features"));
    if (cfg.generate_max_len + 1 > pm.gcfg.max_positions)
        throw ConfigError("generate.max_len does not fit the checkpoint's max_positions");

    std::vector<CaptionRecord> out;
    out.reserve(features.size());
    for (const auto& f : features) {
        EncoderStack stack = encode_features(f, pm.encoder);
        const auto ids = generate_greedy(pm.decoder, &stack, cfg.generate_max_len,
                                         BpeTokenizer::kBos, BpeTokenizer::kEos);
        CaptionRecord r;
        r.image_id = f.image_id;
        r.caption = bpe_decode(pm.tokenizer, ids);
        out.push_back(std::move(r));
    }

    const std::string out_path = artifact(cfg, "captions.jsonl");
    save_captions_jsonl(out_path, out);
    std::cout << "captioned " << out.size() << " images, wrote " << out_path << "\n";
    return 0;
}

int run_evaluate(const RunConfig& cfg) {
    const EvalCorpus corpus =
        load_eval_corpus(require_path(cfg.candidates, "paths.candidates"),
                         require_path(cfg.references, "paths.references"));
    const EvalReport report = evaluate(corpus);

    const std::string out_path = artifact(cfg, "eval_report.json");
    save_eval_report_json(out_path, report);
    std::cout << std::setprecision(6) << "bleu1 " << report.bleu1 << ", bleu4 " << report.bleu4
              << ", rouge_l " << report.rouge_l << ", cider " << report.cider << " ("
              << report.per_image.size() << " images), wrote " << out_path << "\n";
    return 0;
}

int run_filter(const RunConfig& cfg) {
    const auto records = load_captions_jsonl(require_path(cfg.captions, "paths.captions"));
    const auto table = load_embeddings_jsonl(require_path(cfg.embeddings, "paths.embeddings"));
    const FilterResult res = filter_dataset(records, table, cfg.filter_threshold);

    const std::string kept_path = artifact(cfg, "kept.jsonl");
    const std::string rejected_path = artifact(cfg, "rejected.jsonl");
    const std::string report_path = artifact(cfg, "filter_report.json");
    save_captions_jsonl(kept_path, res.kept);
    save_captions_jsonl(rejected_path, res.rejected);
    save_filter_report_json(report_path, res.stats);

    std::cout << std::setprecision(6) << "kept " << res.stats.kept << "/" << res.stats.total
              << " records at threshold " << cfg.filter_threshold << " (rejection rate "
              << res.stats.rejection_rate << "), wrote " << kept_path << ", " << rejected_path
              << ", " << report_path << "\n";
    return 0;
}

int run_gradcheck(const RunConfig& cfg) {
    const SelfCheckReport report = run_model_gradcheck(cfg.seed);

    json groups = json::object();
    for (const auto& g : report.groups) groups[g.param_name] = g.rel_err;
    write_json_file(artifact(cfg, "gradcheck_report.json"),
                    json{{"seed", report.seed_used},
                         {"gate_margin", report.gate_margin},
                         {"worst_rel_err", report.worst_rel_err()},
                         {"groups", groups}});

    std::cout << std::setprecision(3) << std::scientific;
    for (const auto& g : report.groups)
        std::cout << "  " << g.param_name << " rel_err " << g.rel_err << " (analytic "
                  << g.analytic << ", numeric " << g.numeric << ")\n";
    std::cout << "gate margin " << report.gate_margin << ", worst rel_err "
              << report.worst_rel_err() << " over " << report.groups.size()
              << " trainable tensors\n";
    if (!report.passed(1e-3))
        throw std::runtime_error("gradient check failed (worst rel_err above 1e-3)");
    std::cout << "gradient check passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meshed cross-attention captioning pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    CliArgs a;
    app.add_option("--config", a.config_path, "TOML run configuration");
    app.add_option("--seed", a.seed, "override the run seed");
    app.add_option("--threads", a.threads, "override the matmul thread count");
    app.add_option("--out", a.out_dir, "override the artifact directory");

    auto* pretrain = app.add_subcommand("pretrain", "train tokenizer + plain language model");
    pretrain->add_option("--corpus", a.corpus, "text corpus, one sentence per line");

    auto* convert = app.add_subcommand("convert", "insert fusion blocks and freeze the first half");
    convert->add_option("--checkpoint", a.checkpoint, "pretrained checkpoint");

    auto* train = app.add_subcommand("train", "fit the fused captioner with early stopping");
    train->add_option("--checkpoint", a.checkpoint, "converted checkpoint");
    train->add_option("--captions", a.captions, "training captions (JSON Lines)");
    train->add_option("--val-captions", a.val_captions, "validation captions (JSON Lines)");
    train->add_option("--features", a.features, "region features (JSON Lines)");

    auto* generate = app.add_subcommand("generate", "greedy-decode captions for a features file");
    generate->add_option("--checkpoint", a.checkpoint, "trained checkpoint");
    generate->add_option("--features", a.features, "region features (JSON Lines)");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "score candidates against references");
    evaluate_cmd->add_option("--candidates", a.candidates, "candidate captions (JSON Lines)");
    evaluate_cmd->add_option("--references", a.references, "reference captions (JSON Lines)");

    auto* filter = app.add_subcommand("filter", "similarity-filter a translated caption set");
    filter->add_option("--captions", a.captions, "caption records (JSON Lines)");
    filter->add_option("--embeddings", a.embeddings, "sentence embedding pairs (JSON Lines)");

    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every trainable tensor");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    std::string stage = "config";
    try {
        const RunConfig cfg = load_config(a);
        set_max_threads(static_cast<std::size_t>(cfg.threads));
        fs::create_directories(cfg.out_dir);

        if (*pretrain) stage = "pretrain";
        if (*convert) stage = "convert";
        if (*train) stage = "train";
        if (*generate) stage = "generate";
        if (*evaluate_cmd) stage = "evaluate";
        if (*filter) stage = "filter";
        if (*gradcheck) stage = "gradcheck";

        if (*pretrain) return run_pretrain(cfg);
        if (*convert) return run_convert(cfg);
        if (*train) return run_train(cfg);
        if (*generate) return run_generate(cfg);
        if (*evaluate_cmd) return run_evaluate(cfg);
        if (*filter) return run_filter(cfg);
        if (*gradcheck) return run_gradcheck(cfg);
        return 2;  // unreachable: require_subcommand(1)
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error [" << stage << "]: " << e.what() << "\n";
        return 1;
    }
}
