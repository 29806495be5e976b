#include "meshcap/run_config.hpp"

#include <cmath>
#include <set>

namespace meshcap {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "threads",
        "out_dir",
        "paths.captions",
        "paths.val_captions",
        "paths.features",
        "paths.embeddings",
        "paths.corpus",
        "paths.checkpoint",
        "paths.candidates",
        "paths.references",
        "model.n_layers",
        "model.d_model",
        "model.n_heads",
        "model.max_positions",
        "model.mesh_layers",
        "model.ff_dim",
        "model.tau",
        "encoder.layers",
        "encoder.n_heads",
        "encoder.ff_dim",
        "encoder.feature_dim",
        "train.learning_rate",
        "train.batch_size",
        "train.max_epochs",
        "train.early_stop_patience",
        "pretrain.epochs",
        "pretrain.batch_size",
        "pretrain.learning_rate",
        "pretrain.vocab_size",
        "filter.threshold",
        "generate.max_len",
    };
    return keys;
}

std::int64_t positive_int(const TomlTable& t, const std::string& key, std::int64_t fallback) {
    const std::int64_t v = t.get_int_or(key, fallback);
    if (v <= 0) throw ConfigError(key + " must be positive, got " + std::to_string(v));
    return v;
}

double positive_real(const TomlTable& t, const std::string& key, double fallback) {
    const double v = t.get_double_or(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(key + " must be a positive finite number");
    return v;
}

} // namespace

RunConfig RunConfig::from_toml(const TomlTable& table) {
    for (const std::string& key : table.keys())
        if (known_keys().count(key) == 0) throw ConfigError("unknown config key: " + key);

    RunConfig cfg;

    const std::int64_t seed = table.get_int_or("seed", 0);
    if (seed < 0) throw ConfigError("seed must be non-negative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.threads = static_cast<int>(positive_int(table, "threads", cfg.threads));
    cfg.out_dir = table.get_string_or("out_dir", cfg.out_dir);
    if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");

    cfg.captions = table.get_string_or("paths.captions", "");
    cfg.val_captions = table.get_string_or("paths.val_captions", "");
    cfg.features = table.get_string_or("paths.features", "");
    cfg.embeddings = table.get_string_or("paths.embeddings", "");
    cfg.corpus = table.get_string_or("paths.corpus", "");
    cfg.checkpoint = table.get_string_or("paths.checkpoint", "");
    cfg.candidates = table.get_string_or("paths.candidates", "");
    cfg.references = table.get_string_or("paths.references", "");

    cfg.model.n_layers = static_cast<std::size_t>(
        positive_int(table, "model.n_layers", static_cast<std::int64_t>(cfg.model.n_layers)));
    cfg.model.d_model = static_cast<std::size_t>(
        positive_int(table, "model.d_model", static_cast<std::int64_t>(cfg.model.d_model)));
    cfg.model.n_heads = static_cast<std::size_t>(
        positive_int(table, "model.n_heads", static_cast<std::int64_t>(cfg.model.n_heads)));
    cfg.model.max_positions = static_cast<std::size_t>(positive_int(
        table, "model.max_positions", static_cast<std::int64_t>(cfg.model.max_positions)));
    cfg.model.mesh_layers = static_cast<std::size_t>(positive_int(
        table, "model.mesh_layers", static_cast<std::int64_t>(cfg.model.mesh_layers)));
    const std::int64_t ff = table.get_int_or("model.ff_dim", 0);
    if (ff < 0) throw ConfigError("model.ff_dim must be non-negative (0 selects 4*d_model)");
    cfg.model.ff_dim = static_cast<std::size_t>(ff);
    cfg.model.tau = table.get_double_or("model.tau", cfg.model.tau);

    cfg.encoder.layers = static_cast<std::size_t>(
        positive_int(table, "encoder.layers", static_cast<std::int64_t>(cfg.encoder.layers)));
    cfg.encoder.d_model = cfg.model.d_model; // cross-attention requires matching widths
    cfg.encoder.n_heads = static_cast<std::size_t>(
        positive_int(table, "encoder.n_heads", static_cast<std::int64_t>(cfg.encoder.n_heads)));
    const std::int64_t eff = table.get_int_or("encoder.ff_dim", 0);
    if (eff < 0) throw ConfigError("encoder.ff_dim must be non-negative (0 selects 4*d_model)");
    cfg.encoder.ff_dim = static_cast<std::size_t>(eff);
    cfg.encoder.feature_dim = static_cast<std::size_t>(positive_int(
        table, "encoder.feature_dim", static_cast<std::int64_t>(cfg.encoder.feature_dim)));

    cfg.train.learning_rate =
        positive_real(table, "train.learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = static_cast<std::size_t>(
        positive_int(table, "train.batch_size", static_cast<std::int64_t>(cfg.train.batch_size)));
    cfg.train.max_epochs = static_cast<std::size_t>(
        positive_int(table, "train.max_epochs", static_cast<std::int64_t>(cfg.train.max_epochs)));
    cfg.train.early_stop_patience = static_cast<std::size_t>(positive_int(
        table, "train.early_stop_patience",
        static_cast<std::int64_t>(cfg.train.early_stop_patience)));
    cfg.train.tau = cfg.model.tau;

    cfg.pretrain_epochs = static_cast<int>(positive_int(table, "pretrain.epochs", cfg.pretrain_epochs));
    cfg.pretrain_batch_size =
        static_cast<int>(positive_int(table, "pretrain.batch_size", cfg.pretrain_batch_size));
    cfg.pretrain_learning_rate =
        positive_real(table, "pretrain.learning_rate", cfg.pretrain_learning_rate);
    cfg.pretrain_vocab_size = static_cast<std::size_t>(positive_int(
        table, "pretrain.vocab_size", static_cast<std::int64_t>(cfg.pretrain_vocab_size)));

    cfg.filter_threshold = table.get_double_or("filter.threshold", cfg.filter_threshold);
    cfg.generate_max_len = static_cast<std::size_t>(positive_int(
        table, "generate.max_len", static_cast<std::int64_t>(cfg.generate_max_len)));

    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    try {
        model.validate();
        encoder.validate();
        train.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (encoder.d_model != model.d_model)
        throw ConfigError("encoder width must match model.d_model");
    if (encoder.layers != model.mesh_layers)
        throw ConfigError("encoder.layers must equal model.mesh_layers (the mesh reads every depth)");
    if (!std::isfinite(filter_threshold) || filter_threshold < 0.0 || filter_threshold > 1.0)
        throw ConfigError("filter.threshold must lie in [0, 1]");
    if (pretrain_vocab_size < 5)
        throw ConfigError("pretrain.vocab_size must leave room for specials plus an alphabet");
    if (generate_max_len == 0) throw ConfigError("generate.max_len must be positive");
    if (generate_max_len + 1 > model.max_positions)
        throw ConfigError("generate.max_len plus the start token must fit in model.max_positions");
}

const std::string& require_path(const std::string& value, const std::string& key) {
    if (value.empty()) throw ConfigError("missing required config value: " + key);
    return value;
}

} // namespace meshcap
