#include "meshcap/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace meshcap {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'M', 'C', 'A', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& f, const void* p, std::size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& f, T v) {
    write_bytes(f, &v, sizeof(T));
}

void read_bytes(std::ifstream& f, void* p, std::size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
}

template <typename T>
T read_pod(std::ifstream& f) {
    T v;
    read_bytes(f, &v, sizeof(T));
    return v;
}

json config_header(const PipelineModel& m) {
    json h;
    h["decoder"] = {{"n_layers", m.gcfg.n_layers},
                    {"d_model", m.gcfg.d_model},
                    {"n_heads", m.gcfg.n_heads},
                    {"vocab_size", m.gcfg.vocab_size},
                    {"max_positions", m.gcfg.max_positions},
                    {"mesh_layers", m.gcfg.mesh_layers},
                    {"ff_dim", m.gcfg.ff_dim},
                    {"tau", m.gcfg.tau}};
    h["encoder"] = {{"layers", m.ecfg.layers},
                    {"d_model", m.ecfg.d_model},
                    {"n_heads", m.ecfg.n_heads},
                    {"ff_dim", m.ecfg.ff_dim},
                    {"feature_dim", m.ecfg.feature_dim}};
    h["fused"] = m.fused;
    h["has_encoder"] = m.has_encoder;
    json tok;
    tok["alphabet"] = m.tokenizer.alphabet;
    tok["merges"] = json::array();
    for (const auto& [a, b] : m.tokenizer.merges) tok["merges"].push_back(json::array({a, b}));
    h["tokenizer"] = std::move(tok);
    return h;
}

void parse_header(const json& h, PipelineModel& m) {
    const json& d = h.at("decoder");
    m.gcfg.n_layers = d.at("n_layers").get<std::size_t>();
    m.gcfg.d_model = d.at("d_model").get<std::size_t>();
    m.gcfg.n_heads = d.at("n_heads").get<std::size_t>();
    m.gcfg.vocab_size = d.at("vocab_size").get<std::size_t>();
    m.gcfg.max_positions = d.at("max_positions").get<std::size_t>();
    m.gcfg.mesh_layers = d.at("mesh_layers").get<std::size_t>();
    m.gcfg.ff_dim = d.at("ff_dim").get<std::size_t>();
    m.gcfg.tau = d.at("tau").get<double>();
    const json& e = h.at("encoder");
    m.ecfg.layers = e.at("layers").get<std::size_t>();
    m.ecfg.d_model = e.at("d_model").get<std::size_t>();
    m.ecfg.n_heads = e.at("n_heads").get<std::size_t>();
    m.ecfg.ff_dim = e.at("ff_dim").get<std::size_t>();
    m.ecfg.feature_dim = e.at("feature_dim").get<std::size_t>();
    m.fused = h.at("fused").get<bool>();
    m.has_encoder = h.at("has_encoder").get<bool>();
    const json& tok = h.at("tokenizer");
    BpeTokenizer t;
    t.alphabet = tok.at("alphabet").get<std::vector<std::string>>();
    for (const json& pair : tok.at("merges"))
        t.merges.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
    t.id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (const std::string& sym : t.alphabet) t.id_to_token.push_back(sym);
    for (const auto& [a, b] : t.merges) t.id_to_token.push_back(a + b);
    for (std::size_t id = 4; id < t.id_to_token.size(); ++id)
        t.token_to_id.emplace(t.id_to_token[id], static_cast<std::int64_t>(id));
    m.tokenizer = std::move(t);
}

}  // namespace

void PipelineModel::bind() {
    decoder = fused ? bind_gemini(store, gcfg) : make_decoder(store, gcfg, /*create=*/false);
    if (has_encoder) encoder = make_encoder(store, ecfg, /*create=*/false);
}

void save_checkpoint(const std::string& path, const PipelineModel& m) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

    write_bytes(f, kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(f, kVersion);

    const std::string header = config_header(m).dump();
    write_pod<std::uint64_t>(f, header.size());
    write_bytes(f, header.data(), header.size());

    write_pod<std::uint64_t>(f, m.store.size());
    for (const auto& [name, p] : m.store) {
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
        write_bytes(f, name.data(), name.size());
        write_pod<std::uint8_t>(f, p.frozen ? 1 : 0);
        write_pod<std::int64_t>(f, p.steps);
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t dim : p.value.shape) write_pod<std::uint64_t>(f, dim);
        write_bytes(f, p.value.data.data(), p.value.data.size() * sizeof(double));
        write_bytes(f, p.m.data.data(), p.m.data.size() * sizeof(double));
        write_bytes(f, p.v.data.data(), p.v.data.size() * sizeof(double));
    }
    f.flush();
    if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

PipelineModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

    char magic[8];
    read_bytes(f, magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    if (read_pod<std::uint32_t>(f) != kVersion)
        throw std::runtime_error("checkpoint: unsupported version in '" + path + "'");

    const auto header_len = read_pod<std::uint64_t>(f);
    std::string header(header_len, '\0');
    read_bytes(f, header.data(), header.size());

    PipelineModel m;
    try {
        parse_header(json::parse(header), m);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: malformed header: ") + e.what());
    }

    const auto n_params = read_pod<std::uint64_t>(f);
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const auto name_len = read_pod<std::uint32_t>(f);
        std::string name(name_len, '\0');
        read_bytes(f, name.data(), name.size());
        const bool frozen = read_pod<std::uint8_t>(f) != 0;
        const auto steps = read_pod<std::int64_t>(f);
        const auto rank = read_pod<std::uint32_t>(f);
        std::vector<std::size_t> shape;
        std::size_t count = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(f)));
            count *= shape.back();
        }
        Tensor value(shape);
        read_bytes(f, value.data.data(), count * sizeof(double));
        Param& p = m.store.add(name, std::move(value), frozen);
        p.steps = steps;
        read_bytes(f, p.m.data.data(), count * sizeof(double));
        read_bytes(f, p.v.data.data(), count * sizeof(double));
    }
    m.bind();
    return m;
}

}  // namespace meshcap
