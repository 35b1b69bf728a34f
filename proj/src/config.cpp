#include "ddgan/config.hpp"

#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace ddgan {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::string name;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value '" + v + "' for key '" + key + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value '" + v + "' for key '" + key + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config: bad boolean value '" + v + "' for key '" + key + "'");
}

#define FIELD_SIZE(key, member)                                                     \
    Field{key, [](const TrainConfig& c) { return std::to_string(c.member); },       \
          [](TrainConfig& c, const std::string& v) {                                \
              c.member = static_cast<std::size_t>(parse_u64(key, v));               \
          }}
#define FIELD_U64(key, member)                                                      \
    Field{key, [](const TrainConfig& c) { return std::to_string(c.member); },       \
          [](TrainConfig& c, const std::string& v) { c.member = parse_u64(key, v); }}
#define FIELD_DOUBLE(key, member)                                                   \
    Field{key, [](const TrainConfig& c) { return fmt_double(c.member); },           \
          [](TrainConfig& c, const std::string& v) { c.member = parse_double(key, v); }}
#define FIELD_BOOL(key, member)                                                     \
    Field{key, [](const TrainConfig& c) { return c.member ? "true" : "false"; },    \
          [](TrainConfig& c, const std::string& v) { c.member = parse_bool(key, v); }}
#define FIELD_STRING(key, member)                                 \
    Field{key, [](const TrainConfig& c) { return c.member; },     \
          [](TrainConfig& c, const std::string& v) { c.member = v; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        FIELD_SIZE("T", T),
        FIELD_SIZE("batch_size", batch_size),
        FIELD_SIZE("iterations", iterations),
        FIELD_DOUBLE("lr_g", lr_g),
        FIELD_DOUBLE("lr_d", lr_d),
        FIELD_DOUBLE("adam_beta1", adam_beta1),
        FIELD_DOUBLE("adam_beta2", adam_beta2),
        FIELD_DOUBLE("adam_eps", adam_eps),
        FIELD_DOUBLE("r1_gamma", r1_gamma),
        FIELD_SIZE("r1_interval", r1_interval),
        FIELD_DOUBLE("ema_decay", ema_decay),
        FIELD_BOOL("cosine_lr", cosine_lr),
        FIELD_SIZE("latent_dim", latent_dim),
        FIELD_BOOL("latent_enabled", latent_enabled),
        FIELD_STRING("parametrization", parametrization),
        FIELD_STRING("conditioning", conditioning),
        FIELD_BOOL("aug_baseline", aug_baseline),
        FIELD_STRING("dataset", dataset),
        FIELD_DOUBLE("dataset_std", dataset_std),
        FIELD_DOUBLE("dataset_center", dataset_center),
        FIELD_DOUBLE("beta_min", beta_min),
        FIELD_DOUBLE("beta_max", beta_max),
        FIELD_SIZE("hidden_dim", hidden_dim),
        FIELD_SIZE("hidden_layers", hidden_layers),
        FIELD_SIZE("time_embed_dim", time_embed_dim),
        FIELD_SIZE("mapping_layers", mapping_layers),
        FIELD_SIZE("mapping_dim", mapping_dim),
        FIELD_SIZE("norm_groups", norm_groups),
        FIELD_BOOL("minibatch_std", minibatch_std),
        FIELD_STRING("precision", precision),
        FIELD_STRING("init", init),
        FIELD_U64("seed", seed),
        FIELD_SIZE("metrics_interval", metrics_interval),
        FIELD_SIZE("checkpoint_interval", checkpoint_interval),
    };
    return f;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              ": expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto& f : fields()) {
            if (f.name == key) {
                f.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("config: unknown key '" + key + "'");
    }
    // validate enum-like fields eagerly
    parse_parametrization(cfg.parametrization);
    parse_conditioning(cfg.conditioning);
    parse_precision(cfg.precision);
    parse_init(cfg.init);
    make_dataset(cfg);
    if (cfg.batch_size == 0 || cfg.T == 0) throw ConfigError("config: T and batch_size must be >= 1");
    if (!(cfg.lr_g > 0) || !(cfg.lr_d > 0)) throw ConfigError("config: learning rates must be positive");
    if (!(cfg.ema_decay >= 0 && cfg.ema_decay < 1)) throw ConfigError("config: ema_decay must be in [0,1)");
    if (cfg.r1_gamma < 0) throw ConfigError("config: r1_gamma must be >= 0");
    if (cfg.metrics_interval == 0) throw ConfigError("config: metrics_interval must be >= 1");
    return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    return parse_train_config(read_text_file(path));
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    for (const auto& f : fields()) os << f.name << " = " << f.get(cfg) << "\n";
    return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

// ---- factories shared with the training module ------------------------------

std::size_t data_dim_of(const TrainConfig& cfg) {
    if (cfg.dataset == "25gaussians") return 2;
    if (cfg.dataset == "bimodal1d") return 1;
    throw ConfigError("config: unknown dataset '" + cfg.dataset + "'");
}

GaussianMixture make_dataset(const TrainConfig& cfg) {
    if (cfg.dataset == "25gaussians") return make_25gaussians(cfg.dataset_std);
    if (cfg.dataset == "bimodal1d") return make_bimodal1d(cfg.dataset_center, cfg.dataset_std);
    throw ConfigError("config: unknown dataset '" + cfg.dataset + "'");
}

Parametrization parse_parametrization(const std::string& s) {
    if (s == "x0") return Parametrization::x0;
    if (s == "direct") return Parametrization::direct;
    if (s == "noise") return Parametrization::noise;
    throw ConfigError("config: unknown parametrization '" + s + "'");
}

Conditioning parse_conditioning(const std::string& s) {
    if (s == "concat") return Conditioning::concat;
    if (s == "adaptive-norm") return Conditioning::adaptive_norm;
    throw ConfigError("config: unknown conditioning '" + s + "'");
}

Dtype parse_precision(const std::string& s) {
    if (s == "f64") return Dtype::f64;
    if (s == "f32") return Dtype::f32;
    throw ConfigError("config: unknown precision '" + s + "'");
}

InitMode parse_init(const std::string& s) {
    if (s == "zero_final") return InitMode::zero_final;
    if (s == "random_final") return InitMode::random_final;
    throw ConfigError("config: unknown init '" + s + "'");
}

GeneratorConfig generator_config(const TrainConfig& cfg) {
    GeneratorConfig g;
    g.data_dim = data_dim_of(cfg);
    g.hidden_dim = cfg.hidden_dim;
    g.hidden_layers = cfg.hidden_layers;
    g.time_embed_dim = cfg.time_embed_dim;
    g.dtype = parse_precision(cfg.precision);
    g.init = parse_init(cfg.init);
    g.latent_dim = cfg.latent_dim;
    g.latent_enabled = cfg.latent_enabled;
    g.conditioning = parse_conditioning(cfg.conditioning);
    g.parametrization = parse_parametrization(cfg.parametrization);
    g.mapping_layers = cfg.mapping_layers;
    g.mapping_dim = cfg.mapping_dim;
    g.norm_groups = cfg.norm_groups;
    return g;
}

DiscriminatorConfig discriminator_config(const TrainConfig& cfg) {
    DiscriminatorConfig d;
    d.data_dim = data_dim_of(cfg);
    d.hidden_dim = cfg.hidden_dim;
    d.hidden_layers = cfg.hidden_layers;
    d.time_embed_dim = cfg.time_embed_dim;
    d.dtype = parse_precision(cfg.precision);
    d.init = parse_init(cfg.init);
    d.minibatch_std = cfg.minibatch_std;
    d.pairwise = !cfg.aug_baseline;
    return d;
}

}  // namespace ddgan
