#include "led/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "led/errors.hpp"
#include "led/version.hpp"

namespace led {

const std::map<std::string, std::string>& Config::defaults() {
    static const std::map<std::string, std::string> kDefaults = {
        // Synthetic data generation.
        {"data.n_scenes", "2500"},
        {"data.t_past", "8"},
        {"data.t_future", "12"},
        {"data.neighbors", "4"},
        {"data.modes", "2"},
        {"data.mode_weights", ""},  // empty -> uniform
        {"data.turn_angle", "0.6"},
        {"data.speed_min", "0.5"},
        {"data.speed_max", "1.5"},
        {"data.accel_noise", "0.03"},
        {"data.repulsion_gain", "0.1"},
        {"data.repulsion_cap", "0.5"},
        {"data.train_frac", "0.8"},
        // Diffusion schedule.
        {"diffusion.kind", "linear"},
        {"diffusion.beta1", "1e-4"},
        {"diffusion.betaT", "5e-2"},
        {"diffusion.steps", "100"},
        // Network widths.
        {"model.embed_dim", "64"},
        {"model.attn_ff_dim", "256"},
        {"model.attn_heads", "2"},
        {"model.attn_layers", "2"},
        {"model.conv_kernel", "3"},
        {"model.conv_out", "32"},
        {"model.gru_hidden", "256"},
        {"model.fusion_hidden", "256"},
        {"model.sigma_embed_dim", "64"},
        {"model.context_dim", "256"},
        {"model.denoiser_hidden", "256"},
        {"model.k", "20"},
        {"model.traj_scale", "6.0"},
        // Two-stage training.
        {"train.stage1_epochs", "100"},
        {"train.stage1_lr", "1e-2"},
        {"train.stage1_halve_every", "16"},
        {"train.stage2_epochs", "200"},
        {"train.stage2_lr", "1e-4"},
        {"train.stage2_decay", "0.9"},
        {"train.stage2_decay_every", "32"},
        {"train.w", "50"},
        {"train.batch_size", "32"},
        {"train.tau", "5"},
        // Evaluation.
        {"eval.coverage_threshold", "1.0"},
        {"eval.coverage_k", "4"},
        {"bench.taus", "0,3,5,10"},
    };
    return kDefaults;
}

Config::Config() : values_(defaults()) {}

void Config::set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key: '" + key + "'");
    values_[key] = value;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string stripped = strip(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = strip(stripped.substr(0, eq));
        const std::string value = strip(stripped.substr(eq + 1));
        if (!defaults().count(key)) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown config key: '" +
                              key + "'");
        }
        values_[key] = value;
    }
}

int Config::get_int(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double Config::get_double(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const std::string& v = get_string(key);
    try {
        std::size_t used = 0;
        const std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key: '" + key + "'");
    return it->second;
}

std::string Config::canonical() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& [k, v] : values_) {
        os << (first ? "" : " ") << k << "=" << v;
        first = false;
    }
    return os.str();
}

std::string Config::hash_hex() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

GenConfig Config::gen_config() const {
    GenConfig g;
    g.n_scenes = get_int("data.n_scenes");
    g.t_past = get_int("data.t_past");
    g.t_future = get_int("data.t_future");
    g.neighbors = get_int("data.neighbors");
    g.modes = get_int("data.modes");
    const std::string weights = get_string("data.mode_weights");
    if (!weights.empty()) {
        std::istringstream ws(weights);
        std::string tok;
        while (std::getline(ws, tok, ',')) {
            try {
                g.mode_weights.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ConfigError("data.mode_weights: bad entry '" + tok + "'");
            }
        }
    }
    g.turn_angle = get_double("data.turn_angle");
    g.speed_min = get_double("data.speed_min");
    g.speed_max = get_double("data.speed_max");
    g.accel_noise = get_double("data.accel_noise");
    g.repulsion_gain = get_double("data.repulsion_gain");
    g.repulsion_cap = get_double("data.repulsion_cap");
    return g;
}

DiffusionSchedule Config::schedule() const {
    return make_schedule(schedule_kind_from_string(get_string("diffusion.kind")),
                         get_double("diffusion.beta1"), get_double("diffusion.betaT"),
                         get_int("diffusion.steps"));
}

ModelConfig Config::model_config() const {
    ModelConfig m;
    m.embed_dim = get_int("model.embed_dim");
    m.attn_ff_dim = get_int("model.attn_ff_dim");
    m.attn_heads = get_int("model.attn_heads");
    m.attn_layers = get_int("model.attn_layers");
    m.conv_kernel = get_int("model.conv_kernel");
    m.conv_out = get_int("model.conv_out");
    m.gru_hidden = get_int("model.gru_hidden");
    m.fusion_hidden = get_int("model.fusion_hidden");
    m.sigma_embed_dim = get_int("model.sigma_embed_dim");
    m.context_dim = get_int("model.context_dim");
    m.denoiser_hidden = get_int("model.denoiser_hidden");
    m.k = get_int("model.k");
    m.traj_scale = get_double("model.traj_scale");
    m.validate();
    return m;
}

TrainConfig Config::train_config() const {
    TrainConfig t;
    t.stage1_epochs = get_int("train.stage1_epochs");
    t.stage1_lr = get_double("train.stage1_lr");
    t.stage1_halve_every = get_int("train.stage1_halve_every");
    t.stage2_epochs = get_int("train.stage2_epochs");
    t.stage2_lr = get_double("train.stage2_lr");
    t.stage2_decay = get_double("train.stage2_decay");
    t.stage2_decay_every = get_int("train.stage2_decay_every");
    t.w = get_double("train.w");
    t.batch_size = get_int("train.batch_size");
    t.tau = get_int("train.tau");
    if (t.stage1_lr <= 0.0 || t.stage2_lr <= 0.0) throw ConfigError("learning rates must be positive");
    if (t.w < 0.0) throw ConfigError("train.w must be non-negative");
    if (t.batch_size < 1) throw ConfigError("train.batch_size must be positive");
    return t;
}

std::vector<std::string> Config::artifact_headers(std::uint64_t seed) const {
    return {
        std::string("tool=led ") + kVersion,
        "seed=" + std::to_string(seed),
        "config_hash=" + hash_hex(),
        "config " + canonical(),
    };
}

}  // namespace led
