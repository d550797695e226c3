#include "thermorl/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace thermorl {

const std::vector<std::string>& RunConfig::schema() {
    static const std::vector<std::string> keys = {
        "seed",
        "out_dir",
        "chain",
        "encoder.embed_dim",
        "encoder.layers",
        "encoder.heads",
        "encoder.dropout",
        "encoder.passthrough",
        "agent.gamma",
        "agent.epsilon_start",
        "agent.epsilon_end",
        "agent.epsilon_decay_steps",
        "agent.replay_capacity",
        "agent.batch_size",
        "agent.target_sync_period",
        "agent.max_steps",
        "agent.hidden_dim",
        "agent.lr",
        "agent.reward_threshold",
        "oracle.kind",  // table | planted | mixed | surrogate
        "oracle.table_csv",
        "oracle.flip_sign",
        "oracle.planted_position",
        "oracle.planted_mut_aa",
        "oracle.surrogate_weights",
        "surrogate.epochs",
        "surrogate.batch_size",
        "surrogate.lr",
        "surrogate.encoder_lr",
        "surrogate.k_folds",
        "data.pdb",
        "data.pdb_dir",
        "data.dataset_csv",
        "train.episodes",
        "bench.methods",
        "bench.budget",
        "bench.repeats",
        "bench.init_samples",
        "design.checkpoint",
        "design.top_k",
        "eval.position_mode",  // oracle_max | q1
        "eval.temperature",
    };
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = schema();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw ConfigError("unknown key: " + key);
    values_[key] = value;
}

RunConfig RunConfig::from_map(std::map<std::string, std::string> values) {
    RunConfig cfg;
    for (const auto& [k, v] : values) cfg.set(k, v);
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            size_t e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key: " + key);
    return it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoi(it->second);
    } catch (...) {
        throw ConfigError(key + " must be an integer, got '" + it->second + "'");
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw ConfigError(key + " must be a number, got '" + it->second + "'");
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(key + " must be true/false, got '" + it->second + "'");
}

EncoderConfig RunConfig::encoder_config() const {
    EncoderConfig cfg;
    cfg.embed_dim = get_int("encoder.embed_dim", cfg.embed_dim);
    cfg.n_message_layers = get_int("encoder.layers", cfg.n_message_layers);
    cfg.n_heads = get_int("encoder.heads", cfg.n_heads);
    cfg.dropout = get_double("encoder.dropout", cfg.dropout);
    cfg.passthrough = get_bool("encoder.passthrough", cfg.passthrough);
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

AgentConfig RunConfig::agent_config() const {
    AgentConfig cfg;
    cfg.gamma = get_double("agent.gamma", cfg.gamma);
    cfg.epsilon_start = get_double("agent.epsilon_start", cfg.epsilon_start);
    cfg.epsilon_end = get_double("agent.epsilon_end", cfg.epsilon_end);
    cfg.epsilon_decay_steps = get_int("agent.epsilon_decay_steps", cfg.epsilon_decay_steps);
    cfg.replay_capacity = get_int("agent.replay_capacity", cfg.replay_capacity);
    cfg.batch_size = get_int("agent.batch_size", cfg.batch_size);
    cfg.target_sync_period = get_int("agent.target_sync_period", cfg.target_sync_period);
    cfg.max_steps_per_episode = get_int("agent.max_steps", cfg.max_steps_per_episode);
    cfg.hidden_dim = get_int("agent.hidden_dim", cfg.hidden_dim);
    cfg.lr = get_double("agent.lr", cfg.lr);
    std::string thr = get_string("agent.reward_threshold", "none");
    if (thr != "none" && !thr.empty()) cfg.reward_threshold = std::stod(thr);
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

SurrogateTrainConfig RunConfig::surrogate_config() const {
    SurrogateTrainConfig cfg;
    cfg.encoder = encoder_config();
    cfg.epochs = get_int("surrogate.epochs", cfg.epochs);
    cfg.batch_size = get_int("surrogate.batch_size", cfg.batch_size);
    cfg.lr = get_double("surrogate.lr", cfg.lr);
    cfg.encoder_lr = get_double("surrogate.encoder_lr", cfg.encoder_lr);
    cfg.k_folds = get_int("surrogate.k_folds", cfg.k_folds);
    cfg.seed = seed();
    return cfg;
}

uint64_t RunConfig::hash() const {
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& [k, v] : values_) {
        if (k == "out_dir") continue;  // output location must not affect identity
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

void write_manifest(const RunConfig& cfg, const std::string& path,
                    const std::map<std::string, std::string>& extra) {
    nlohmann::json j;
    j["format"] = "thermorl-manifest-v1";
    j["config_hash"] = cfg.hash();
    j["config"] = nlohmann::json::object();
    for (const auto& [k, v] : cfg.values())
        if (k != "out_dir") j["config"][k] = v;
    j["extra"] = nlohmann::json::object();
    for (const auto& [k, v] : extra) j["extra"][k] = v;
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
}

RunConfig load_manifest(const std::string& path, std::map<std::string, std::string>* extra) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw DataError(std::string("bad manifest json: ") + e.what());
    }
    if (j.value("format", "") != "thermorl-manifest-v1")
        throw DataError("unsupported manifest format");
    std::map<std::string, std::string> values;
    for (auto& [k, v] : j.at("config").items()) values[k] = v.get<std::string>();
    RunConfig cfg = RunConfig::from_map(std::move(values));
    if (j.contains("config_hash") && j["config_hash"].get<uint64_t>() != cfg.hash())
        throw DataError("manifest config hash mismatch");
    if (extra)
        for (auto& [k, v] : j.at("extra").items()) (*extra)[k] = v.get<std::string>();
    return cfg;
}

}  // namespace thermorl
