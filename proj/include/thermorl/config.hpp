#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "thermorl/agent.hpp"
#include "thermorl/oracle.hpp"

namespace thermorl {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& why) : std::runtime_error("config error: " + why) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& why) : std::runtime_error("data error: " + why) {}
};

// Key/value run configuration: `key = value` lines, '#' comments, unknown
// keys rejected against the documented schema. CLI --set overrides win.
class RunConfig {
public:
    static RunConfig from_file(const std::string& path);
    static RunConfig from_map(std::map<std::string, std::string> values);

    void set(const std::string& key, const std::string& value);  // validates the key
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback = "") const;
    std::string require_string(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    uint64_t seed() const { return static_cast<uint64_t>(get_int("seed", 0)); }

    EncoderConfig encoder_config() const;
    AgentConfig agent_config() const;
    SurrogateTrainConfig surrogate_config() const;

    const std::map<std::string, std::string>& values() const { return values_; }
    // stable hash of everything except output-location keys
    uint64_t hash() const;

    static const std::vector<std::string>& schema();

private:
    std::map<std::string, std::string> values_;
};

// Run manifest: resolved config + seed + format versions, sufficient to
// reproduce the run bit-exactly on one platform.
void write_manifest(const RunConfig& cfg, const std::string& path,
                    const std::map<std::string, std::string>& extra = {});
RunConfig load_manifest(const std::string& path,
                        std::map<std::string, std::string>* extra = nullptr);

}  // namespace thermorl
