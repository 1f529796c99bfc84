#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "led/model.hpp"
#include "led/scene.hpp"
#include "led/schedule.hpp"
#include "led/training.hpp"

namespace led {

// Flat key=value configuration with '#' comments and dotted sections.
// Every key has a documented default; unknown keys are rejected. The
// effective (fully defaulted) config is echoed into every artifact header.
class Config {
public:
    Config();  // defaults only

    // Parses `key = value` lines; later assignments win.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);  // flag overrides

    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    // Canonical "key=value key=value ..." line in sorted key order.
    std::string canonical() const;
    std::string hash_hex() const;  // FNV-1a over the canonical form

    GenConfig gen_config() const;
    DiffusionSchedule schedule() const;
    ModelConfig model_config() const;
    TrainConfig train_config() const;

    // Header comment lines (tool version, seed, config hash, effective
    // config) stamped on every output file.
    std::vector<std::string> artifact_headers(std::uint64_t seed) const;

    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace led
