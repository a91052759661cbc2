#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace melrvq {

// Every CLI command writes one of these next to its outputs: the config it
// ran with (hashed), the seed, and content hashes of every input and output
// file, so a rerun can be checked for byte-level reproducibility.
struct RunManifest {
    std::string command;
    uint64_t seed = 0;
    std::string config_hash;  // fnv1a64 hex of the effective config JSON
    std::vector<std::pair<std::string, std::string>> inputs;   // path, hash
    std::vector<std::pair<std::string, std::string>> outputs;  // path, hash
    double wall_seconds = 0.0;
    int warnings = 0;

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    void write(const std::string& path) const;
};

}  // namespace melrvq
