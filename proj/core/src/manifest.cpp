#include "melrvq/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "melrvq/errors.hpp"
#include "melrvq/hash.hpp"

namespace melrvq {

void RunManifest::add_input(const std::string& path) {
    inputs.emplace_back(path, to_hex(hash_file(path)));
}

void RunManifest::add_output(const std::string& path) {
    outputs.emplace_back(path, to_hex(hash_file(path)));
}

void RunManifest::write(const std::string& path) const {
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["wall_seconds"] = wall_seconds;
    j["warnings"] = warnings;
    nlohmann::json in = nlohmann::json::object();
    for (const auto& [p, h] : inputs) in[p] = h;
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [p, h] : outputs) out[p] = h;
    j["inputs"] = in;
    j["outputs"] = out;

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot create manifest: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("short write: " + path);
}

}  // namespace melrvq
