#pragma once
#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace kpzlab {

constexpr const char* kVersion = "kpzlab 0.3.0";
constexpr const char* kManifestFormat = "kpzlab-manifest/1";

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::string& path);

struct OutputFile {
    std::string name; // relative to the output directory
    std::string sha256;
};

struct Manifest {
    std::string subcommand;
    std::map<std::string, std::string> config;
    std::uint64_t seed = 0;
    long replicas = 0;
    std::string code_version = kVersion;
    std::vector<OutputFile> outputs;
    double wall_time = 0.0;

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
    void write(const std::string& path) const;
    static Manifest read(const std::string& path);
};

} // namespace kpzlab
