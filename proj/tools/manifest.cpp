#include "manifest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace kpzlab {

namespace {

std::string digest_hex(const unsigned char* md, unsigned len)
{
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

} // namespace

std::string sha256_hex(const std::string& data)
{
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
        throw std::runtime_error("sha256 failed");
    return digest_hex(md, len);
}

std::string sha256_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

nlohmann::json Manifest::to_json() const
{
    nlohmann::json j;
    j["format"] = kManifestFormat;
    j["subcommand"] = subcommand;
    j["config"] = config;
    j["seed"] = seed;
    j["replicas"] = replicas;
    j["code_version"] = code_version;
    j["outputs"] = nlohmann::json::array();
    for (const auto& o : outputs) j["outputs"].push_back({{"file", o.name}, {"sha256", o.sha256}});
    j["wall_time_s"] = wall_time;
    return j;
}

Manifest Manifest::from_json(const nlohmann::json& j)
{
    if (j.value("format", "") != kManifestFormat) throw std::runtime_error("not a kpzlab manifest");
    Manifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.replicas = j.at("replicas").get<long>();
    m.code_version = j.at("code_version").get<std::string>();
    for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("file"), o.at("sha256")});
    m.wall_time = j.value("wall_time_s", 0.0);
    return m;
}

void Manifest::write(const std::string& path) const
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json().dump(2) << "\n";
}

Manifest Manifest::read(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    return from_json(nlohmann::json::parse(in));
}

} // namespace kpzlab
