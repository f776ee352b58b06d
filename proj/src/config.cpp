#include "kpz/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace kpz {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v)
{
    double x = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw SchemaError("key '" + key + "' expects a number, got '" + v + "'", {key});
    return x;
}

long to_long(const std::string& key, const std::string& v)
{
    long x = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || p != v.data() + v.size())
        throw SchemaError("key '" + key + "' expects an integer, got '" + v + "'", {key});
    return x;
}

std::string join(const std::vector<std::string>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
}

std::string format(double x)
{
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

} // namespace

KeyValues parse_key_values(std::istream& is)
{
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto c = line.find('#'); c != std::string::npos) line.erase(c);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw SchemaError("line " + std::to_string(lineno) + ": expected key = value", {});
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw SchemaError("line " + std::to_string(lineno) + ": empty key", {});
        if (kv.count(key)) throw SchemaError("duplicate key '" + key + "'", {key});
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return parse_key_values(in);
}

void apply_override(KeyValues& kv, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError("override must be key=value: " + assignment, {});
    kv[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

const std::vector<std::string>& required_sim_keys()
{
    static const std::vector<std::string> k{"d", "L", "nu0", "D0", "lambda"};
    return k;
}

const std::vector<std::string>& sim_keys()
{
    static const std::vector<std::string> k{"d",      "L",       "dx",       "dt",     "T",      "nu0",
                                            "D0",     "lambda",  "v0",       "seed",   "noise",  "kick_c",
                                            "noise_h", "noise_ht", "h0",     "h0_amp", "h0_width"};
    return k;
}

SimConfig sim_config_from(const KeyValues& kv, const std::set<std::string>& extra)
{
    std::vector<std::string> missing, unknown;
    for (const auto& k : required_sim_keys())
        if (!kv.count(k)) missing.push_back(k);
    const auto& known = sim_keys();
    for (const auto& [k, v] : kv)
        if (std::find(known.begin(), known.end(), k) == known.end() && !extra.count(k)) unknown.push_back(k);
    if (!missing.empty() || !unknown.empty()) {
        std::string msg;
        if (!missing.empty()) msg += "missing required keys: " + join(missing);
        if (!unknown.empty()) msg += std::string(msg.empty() ? "" : "; ") + "unknown keys: " + join(unknown);
        auto all = missing;
        all.insert(all.end(), unknown.begin(), unknown.end());
        throw SchemaError(msg, all);
    }

    SimConfig c;
    c.d = static_cast<int>(get_long(kv, "d", c.d));
    c.L = static_cast<int>(get_long(kv, "L", c.L));
    c.dx = get_double(kv, "dx", c.dx);
    c.dt = get_double(kv, "dt", c.dt);
    c.T = get_double(kv, "T", c.T);
    c.nu0 = get_double(kv, "nu0", c.nu0);
    c.D0 = get_double(kv, "D0", c.D0);
    c.lambda = get_double(kv, "lambda", c.lambda);
    c.v0 = get_double(kv, "v0", c.v0);
    c.seed = static_cast<std::uint64_t>(get_long(kv, "seed", static_cast<long>(c.seed)));
    if (kv.count("noise")) {
        try {
            c.noise = parse_noise_kind(kv.at("noise"));
        } catch (const std::exception& e) {
            throw SchemaError(std::string("key 'noise': ") + e.what(), {"noise"});
        }
    }
    c.kick_c = get_double(kv, "kick_c", c.kick_c);
    c.noise_h = get_double(kv, "noise_h", c.noise_h);
    c.noise_ht = get_double(kv, "noise_ht", c.noise_ht);
    c.h0 = get_string(kv, "h0", c.h0);
    c.h0_amp = get_double(kv, "h0_amp", c.h0_amp);
    c.h0_width = get_double(kv, "h0_width", c.h0_width);

    std::vector<std::string> bad;
    if (c.d < 1 || c.d > 4) bad.push_back("d");
    if (c.L < 2) bad.push_back("L");
    if (!(c.dx > 0)) bad.push_back("dx");
    if (!(c.dt > 0)) bad.push_back("dt");
    if (!(c.T >= 0)) bad.push_back("T");
    if (!(c.nu0 > 0)) bad.push_back("nu0");
    if (!(c.D0 >= 0)) bad.push_back("D0");
    if (c.h0 != "zero" && c.h0 != "bump") bad.push_back("h0");
    if (!bad.empty()) throw SchemaError("out-of-range values for keys: " + join(bad), bad);
    return c;
}

KeyValues to_key_values(const SimConfig& c)
{
    KeyValues kv;
    kv["d"] = std::to_string(c.d);
    kv["L"] = std::to_string(c.L);
    kv["dx"] = format(c.dx);
    kv["dt"] = format(c.dt);
    kv["T"] = format(c.T);
    kv["nu0"] = format(c.nu0);
    kv["D0"] = format(c.D0);
    kv["lambda"] = format(c.lambda);
    kv["v0"] = format(c.v0);
    kv["seed"] = std::to_string(c.seed);
    kv["noise"] = to_string(c.noise);
    kv["kick_c"] = format(c.kick_c);
    kv["noise_h"] = format(c.noise_h);
    kv["noise_ht"] = format(c.noise_ht);
    kv["h0"] = c.h0;
    kv["h0_amp"] = format(c.h0_amp);
    kv["h0_width"] = format(c.h0_width);
    return kv;
}

std::string canonical(const KeyValues& kv)
{
    std::string s;
    for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
    return s;
}

double get_double(const KeyValues& kv, const std::string& key, double fallback)
{
    auto it = kv.find(key);
    return it == kv.end() ? fallback : to_double(key, it->second);
}

long get_long(const KeyValues& kv, const std::string& key, long fallback)
{
    auto it = kv.find(key);
    return it == kv.end() ? fallback : to_long(key, it->second);
}

std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback)
{
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::vector<double> get_list(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback)
{
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_double(key, item));
    }
    if (out.empty()) throw SchemaError("key '" + key + "' expects a comma-separated list", {key});
    return out;
}

} // namespace kpz
