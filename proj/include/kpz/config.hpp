#pragma once
#include "kpz/lattice.hpp"
#include "kpz/lattice_spde.hpp"

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace kpz {

// Invalid configuration; keys lists every offending key.
struct SchemaError : ConfigError {
    std::vector<std::string> keys;
    SchemaError(const std::string& what, std::vector<std::string> k) : ConfigError(what), keys(std::move(k)) {}
};

using KeyValues = std::map<std::string, std::string>;

// "key = value" lines; '#' starts a comment, blank lines are skipped.
KeyValues parse_key_values(std::istream& is);
KeyValues read_key_values(const std::string& path);
// "key=value"
void apply_override(KeyValues& kv, const std::string& assignment);

// Keys every SimConfig file must set.
const std::vector<std::string>& required_sim_keys();
// Keys read by sim_config_from.
const std::vector<std::string>& sim_keys();

// Missing required keys and keys outside sim_keys() and extra are reported together.
SimConfig sim_config_from(const KeyValues& kv, const std::set<std::string>& extra = {});
KeyValues to_key_values(const SimConfig& c);

// sorted "key=value\n" lines
std::string canonical(const KeyValues& kv);

double get_double(const KeyValues& kv, const std::string& key, double fallback);
long get_long(const KeyValues& kv, const std::string& key, long fallback);
std::string get_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
// comma-separated numbers
std::vector<double> get_list(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback);

} // namespace kpz
