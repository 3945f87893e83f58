#include "rfnet/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "rfnet/fusion.hpp"

namespace rfnet {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    KeyValueConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
        }
        cfg.values_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return cfg;
}

void KeyValueConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override must be key=value, got '" + assignment + "'");
    }
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + it->second + "'");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument(it->second);
        return v;
    } catch (...) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + it->second + "'");
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
    if (it->second == "0" || it->second == "false" || it->second == "no") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::istringstream is(it->second);
    std::string part;
    while (std::getline(is, part, ',')) {
        try {
            out.push_back(std::stoi(trim(part)));
        } catch (...) {
            throw ConfigError("config key '" + key + "' expects a comma-separated integer list, got '" + it->second +
                              "'");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
    return out;
}

void KeyValueConfig::restrict_keys(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

// Fusion variant names used by configs and the ablation CSV.
std::string variant_name(FusionVariant v) {
    switch (v) {
        case FusionVariant::AddOnly: return "add";
        case FusionVariant::Ca: return "ca";
        case FusionVariant::CaTsa: return "ca_tsa";
        case FusionVariant::CaSa: return "ca_sa";
        case FusionVariant::CaTsaAdaptive: return "ca_tsa_ab";
        case FusionVariant::Full: return "full";
    }
    return "full";
}

FusionVariant parse_variant(const std::string& name) {
    if (name == "add") return FusionVariant::AddOnly;
    if (name == "ca") return FusionVariant::Ca;
    if (name == "ca_tsa") return FusionVariant::CaTsa;
    if (name == "ca_sa") return FusionVariant::CaSa;
    if (name == "ca_tsa_ab") return FusionVariant::CaTsaAdaptive;
    if (name == "full") return FusionVariant::Full;
    throw ConfigError("unknown fusion variant '" + name + "' (expected add|ca|ca_tsa|ca_sa|ca_tsa_ab|full)");
}

}  // namespace rfnet
