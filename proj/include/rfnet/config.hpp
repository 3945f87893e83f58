#pragma once

// Flat key=value run configuration: file plus command-line overrides, with
// per-subcommand key whitelists so typos fail before any computation.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfnet {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValueConfig {
public:
    static KeyValueConfig load(const std::string& path);

    void apply_override(const std::string& assignment);  // "key=value"
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long get_int(const std::string& key, long fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

    // Throws ConfigError when a key outside `allowed` is present.
    void restrict_keys(const std::vector<std::string>& allowed) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace rfnet
