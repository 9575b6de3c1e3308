#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ab {

// Plain key-value configuration: one `key = value` per line, `#` comments.
// The same text format flows through the CLI config file, the C API, and the
// config_echo emitted with every run.
class KvConfig {
public:
    KvConfig() = default;
    static KvConfig parse(const std::string& text);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated doubles.
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const;
    std::vector<std::string> get_string_list(const std::string& key,
                                             const std::vector<std::string>& fallback) const;

    void set(const std::string& key, const std::string& value);

    // Keys read so far; unknown-key detection reports config errors by name.
    void require_known(const std::vector<std::string>& known_prefixes) const;

    std::string echo() const; // canonical sorted key = value text

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

} // namespace ab
