#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cncreg {

// Flat `dotted.key = value` settings file. `#` starts a comment, blank lines
// are skipped, duplicate keys are an error. Typed getters parse on access and
// name the offending key on failure.
class Config {
public:
    Config() = default;

    static Config parse_file(const std::string& path);
    static Config parse_string(std::string_view text);

    bool has(const std::string& key) const;
    std::vector<std::string> keys() const; // sorted

    std::string get_string(const std::string& key,
                           const std::string& fallback) const;
    std::string require_string(const std::string& key) const;

    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_uint64(const std::string& key,
                             std::uint64_t fallback) const;
    std::vector<int> get_int_list(const std::string& key,
                                  std::vector<int> fallback) const;

    void set(const std::string& key, const std::string& value);

    // rejects any key outside the allowed list
    void check_allowed(std::span<const std::string_view> allowed) const;

    // FNV-1a over the sorted normalized entries; stable artifact stamp
    std::string hash() const;

private:
    std::map<std::string, std::string> kv_;
};

} // namespace cncreg
