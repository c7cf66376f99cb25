#include "cncreg/config.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cncreg/errors.hpp"

namespace cncreg {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

} // namespace

Config Config::parse_string(std::string_view text) {
    Config c;
    std::size_t lineno = 0;
    while (!text.empty()) {
        const std::size_t nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{}
                                            : text.substr(nl + 1);
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ValueError("config line " + std::to_string(lineno) +
                             ": expected key = value");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty() || key.find_first_of(" \t") != std::string::npos)
            throw ValueError("config line " + std::to_string(lineno) +
                             ": bad key");
        if (!c.kv_.emplace(key, value).second)
            throw ValueError("duplicate configuration key: " + key);
    }
    return c;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(IoError::Code::OpenFailed,
                      "cannot open configuration file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    out.reserve(kv_.size());
    for (const auto& [k, v] : kv_)
        out.push_back(k);
    return out;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_string(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
        throw ValueError("missing configuration key: " + key);
    return it->second;
}

namespace {

double parse_double(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ValueError(key + ": expected a number, got '" + s + "'");
    }
}

long long parse_ll(const std::string& key, const std::string& s) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ValueError(key + ": expected an integer, got '" + s + "'");
    }
}

} // namespace

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = kv_.find(key);
    return it == kv_.end() ? fallback : parse_double(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
        return fallback;
    const long long v = parse_ll(key, it->second);
    if (v < INT_MIN || v > INT_MAX)
        throw ValueError(key + ": integer out of range");
    return static_cast<int>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
        return fallback;
    const std::string& s = it->second;
    if (s == "true" || s == "yes" || s == "1")
        return true;
    if (s == "false" || s == "no" || s == "0")
        return false;
    throw ValueError(key + ": expected a boolean, got '" + s + "'");
}

std::uint64_t Config::get_uint64(const std::string& key,
                                 std::uint64_t fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
        return fallback;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(it->second, &used);
        if (used != it->second.size())
            throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ValueError(key + ": expected an unsigned integer, got '" +
                         it->second + "'");
    }
}

std::vector<int> Config::get_int_list(const std::string& key,
                                      std::vector<int> fallback) const {
    const auto it = kv_.find(key);
    if (it == kv_.end())
        return fallback;
    std::vector<int> out;
    std::string_view rest = it->second;
    while (!rest.empty()) {
        const std::size_t comma = rest.find(',');
        const std::string tok(trim(rest.substr(0, comma)));
        rest = comma == std::string_view::npos ? std::string_view{}
                                               : rest.substr(comma + 1);
        if (tok.empty())
            throw ValueError(key + ": empty list entry");
        out.push_back(static_cast<int>(parse_ll(key, tok)));
    }
    if (out.empty())
        throw ValueError(key + ": empty list");
    return out;
}

void Config::set(const std::string& key, const std::string& value) {
    kv_[key] = value;
}

void Config::check_allowed(std::span<const std::string_view> allowed) const {
    for (const auto& [k, v] : kv_) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw ValueError("unknown configuration key: " + k);
    }
}

std::string Config::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::string_view s) {
        for (const char ch : s) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [k, v] : kv_) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace cncreg
