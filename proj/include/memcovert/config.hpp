#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace memcovert {

// Plain-text `key = value` file with optional `[section]` headers and `#`
// comments. Keys outside any section live in section "".
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> get(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    std::int64_t get_int(const std::string& section, const std::string& key,
                         std::int64_t fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

    void set(const std::string& section, const std::string& key, std::string value);
    std::vector<std::string> sections() const;
    const std::map<std::string, std::string>* section(const std::string& name) const;
    // Directory of the file this config was loaded from ("" for strings).
    const std::string& base_dir() const noexcept { return base_dir_; }

private:
    std::map<std::string, std::map<std::string, std::string>> data_;
    std::string origin_;
    std::string base_dir_;
};

}  // namespace memcovert
