#include "memcovert/config.hpp"

#include "memcovert/error.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace memcovert {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
    Config cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError(origin + ":" + std::to_string(line_no) + ": bad section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            cfg.data_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(origin + ":" + std::to_string(line_no) + ": empty key");
        cfg.data_[section][key] = trim(line.substr(eq + 1));
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Config cfg = parse(ss.str(), path);
    cfg.base_dir_ = std::filesystem::path(path).parent_path().string();
    return cfg;
}

bool Config::has(const std::string& section, const std::string& key) const {
    return get(section, key).has_value();
}

std::optional<std::string> Config::get(const std::string& section, const std::string& key) const {
    auto s = data_.find(section);
    if (s == data_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return get(section, key).value_or(fallback);
}

std::int64_t Config::get_int(const std::string& section, const std::string& key,
                             std::int64_t fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ParseError(origin_ + ": [" + section + "] " + key + " is not an integer: " + *v);
    }
    return out;
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        const double out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ParseError(origin_ + ": [" + section + "] " + key + " is not a number: " + *v);
    }
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    auto v = get(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ParseError(origin_ + ": [" + section + "] " + key + " is not a boolean: " + *v);
}

std::vector<std::string> Config::get_list(const std::string& section,
                                          const std::string& key) const {
    std::vector<std::string> out;
    auto v = get(section, key);
    if (!v) return out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void Config::set(const std::string& section, const std::string& key, std::string value) {
    data_[section][key] = std::move(value);
}

std::vector<std::string> Config::sections() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : data_) out.push_back(name);
    return out;
}

const std::map<std::string, std::string>* Config::section(const std::string& name) const {
    auto it = data_.find(name);
    return it == data_.end() ? nullptr : &it->second;
}

}  // namespace memcovert
