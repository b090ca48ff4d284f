#include "fwi/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fwi/errors.hpp"

namespace fwi::cfg {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::istringstream in(text);
    std::string raw, current;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(raw.substr(0, raw.find('#')));
        // ';' inside a value separates groups, so only a leading ';' starts a comment
        if (s.empty() || s.front() == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3) throw ConfigError(origin + ": malformed section header '" + s + "'", line);
            current = trim(s.substr(1, s.size() - 2));
            if (c.sections_.count(current)) throw ConfigError(origin + ": duplicate section [" + current + "]", line);
            c.sections_[current].line = line;
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ": expected 'key = value', got '" + s + "'", line);
        if (current.empty()) throw ConfigError(origin + ": key outside of any [section]", line);
        const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(origin + ": empty key", line);
        auto& entries = c.sections_[current].entries;
        if (entries.count(key)) throw ConfigError(origin + ": duplicate key '" + key + "' in [" + current + "]", line);
        entries[key] = Entry{value, line};
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

bool Config::has_section(const std::string& section) const {
    sections_used_[section] = true;
    return sections_.count(section) > 0;
}

void Config::require_section(const std::string& section) const {
    if (!has_section(section)) throw ConfigError(origin_ + ": missing [" + section + "] section");
}

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
    sections_used_[section] = true;
    used_[section][key] = true;
    const auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    const auto e = s->second.entries.find(key);
    return e == s->second.entries.end() ? nullptr : &e->second;
}

bool Config::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

int Config::line_of(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return 0;
    const auto e = s->second.entries.find(key);
    return e == s->second.entries.end() ? s->second.line : e->second.line;
}

void Config::fail(const std::string& section, const std::string& key, const std::string& what) const {
    throw ConfigError(origin_ + ": [" + section + "] " + key + ": " + what, line_of(section, key));
}

std::string Config::get_string(const std::string& section, const std::string& key, const std::string& fallback) const {
    const auto* e = find(section, key);
    return e ? e->value : fallback;
}

std::string Config::require_string(const std::string& section, const std::string& key) const {
    const auto* e = find(section, key);
    if (!e) {
        if (!sections_.count(section)) throw ConfigError(origin_ + ": missing [" + section + "] section");
        fail(section, key, "required key is missing");
    }
    return e->value;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
    const auto* e = find(section, key);
    if (!e) return fallback;
    double v = 0.0;
    if (!parse_number(e->value, v)) fail(section, key, "'" + e->value + "' is not a number");
    return v;
}

double Config::require_double(const std::string& section, const std::string& key) const {
    require_string(section, key);
    return get_double(section, key, 0.0);
}

std::size_t Config::get_size(const std::string& section, const std::string& key, std::size_t fallback) const {
    const auto* e = find(section, key);
    if (!e) return fallback;
    std::size_t v = 0;
    const char* end = e->value.data() + e->value.size();
    const auto res = std::from_chars(e->value.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) fail(section, key, "'" + e->value + "' is not a non-negative integer");
    return v;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const {
    return static_cast<std::uint64_t>(get_size(section, key, static_cast<std::size_t>(fallback)));
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const auto* e = find(section, key);
    if (!e) return fallback;
    std::string v = e->value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail(section, key, "'" + e->value + "' is not a boolean");
}

std::vector<std::vector<double>> Config::get_groups(const std::string& section, const std::string& key) const {
    const auto* e = find(section, key);
    std::vector<std::vector<double>> out;
    if (!e) return out;
    std::stringstream groups(e->value);
    std::string group;
    while (std::getline(groups, group, ';')) {
        std::stringstream items(group);
        std::string item;
        std::vector<double> g;
        while (items >> item) {
            double v = 0.0;
            if (!parse_number(item, v)) fail(section, key, "'" + item + "' is not a number");
            g.push_back(v);
        }
        if (!g.empty()) out.push_back(std::move(g));
    }
    return out;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
    auto& sec = sections_[section];
    auto it = sec.entries.find(key);
    if (it == sec.entries.end())
        sec.entries[key] = Entry{value, 0};
    else
        it->second.value = value;
}

void Config::check_all_used() const {
    for (const auto& [name, sec] : sections_) {
        if (!sections_used_.count(name)) throw ConfigError(origin_ + ": unknown or unused section [" + name + "]", sec.line);
        for (const auto& [key, entry] : sec.entries) {
            const auto u = used_.find(name);
            if (u == used_.end() || !u->second.count(key))
                throw ConfigError(origin_ + ": unknown or unused key '" + key + "' in [" + name + "]", entry.line);
        }
    }
}

}  // namespace fwi::cfg
