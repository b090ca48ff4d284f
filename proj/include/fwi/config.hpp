#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fwi::cfg {

/// INI-style experiment file: [section] headers, key = value lines, '#' or ';' comments.
/// Lookups record which keys were used so that leftovers can be reported as typos.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<config>");
    static Config load(const std::filesystem::path& path);

    bool has_section(const std::string& section) const;
    /// Throws ConfigError naming the section when it is absent.
    void require_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
    std::string require_string(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    double require_double(const std::string& section, const std::string& key) const;
    std::size_t get_size(const std::string& section, const std::string& key, std::size_t fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    /// Whitespace-separated numbers; ';' separates groups (e.g. "100 200; 300 400").
    std::vector<std::vector<double>> get_groups(const std::string& section, const std::string& key) const;

    /// Overrides (or adds) a value, as command-line flags do.
    void set(const std::string& section, const std::string& key, const std::string& value);

    /// ConfigError for the first key or section never looked up.
    void check_all_used() const;

    int line_of(const std::string& section, const std::string& key) const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    struct Section {
        int line = 0;
        std::map<std::string, Entry> entries;
    };

    const Entry* find(const std::string& section, const std::string& key) const;
    [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const;

    std::string origin_;
    std::map<std::string, Section> sections_;
    mutable std::map<std::string, std::map<std::string, bool>> used_;
    mutable std::map<std::string, bool> sections_used_;
};

}  // namespace fwi::cfg
