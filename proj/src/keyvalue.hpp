#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace u5apc {

// Plain-text `key = value` configuration. '#' starts a comment, blank lines
// are skipped, values keep internal whitespace trimmed at both ends.
class KeyValueConfig {
  public:
    KeyValueConfig() = default;
    static KeyValueConfig parse_file(const std::filesystem::path& path);
    static KeyValueConfig parse_text(const std::string& text);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const; // throws when absent
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::vector<double> get_doubles(const std::string& key) const; // comma separated

    void set(const std::string& key, const std::string& value);
    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

} // namespace u5apc
