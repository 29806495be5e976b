#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace meshcap {

// Minimal TOML reader covering what run configs need: top-level and [table]
// sections, `key = value` lines, values of type string ("..." with the usual
// escapes), integer, float, and boolean, plus # comments. Keys flatten to
// "section.key". Malformed input throws ConfigError.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TomlTable {
  public:
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    // Typed getters; the *_or forms fall back when the key is absent. A key
    // holding the wrong type always throws.
    std::string get_string(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string_or(const std::string& key, const std::string& fallback) const;
    std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
    double get_double_or(const std::string& key, double fallback) const;
    bool get_bool_or(const std::string& key, bool fallback) const;

    std::vector<std::string> keys() const;

    void set_string(const std::string& key, std::string value);
    void set_int(const std::string& key, std::int64_t value);
    void set_double(const std::string& key, double value);
    void set_bool(const std::string& key, bool value);

  private:
    enum class Kind { string, integer, real, boolean };
    struct Value {
        Kind kind;
        std::string str;
        std::int64_t i{0};
        double d{0.0};
        bool b{false};
    };
    const Value& fetch(const std::string& key, Kind want) const;

    std::map<std::string, Value> values_;
    friend TomlTable parse_toml(const std::string& text, const std::string& origin);
};

TomlTable parse_toml(const std::string& text, const std::string& origin = "<string>");
TomlTable parse_toml_file(const std::string& path);

}  // namespace meshcap
