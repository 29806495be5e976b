#include "meshcap/toml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace meshcap {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
        } else if (c == '"') {
            in_string = true;
        } else if (c == '#') {
            return line.substr(0, i);
        }
    }
    return line;
}

bool valid_key(const std::string& key) {
    if (key.empty()) return false;
    for (char c : key) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    }
    return true;
}

std::string parse_quoted(const std::string& raw, const std::string& where) {
    std::string out;
    std::size_t i = 1;
    for (;;) {
        if (i >= raw.size()) throw ConfigError(where + ": unterminated string");
        const char c = raw[i];
        if (c == '"') {
            if (i + 1 != raw.size())
                throw ConfigError(where + ": trailing characters after string");
            return out;
        }
        if (c == '\\') {
            if (i + 1 >= raw.size()) throw ConfigError(where + ": dangling escape");
            ++i;
            switch (raw[i]) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case 'r': out.push_back('\r'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default: throw ConfigError(where + ": unsupported escape sequence");
            }
        } else {
            out.push_back(c);
        }
        ++i;
    }
}

}  // namespace

const TomlTable::Value& TomlTable::fetch(const std::string& key, Kind want) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
    if (it->second.kind != want) {
        // Integers are acceptable where floats are expected.
        if (!(want == Kind::real && it->second.kind == Kind::integer))
            throw ConfigError("config: key '" + key + "' has the wrong type");
    }
    return it->second;
}

std::string TomlTable::get_string(const std::string& key) const {
    return fetch(key, Kind::string).str;
}
std::int64_t TomlTable::get_int(const std::string& key) const {
    return fetch(key, Kind::integer).i;
}
double TomlTable::get_double(const std::string& key) const {
    const Value& v = fetch(key, Kind::real);
    return v.kind == Kind::integer ? static_cast<double>(v.i) : v.d;
}
bool TomlTable::get_bool(const std::string& key) const { return fetch(key, Kind::boolean).b; }

std::string TomlTable::get_string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}
std::int64_t TomlTable::get_int_or(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}
double TomlTable::get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}
bool TomlTable::get_bool_or(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

std::vector<std::string> TomlTable::keys() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
}

void TomlTable::set_string(const std::string& key, std::string value) {
    values_[key] = Value{Kind::string, std::move(value)};
}
void TomlTable::set_int(const std::string& key, std::int64_t value) {
    Value v{Kind::integer, {}};
    v.i = value;
    values_[key] = v;
}
void TomlTable::set_double(const std::string& key, double value) {
    Value v{Kind::real, {}};
    v.d = value;
    values_[key] = v;
}
void TomlTable::set_bool(const std::string& key, bool value) {
    Value v{Kind::boolean, {}};
    v.b = value;
    values_[key] = v;
}

TomlTable parse_toml(const std::string& text, const std::string& origin) {
    TomlTable table;
    std::istringstream stream(text);
    std::string raw;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const std::string where = origin + ":" + std::to_string(line_no);
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated table header");
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_key(section)) throw ConfigError(where + ": invalid table name");
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string raw_value = trim(line.substr(eq + 1));
        if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
        if (raw_value.empty()) throw ConfigError(where + ": missing value for '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.has(full)) throw ConfigError(where + ": duplicate key '" + full + "'");

        if (raw_value.front() == '"') {
            table.set_string(full, parse_quoted(raw_value, where));
        } else if (raw_value == "true" || raw_value == "false") {
            table.set_bool(full, raw_value == "true");
        } else {
            // Numeric: integer unless it needs a decimal point/exponent.
            const bool looks_real = raw_value.find_first_of(".eE") != std::string::npos &&
                                    raw_value.find("0x") != 0;
            if (!looks_real) {
                std::int64_t i = 0;
                const auto [p, ec] =
                    std::from_chars(raw_value.data(), raw_value.data() + raw_value.size(), i);
                if (ec == std::errc() && p == raw_value.data() + raw_value.size()) {
                    table.set_int(full, i);
                    continue;
                }
            }
            double d = 0.0;
            const auto [p, ec] =
                std::from_chars(raw_value.data(), raw_value.data() + raw_value.size(), d);
            if (ec != std::errc() || p != raw_value.data() + raw_value.size())
                throw ConfigError(where + ": cannot parse value '" + raw_value + "'");
            table.set_double(full, d);
        }
    }
    return table;
}

TomlTable parse_toml_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_toml(buf.str(), path);
}

}  // namespace meshcap
