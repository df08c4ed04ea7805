#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "risfed/core.hpp"

namespace risfed {

// Minimal key/value config dialect: `[section]` headers, `key = value`
// lines, `#` comments. Values are unsigned integers, reals, booleans,
// quoted strings, or flat lists of reals. Serialization is canonical so a
// document survives load -> save -> load unchanged.
struct ConfigValue {
    enum class Kind { Int, Real, Bool, Str, RealList };
    Kind kind = Kind::Int;
    uint64_t i = 0;
    double r = 0.0;
    bool b = false;
    std::string s;
    std::vector<double> list;

    static ConfigValue of_int(uint64_t v) { return {Kind::Int, v, 0, false, {}, {}}; }
    static ConfigValue of_real(double v) { return {Kind::Real, 0, v, false, {}, {}}; }
    static ConfigValue of_bool(bool v) { return {Kind::Bool, 0, 0, v, {}, {}}; }
    static ConfigValue of_str(std::string v) {
        return {Kind::Str, 0, 0, false, std::move(v), {}};
    }
    static ConfigValue of_list(std::vector<double> v) {
        return {Kind::RealList, 0, 0, false, {}, std::move(v)};
    }

    double as_real() const {
        if (kind == Kind::Real) return r;
        if (kind == Kind::Int) return static_cast<double>(i);
        throw ConfigError("expected a numeric value");
    }
};

struct ConfigEntry {
    std::string key;
    ConfigValue value;
    int line = 0;
};

struct ConfigSection {
    std::string name;
    std::vector<ConfigEntry> entries;
};

struct ConfigDoc {
    std::vector<ConfigSection> sections;

    ConfigSection& section(const std::string& name) {
        for (auto& s : sections)
            if (s.name == name) return s;
        sections.push_back({name, {}});
        return sections.back();
    }
    void set(const std::string& sec, const std::string& key, ConfigValue v) {
        section(sec).entries.push_back({key, std::move(v), 0});
    }
};

namespace detail {

inline std::string_view strip(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline ConfigError parse_error(int line, const std::string& what) {
    return ConfigError("config parse error at line " + std::to_string(line) + ": " + what);
}

inline double parse_real_token(std::string_view tok, int line) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size())
        throw parse_error(line, "bad number '" + std::string(tok) + "'");
    return v;
}

inline ConfigValue parse_value(std::string_view tok, int line) {
    tok = strip(tok);
    if (tok.empty()) throw parse_error(line, "missing value");
    if (tok == "true") return ConfigValue::of_bool(true);
    if (tok == "false") return ConfigValue::of_bool(false);
    if (tok.front() == '"') {
        if (tok.size() < 2 || tok.back() != '"')
            throw parse_error(line, "unterminated string");
        return ConfigValue::of_str(std::string(tok.substr(1, tok.size() - 2)));
    }
    if (tok.front() == '[') {
        if (tok.back() != ']') throw parse_error(line, "unterminated list");
        std::vector<double> vals;
        std::string_view body = tok.substr(1, tok.size() - 2);
        while (true) {
            body = strip(body);
            if (body.empty()) break;
            size_t comma = body.find(',');
            std::string_view item =
                comma == std::string_view::npos ? body : body.substr(0, comma);
            vals.push_back(parse_real_token(strip(item), line));
            if (comma == std::string_view::npos) break;
            body.remove_prefix(comma + 1);
        }
        return ConfigValue::of_list(std::move(vals));
    }
    bool real_like = tok.find_first_of(".eE+-") != std::string_view::npos;
    if (!real_like) {
        uint64_t v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec == std::errc() && p == tok.data() + tok.size())
            return ConfigValue::of_int(v);
    }
    return ConfigValue::of_real(parse_real_token(tok, line));
}

inline std::string format_real(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace detail

inline ConfigDoc parse_document(std::string_view text) {
    ConfigDoc doc;
    ConfigSection* cur = nullptr;
    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::strip(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw detail::parse_error(line_no, "unterminated section header");
            std::string name(detail::strip(line.substr(1, line.size() - 2)));
            if (name.empty()) throw detail::parse_error(line_no, "empty section name");
            cur = &doc.section(name);
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw detail::parse_error(line_no, "expected 'key = value'");
        std::string key(detail::strip(line.substr(0, eq)));
        if (key.empty()) throw detail::parse_error(line_no, "empty key");
        if (!cur) throw detail::parse_error(line_no, "key '" + key + "' outside any section");
        cur->entries.push_back(
            {key, detail::parse_value(line.substr(eq + 1), line_no), line_no});
    }
    return doc;
}

inline std::string serialize_document(const ConfigDoc& doc) {
    std::string out;
    bool first = true;
    for (const auto& sec : doc.sections) {
        if (!first) out += '\n';
        first = false;
        out += '[' + sec.name + "]\n";
        for (const auto& e : sec.entries) {
            out += e.key + " = ";
            const ConfigValue& v = e.value;
            switch (v.kind) {
                case ConfigValue::Kind::Int: out += std::to_string(v.i); break;
                case ConfigValue::Kind::Real: out += detail::format_real(v.r); break;
                case ConfigValue::Kind::Bool: out += v.b ? "true" : "false"; break;
                case ConfigValue::Kind::Str: out += '"' + v.s + '"'; break;
                case ConfigValue::Kind::RealList: {
                    out += '[';
                    for (size_t k = 0; k < v.list.size(); ++k) {
                        if (k) out += ", ";
                        out += detail::format_real(v.list[k]);
                    }
                    out += ']';
                    break;
                }
            }
            out += '\n';
        }
    }
    return out;
}

}  // namespace risfed
