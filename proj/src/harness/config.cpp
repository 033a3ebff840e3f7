#include "harness/config.h"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "core/error.h"

namespace fatlab::harness {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

const std::string* Config::find(const std::string& section, const std::string& key) const {
    for (const auto& sec : sections) {
        if (sec.name != section) continue;
        for (const auto& [k, v] : sec.kv)
            if (k == key) return &v;
    }
    return nullptr;
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
    for (auto& sec : sections) {
        if (sec.name != section) continue;
        for (auto& [k, v] : sec.kv) {
            if (k == key) {
                v = value;
                return;
            }
        }
        sec.kv.emplace_back(key, value);
        return;
    }
    sections.push_back({section, {{key, value}}});
}

void Config::set_dotted(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw_input("--set expects section.key=value, got '" + assignment + "'");
    const std::string lhs = trim(assignment.substr(0, eq));
    const std::string value = trim(assignment.substr(eq + 1));
    const size_t dot = lhs.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size())
        throw_input("--set expects section.key=value, got '" + assignment + "'");
    set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
}

std::string Config::get_str(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
}

double Config::get_real(const std::string& section, const std::string& key,
                        double fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_fraction(*v) : fallback;
}

int Config::get_int(const std::string& section, const std::string& key,
                    int fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    try {
        size_t pos = 0;
        int r = std::stoi(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument(*v);
        return r;
    } catch (const std::exception&) {
        throw_format("bad integer for " + section + "." + key + ": '" + *v + "'");
    }
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_bool(*v) : fallback;
}

std::vector<int> Config::get_int_list(const std::string& section, const std::string& key,
                                      const std::vector<int>& fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_int_list(*v) : fallback;
}

std::string Config::serialize() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& sec : sections) {
        if (!first) out << "\n";
        first = false;
        out << "[" << sec.name << "]\n";
        for (const auto& [k, v] : sec.kv) out << k << " = " << v << "\n";
    }
    return out.str();
}

Config parse_config(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    size_t cur = SIZE_MAX;  // index into cfg.sections; sections may re-open
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3)
                throw_format("config line " + std::to_string(lineno) +
                             ": malformed section header '" + t + "'");
            const std::string section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw_format("config line " + std::to_string(lineno) + ": empty section name");
            cur = SIZE_MAX;
            for (size_t i = 0; i < cfg.sections.size(); ++i)
                if (cfg.sections[i].name == section) cur = i;
            if (cur == SIZE_MAX) {
                cfg.sections.push_back({section, {}});
                cur = cfg.sections.size() - 1;
            }
            continue;
        }
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw_format("config line " + std::to_string(lineno) + ": expected key = value");
        if (cur == SIZE_MAX)
            throw_format("config line " + std::to_string(lineno) + ": key outside a section");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw_format("config line " + std::to_string(lineno) + ": empty key");
        for (const auto& [k, _] : cfg.sections[cur].kv)
            if (k == key)
                throw_format("config line " + std::to_string(lineno) + ": duplicate key '" +
                             cfg.sections[cur].name + "." + key + "'");
        cfg.sections[cur].kv.emplace_back(key, value);
    }
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate_keys(const Config& cfg, const std::set<std::string>& allowed) {
    std::string bad;
    for (const auto& sec : cfg.sections) {
        for (const auto& [k, _] : sec.kv) {
            const std::string dotted = sec.name + "." + k;
            if (!allowed.count(dotted)) bad += (bad.empty() ? "" : ", ") + dotted;
        }
    }
    if (!bad.empty()) throw_input("unknown config keys: " + bad);
}

double parse_fraction(const std::string& s) {
    const std::string t = trim(s);
    const size_t slash = t.find('/');
    try {
        if (slash != std::string::npos) {
            size_t pa = 0, pb = 0;
            const std::string num = trim(t.substr(0, slash));
            const std::string den = trim(t.substr(slash + 1));
            const double a = std::stod(num, &pa);
            const double b = std::stod(den, &pb);
            if (pa != num.size() || pb != den.size()) throw std::invalid_argument(t);
            if (b == 0.0) throw_format("fraction with zero denominator: '" + t + "'");
            return a / b;
        }
        size_t pos = 0;
        const double v = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw_format("bad real value: '" + t + "'");
    }
}

bool parse_bool(const std::string& s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw_format("bad boolean: '" + t + "'");
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        const std::string t = trim(cur);
        if (t.empty()) continue;
        try {
            size_t pos = 0;
            out.push_back(std::stoi(t, &pos));
            if (pos != t.size()) throw std::invalid_argument(t);
        } catch (const std::exception&) {
            throw_format("bad integer list element: '" + t + "'");
        }
    }
    return out;
}

}  // namespace fatlab::harness
