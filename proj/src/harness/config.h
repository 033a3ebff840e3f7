#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fatlab::harness {

// Sectioned key=value document. Order is preserved so parse -> serialize ->
// parse round-trips exactly.
struct Config {
    struct Section {
        std::string name;
        std::vector<std::pair<std::string, std::string>> kv;
    };
    std::vector<Section> sections;

    const std::string* find(const std::string& section, const std::string& key) const;
    bool has(const std::string& section, const std::string& key) const {
        return find(section, key) != nullptr;
    }

    // Insert or overwrite; creates the section on demand.
    void set(const std::string& section, const std::string& key, const std::string& value);
    // "section.key=value" as accepted by the CLI --set flag.
    void set_dotted(const std::string& assignment);

    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
    // Reals accept plain decimals and exact a/b fractions.
    double get_real(const std::string& section, const std::string& key,
                    double fallback) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                  const std::vector<int>& fallback) const;

    std::string serialize() const;
};

Config parse_config(const std::string& text);
Config load_config_file(const std::string& path);

// Rejects keys outside `allowed` ("section.key" entries). Lists every
// offender in the error message.
void validate_keys(const Config& cfg, const std::set<std::string>& allowed);

// "a/b" with integer parts divides exactly; otherwise plain stod.
double parse_fraction(const std::string& s);

bool parse_bool(const std::string& s);
std::vector<int> parse_int_list(const std::string& s);

}  // namespace fatlab::harness
