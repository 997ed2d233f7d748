#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bosdf {

/// Flat key=value configuration.  Files may group keys under `[section]`
/// headers, which prefix the following keys with "section.".  Later
/// assignments win, so CLI overrides are applied with set().
class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>") {
        Config c;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw std::runtime_error(source + ":" + std::to_string(lineno) + ": unterminated section header");
                }
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::runtime_error(source + ":" + std::to_string(lineno) + ": expected key=value");
            }
            std::string key = trim(line.substr(0, eq));
            if (key.empty()) {
                throw std::runtime_error(source + ":" + std::to_string(lineno) + ": empty key");
            }
            if (!section.empty()) key = section + "." + key;
            c.values_[key] = trim(line.substr(eq + 1));
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw std::runtime_error("cannot open config '" + path + "'");
        }
        return parse(in, path);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Applies "key=value".
    void set_assignment(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw std::invalid_argument("override '" + assignment + "' is not key=value");
        }
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    void merge(const Config& other) {
        for (const auto& [k, v] : other.values_) values_[k] = v;
    }

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }

    [[nodiscard]] std::optional<std::string> get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] std::string str(const std::string& key, const std::string& fallback) const {
        return get(key).value_or(fallback);
    }

    [[nodiscard]] double real(const std::string& key, double fallback) const {
        const auto v = get(key);
        return v ? to_real(key, *v) : fallback;
    }

    [[nodiscard]] long integer(const std::string& key, long fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        const double d = to_real(key, *v);
        if (d != std::floor(d)) {
            throw std::invalid_argument("config key '" + key + "' must be an integer, got '" + *v + "'");
        }
        return static_cast<long>(d);
    }

    [[nodiscard]] bool boolean(const std::string& key, bool fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw std::invalid_argument("config key '" + key + "' must be a boolean, got '" + *v + "'");
    }

    [[nodiscard]] std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        std::vector<double> out;
        for (const auto& item : split_list(*v)) out.push_back(to_real(key, item));
        return out;
    }

    [[nodiscard]] std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) const {
        const auto v = get(key);
        return v ? split_list(*v) : fallback;
    }

    [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream ss(s);
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    static double to_real(const std::string& key, const std::string& v) {
        std::size_t used = 0;
        double d = 0.0;
        try {
            d = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) {
            throw std::invalid_argument("config key '" + key + "' expects a number, got '" + v + "'");
        }
        return d;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace bosdf
