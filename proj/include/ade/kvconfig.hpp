#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace ade {

/// Flat key=value configuration. '#' starts a comment; blank lines are
/// ignored. Lookups that consume a key mark it, so unknown keys can be
/// rejected after a command has read everything it understands.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_stream(std::istream& in) {
        KeyValueConfig cfg;
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const size_t begin = line.find_first_not_of(" \t\r");
            if (begin == std::string::npos) continue;
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": expected key=value");
            auto trim = [](std::string s) {
                const size_t a = s.find_first_not_of(" \t\r");
                const size_t b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path.string());
        return from_stream(in);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': '" + it->second +
                                     "' is not a number");
        }
    }

    int64_t get_int(const std::string& key, int64_t fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        consumed_.insert(it->first);
        try {
            size_t pos = 0;
            const int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "': '" + it->second +
                                     "' is not an integer");
        }
    }

    uint64_t get_uint(const std::string& key, uint64_t fallback) {
        const int64_t v = get_int(key, static_cast<int64_t>(fallback));
        if (v < 0) throw std::runtime_error("config key '" + key + "' must be non-negative");
        return static_cast<uint64_t>(v);
    }

    /// Throws naming the first key no getter ever touched.
    void reject_unknown_keys() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) throw std::runtime_error("unknown config key '" + key + "'");
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

}  // namespace ade
