#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

namespace ade {

/// FNV-1a 64-bit over a file's bytes, hex-encoded.
inline std::string fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot checksum missing file: " + path.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[32];
    std::snprintf(hex, sizeof hex, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

/// Record of one CLI run: resolved config, paths, seed, duration, and
/// checksums of produced artifacts. Written atomically next to the primary
/// output as <output>.manifest.json.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> config;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    uint64_t seed = 0;

    void write(const std::filesystem::path& primary_output, double duration_seconds) const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["seed"] = seed;
        j["config"] = config;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        nlohmann::ordered_json sums = nlohmann::ordered_json::object();
        for (const auto& [name, path] : outputs) sums[path] = fnv1a64_file(path);
        j["checksums"] = std::move(sums);
        j["duration_seconds"] = duration_seconds;

        const std::filesystem::path final_path =
            primary_output.string() + ".manifest.json";
        const std::filesystem::path tmp_path = final_path.string() + ".tmp";
        {
            std::ofstream out(tmp_path, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write manifest: " + tmp_path.string());
            out << j.dump(2) << '\n';
        }
        std::filesystem::rename(tmp_path, final_path);
    }
};

/// Wall-clock stopwatch for manifest durations.
class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace ade
