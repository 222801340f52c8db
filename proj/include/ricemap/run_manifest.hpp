#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "ricemap/error.hpp"
#include "ricemap/log.hpp"

namespace ricemap {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64 over raw bytes: cheap input fingerprinting for reproducibility
// bookkeeping, not integrity against an adversary.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string digest_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot digest missing file: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto n = std::size_t(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

// Recursively digests a directory's regular files in sorted path order.
inline std::string digest_path(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::is_regular_file(path)) return digest_file(path);
    if (!fs::is_directory(path)) throw io_error("cannot digest: " + path.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : files) {
        const std::string rel = fs::relative(f, path).string();
        const std::string part = rel + "=" + digest_file(f) + ";";
        for (unsigned char c : part) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return hex;
}

// Reproducibility record written once per output directory. The "timing"
// block holds the only run-to-run volatile fields; everything else is a pure
// function of the inputs.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> input_digests; // path -> digest
    std::string calibration_digest;
    std::uint64_t seed = 0;
    bool has_seed = false;
    int threads = 1;
    std::string started;
    std::string finished;
    std::map<std::string, double> stage_timings_ms;

    void add_input(const std::filesystem::path& path) {
        input_digests[path.string()] = digest_path(path);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool"] = "ricemap";
        j["version"] = kToolVersion;
        j["command"] = command;
        j["inputs"] = input_digests;
        if (!calibration_digest.empty()) j["calibration_digest"] = calibration_digest;
        if (has_seed) j["seed"] = seed;
        // run-environment data (volatile; not covered by reproducibility)
        j["timing"] = {{"started", started},
                       {"finished", finished},
                       {"threads", threads},
                       {"stages_ms", stage_timings_ms}};
        return j;
    }

    void write(const std::filesystem::path& dir) const {
        std::ofstream out(dir / "run_manifest.json", std::ios::trunc);
        if (!out) throw io_error("cannot write run manifest in " + dir.string());
        out << to_json().dump(2) << '\n';
    }
};

// Recomputes the recorded input digests; a mismatch means the inputs changed
// since the run.
inline void verify_run_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "run_manifest.json");
    if (!in) throw io_error("missing run manifest in " + dir.string());
    nlohmann::json j;
    in >> j;
    for (const auto& [path, digest] : j.at("inputs").items()) {
        const std::string now = digest_path(path);
        if (now != digest.get<std::string>()) {
            throw validation_error("run manifest digest mismatch for " + path + ": recorded " +
                                   digest.get<std::string>() + ", recomputed " + now);
        }
    }
}

} // namespace ricemap
