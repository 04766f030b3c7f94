#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "hdn/core/common.hpp"

namespace hdn {

// FNV-1a 64-bit over file bytes; used to pin checkpoints inside manifests.
inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFoundError("cannot hash missing file: " + path);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<std::uint8_t>(buf[i]);
            h *= 0x100000001B3ULL;
        }
        if (!in) break;
    }
    return h;
}

// Every CLI command records what it ran with; a manifest plus the recorded
// inputs is sufficient to reproduce the outputs bit-identically.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json resolved_config;
    nlohmann::json seeds;
    std::vector<std::string> input_paths;
    std::vector<std::string> output_paths;
    std::string toolkit_version = kVersion;
    std::string checkpoint_hash; // hex, empty when no checkpoint involved

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", command},
                              {"argv", argv},
                              {"resolved_config", resolved_config},
                              {"seeds", seeds},
                              {"input_paths", input_paths},
                              {"output_paths", output_paths},
                              {"toolkit_version", toolkit_version},
                              {"checkpoint_hash", checkpoint_hash}};
    }

    void write(const std::string& path) const {
        std::filesystem::create_directories(std::filesystem::path(path).parent_path());
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw FileNotFoundError("cannot write manifest: " + path);
        out << to_json().dump(2) << '\n';
    }
};

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

} // namespace hdn
