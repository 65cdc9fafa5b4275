#pragma once

// Reproducibility record written next to every command's outputs.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sepll/error.hpp"

namespace sepll {

inline constexpr const char* kToolVersion = "0.1.0";

/// Named random streams derived from the root seed.
inline const std::vector<std::string>& seed_stream_names() {
    static const std::vector<std::string> names{"init", "noise", "shuffle", "mv-ties", "synth"};
    return names;
}

inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error(ExitCode::kData, "sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

inline std::string file_sha256(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError(p.string(), 0, "cannot open file for digest");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

struct FileDigest {
    std::string role;
    std::string path;
    std::string sha256;
};

struct RunManifest {
    std::string command;
    std::string config_echo;
    std::uint64_t seed = 0;
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> artifacts;
    std::string tool_version = kToolVersion;

    void add_input(const std::string& role, const std::filesystem::path& p) {
        inputs.push_back({role, p.string(), file_sha256(p)});
    }
    void add_artifact(const std::string& role, const std::filesystem::path& p) {
        artifacts.push_back({role, p.string(), file_sha256(p)});
    }

    /// Adds every regular file below a dataset directory, in path order.
    void add_input_dir(const std::string& role, const std::filesystem::path& dir) {
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) add_input(role, f);
    }
};

inline nlohmann::ordered_json to_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["tool_version"] = m.tool_version;
    j["command"] = m.command;
    j["seed"] = m.seed;
    j["seed_streams"] = seed_stream_names();
    j["config"] = m.config_echo;
    auto digests = [](const std::vector<FileDigest>& v) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& d : v) arr.push_back({{"role", d.role}, {"path", d.path}, {"sha256", d.sha256}});
        return arr;
    };
    j["inputs"] = digests(m.inputs);
    j["artifacts"] = digests(m.artifacts);
    return j;
}

inline RunManifest manifest_from_json(const nlohmann::ordered_json& j) {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_echo = j.at("config").get<std::string>();
    auto digests = [](const nlohmann::ordered_json& arr) {
        std::vector<FileDigest> v;
        for (const auto& d : arr)
            v.push_back({d.at("role").get<std::string>(), d.at("path").get<std::string>(),
                         d.at("sha256").get<std::string>()});
        return v;
    };
    m.inputs = digests(j.at("inputs"));
    m.artifacts = digests(j.at("artifacts"));
    return m;
}

/// Recomputes every recorded digest; returns the paths whose content changed
/// or disappeared.
inline std::vector<std::string> verify_manifest(const RunManifest& m) {
    std::vector<std::string> bad;
    for (const auto* list : {&m.inputs, &m.artifacts})
        for (const auto& d : *list) {
            if (!std::filesystem::exists(d.path) || file_sha256(d.path) != d.sha256) bad.push_back(d.path);
        }
    return bad;
}

}  // namespace sepll
