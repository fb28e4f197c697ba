#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfa/errors.hpp"
#include "msfa/version.hpp"

namespace msfa {

// FNV-1a chained over the bytes of one or more files; cheap integrity tag
// for manifests. Paired artifacts (header + payload) hash both files so two
// cubes with identical headers but different samples do not collide.
inline std::string fnv1a64_files(const std::vector<std::string>& paths) {
    uint64_t h = 1469598103934665603ull;
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw io_error("cannot open file for checksumming: " + path);
        char buf[65536];
        while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
            std::streamsize got = in.gcount();
            for (std::streamsize i = 0; i < got; ++i) {
                h ^= static_cast<unsigned char>(buf[i]);
                h *= 1099511628211ull;
            }
            if (got < static_cast<std::streamsize>(sizeof(buf))) break;
        }
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

inline std::string fnv1a64_file(const std::string& path) { return fnv1a64_files({path}); }

struct ManifestInput {
    std::string path;
    std::string fnv1a64;
};

// Written next to every command's outputs. Re-running the recorded command
// with the recorded parameters reproduces the outputs (timing columns aside).
struct RunManifest {
    std::string command;
    std::string version = kVersion;
    nlohmann::json parameters = nlohmann::json::object();
    std::map<std::string, ManifestInput> inputs;

    void add_input(const std::string& role, const std::string& path) {
        inputs[role] = ManifestInput{path, fnv1a64_file(path)};
    }

    // Header/payload pair, recorded under the header path.
    void add_paired_input(const std::string& role, const std::string& header_path,
                          const std::string& payload_path) {
        inputs[role] = ManifestInput{header_path, fnv1a64_files({header_path, payload_path})};
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["version"] = version;
        j["parameters"] = parameters;
        nlohmann::json ins = nlohmann::json::object();
        for (const auto& [role, in] : inputs) ins[role] = {{"path", in.path}, {"fnv1a64", in.fnv1a64}};
        j["inputs"] = ins;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.version = j.at("version").get<std::string>();
        m.parameters = j.at("parameters");
        if (j.contains("inputs"))
            for (auto it = j.at("inputs").begin(); it != j.at("inputs").end(); ++it)
                m.inputs[it.key()] = ManifestInput{it.value().at("path").get<std::string>(),
                                                   it.value().at("fnv1a64").get<std::string>()};
        return m;
    }
};

inline void save_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open manifest for writing: " + path);
    out << m.to_json().dump(2) << "\n";
    if (!out) throw io_error("failed writing manifest: " + path);
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
        return RunManifest::from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(path + ": malformed manifest: " + e.what());
    }
}

} // namespace msfa
