#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace mcs {

// Run provenance. One manifest per command invocation, written into the
// command's output directory; chained via parent manifest paths.
struct RunManifest {
    std::string command;
    std::string config_hash;  // hex
    uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<std::string> parents;  // manifest files of upstream stages
    std::string tool_version;
    std::string timestamp_utc;
};

std::string utc_timestamp();
std::string hash_hex(uint64_t h);
uint64_t fnv1a(const std::string& s);

// Writes <out_dir>/<command>_manifest.json and returns its path.
std::filesystem::path write_manifest(const RunManifest& m,
                                     const std::filesystem::path& out_dir);

}  // namespace mcs
