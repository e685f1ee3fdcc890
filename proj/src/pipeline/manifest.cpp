#include "pipeline/manifest.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>

#include <json.hpp>

#include "core/errors.hpp"

namespace mcs {

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hash_hex(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::filesystem::path write_manifest(const RunManifest& m,
                                     const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j{{"format", "mcsynth-manifest/1"},
                     {"command", m.command},
                     {"config_hash", m.config_hash},
                     {"seed", m.seed},
                     {"inputs", m.inputs},
                     {"outputs", m.outputs},
                     {"parents", m.parents},
                     {"tool_version", m.tool_version},
                     {"timestamp_utc", m.timestamp_utc}};
    const std::filesystem::path path = out_dir / (m.command + "_manifest.json");
    std::ofstream f(path);
    if (!f) throw IoError("manifest: cannot open " + path.string());
    f << j.dump(2) << "\n";
    return path;
}

}  // namespace mcs
