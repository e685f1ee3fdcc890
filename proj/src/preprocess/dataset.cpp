#include "preprocess/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mcs {

std::string case_dir(const std::string& root, Region region, const std::string& case_id) {
    return (fs::path(root) / region_name(region) / case_id).string();
}

namespace {

std::vector<CaseRef> scan_cases(const std::string& root, const std::string& probe_file) {
    std::vector<CaseRef> refs;
    for (const char* rn : {"brain", "pelvis"}) {
        fs::path region_dir = fs::path(root) / rn;
        if (!fs::is_directory(region_dir)) continue;
        for (const auto& entry : fs::directory_iterator(region_dir)) {
            if (!entry.is_directory()) continue;
            if (!fs::exists(entry.path() / probe_file)) continue;
            refs.push_back({parse_region(rn), entry.path().filename().string()});
        }
    }
    std::sort(refs.begin(), refs.end(), [](const CaseRef& a, const CaseRef& b) {
        if (a.region != b.region) return region_name(a.region) < region_name(b.region);
        return a.case_id < b.case_id;
    });
    return refs;
}

json windows_to_json(const ChannelWindows& w) {
    return json{{"full", {w.full.lo, w.full.hi}},
                {"soft", {w.soft.lo, w.soft.hi}},
                {"dense", {w.dense.lo, w.dense.hi}},
                {"soft_level", w.soft_level},
                {"soft_halfwidth", w.soft_halfwidth},
                {"soft_level_is_fallback", w.soft_level_is_fallback}};
}

ChannelWindows windows_from_json(const json& j) {
    ChannelWindows w;
    w.full = {j.at("full")[0].get<double>(), j.at("full")[1].get<double>()};
    w.soft = {j.at("soft")[0].get<double>(), j.at("soft")[1].get<double>()};
    w.dense = {j.at("dense")[0].get<double>(), j.at("dense")[1].get<double>()};
    w.soft_level = j.at("soft_level").get<double>();
    w.soft_halfwidth = j.at("soft_halfwidth").get<double>();
    w.soft_level_is_fallback = j.at("soft_level_is_fallback").get<bool>();
    return w;
}

}  // namespace

std::vector<CaseRef> list_cases(const std::string& root) {
    if (!fs::is_directory(root)) {
        throw IoError("dataset root " + root + " is not a directory");
    }
    return scan_cases(root, "cbct.json");
}

PatientCase load_case(const std::string& root, const CaseRef& ref) {
    std::string dir = case_dir(root, ref.region, ref.case_id);
    PatientCase c;
    c.case_id = ref.case_id;
    c.region = ref.region;
    c.cbct = read_volume(dir + "/cbct");
    c.has_ct = volume_exists(dir + "/ct");
    if (c.has_ct) c.ct = read_volume(dir + "/ct");
    c.has_mask = volume_exists(dir + "/mask");
    if (c.has_mask) c.mask = read_volume(dir + "/mask");
    validate_case(c);
    return c;
}

PatientCase load_case_dir(const std::string& dir, Region region, const std::string& case_id) {
    PatientCase c;
    if (case_id.empty()) {
        fs::path p = fs::path(dir).lexically_normal();
        if (p.filename().empty()) p = p.parent_path();
        c.case_id = p.filename().string();
        if (c.case_id.empty()) c.case_id = "case";
    } else {
        c.case_id = case_id;
    }
    c.region = region;
    c.cbct = read_volume(dir + "/cbct");
    c.has_ct = volume_exists(dir + "/ct");
    if (c.has_ct) c.ct = read_volume(dir + "/ct");
    c.has_mask = volume_exists(dir + "/mask");
    if (c.has_mask) c.mask = read_volume(dir + "/mask");
    validate_case(c);
    return c;
}

void write_case(const std::string& root, const PatientCase& c) {
    validate_case(c);
    std::string dir = case_dir(root, c.region, c.case_id);
    fs::create_directories(dir);
    write_volume(c.cbct, dir + "/cbct");
    if (c.has_ct) write_volume(c.ct, dir + "/ct");
    if (c.has_mask) write_volume(c.mask, dir + "/mask");
}

void write_preprocessed(const std::string& cache_root, const PreprocessedCase& pc) {
    std::string dir = case_dir(cache_root, pc.region, pc.case_id);
    fs::create_directories(dir);
    for (int ci = 0; ci < 3; ++ci) {
        write_volume(pc.cbct_ch.ch[static_cast<size_t>(ci)],
                     dir + "/cbct_ch" + std::to_string(ci + 1));
        if (pc.has_ct) {
            write_volume(pc.ct_ch.ch[static_cast<size_t>(ci)],
                         dir + "/ct_ch" + std::to_string(ci + 1));
        }
    }
    write_volume(pc.mask, dir + "/mask");
    write_volume(pc.cbct_corr, dir + "/cbct_corr");
    if (pc.has_ct) write_volume(pc.ct_masked, dir + "/ct_masked");

    json j;
    j["format"] = "mcsynth-preprocess/1";
    j["case_id"] = pc.case_id;
    j["region"] = region_name(pc.region);
    j["has_ct"] = pc.has_ct;
    j["nz"] = pc.cbct_ch.ch[0].nz();
    j["windows_cbct"] = windows_to_json(pc.cbct_ch.windows);
    if (pc.has_ct) j["windows_ct"] = windows_to_json(pc.ct_ch.windows);
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IoError("cannot write " + dir + "/manifest.json");
    out << j.dump(2) << "\n";
    if (!out.flush()) throw IoError("failed writing " + dir + "/manifest.json");
}

PreprocessedCase read_preprocessed(const std::string& cache_root, const CaseRef& ref) {
    std::string dir = case_dir(cache_root, ref.region, ref.case_id);
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IoError("cannot open " + dir + "/manifest.json");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + dir + "/manifest.json: " + e.what());
    }
    if (j.value("format", "") != "mcsynth-preprocess/1") {
        throw IoError(dir + "/manifest.json: unsupported cache format");
    }

    PreprocessedCase pc;
    pc.case_id = j.at("case_id").get<std::string>();
    pc.region = parse_region(j.at("region").get<std::string>());
    pc.has_ct = j.at("has_ct").get<bool>();
    pc.cbct_ch.windows = windows_from_json(j.at("windows_cbct"));
    if (pc.has_ct) pc.ct_ch.windows = windows_from_json(j.at("windows_ct"));
    for (int ci = 0; ci < 3; ++ci) {
        pc.cbct_ch.ch[static_cast<size_t>(ci)] =
            read_volume(dir + "/cbct_ch" + std::to_string(ci + 1));
        if (pc.has_ct) {
            pc.ct_ch.ch[static_cast<size_t>(ci)] =
                read_volume(dir + "/ct_ch" + std::to_string(ci + 1));
        }
    }
    pc.mask = read_volume(dir + "/mask");
    pc.cbct_corr = read_volume(dir + "/cbct_corr");
    if (pc.has_ct) pc.ct_masked = read_volume(dir + "/ct_masked");
    return pc;
}

std::vector<CaseRef> list_preprocessed(const std::string& cache_root) {
    if (!fs::is_directory(cache_root)) {
        throw IoError("preprocess cache root " + cache_root + " is not a directory");
    }
    return scan_cases(cache_root, "manifest.json");
}

}  // namespace mcs
