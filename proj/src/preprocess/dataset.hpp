#pragma once

#include <string>
#include <vector>

#include "preprocess/channels.hpp"

namespace mcs {

// Raw dataset layout: <root>/<region>/<case_id>/{cbct,ct,mask}.json/.raw
// (ct and mask optional per case). Preprocessed cache layout:
// <root>/<region>/<case_id>/{manifest.json, cbct_ch1..3, ct_ch1..3,
// mask, cbct_corr, ct_masked}.

struct CaseRef {
    Region region = Region::brain;
    std::string case_id;

    bool operator==(const CaseRef&) const = default;
};

std::string case_dir(const std::string& root, Region region, const std::string& case_id);

// All cases under the root, sorted by (region, case_id) for determinism.
std::vector<CaseRef> list_cases(const std::string& root);

PatientCase load_case(const std::string& root, const CaseRef& ref);
// Loads one case straight from its directory; case_id defaults to the
// directory name.
PatientCase load_case_dir(const std::string& dir, Region region,
                          const std::string& case_id = "");
void write_case(const std::string& root, const PatientCase& c);

void write_preprocessed(const std::string& cache_root, const PreprocessedCase& pc);
PreprocessedCase read_preprocessed(const std::string& cache_root, const CaseRef& ref);
std::vector<CaseRef> list_preprocessed(const std::string& cache_root);

}  // namespace mcs
