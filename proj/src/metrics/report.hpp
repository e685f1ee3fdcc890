#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/volume.hpp"

namespace mcs {

struct CaseMetrics {
    std::string case_id;
    std::string region;
    double mae = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    int64_t voxel_count = 0;  // in-mask voxels
};

CaseMetrics compute_case_metrics(const std::string& case_id, const std::string& region,
                                 const Volume3D& gt, const Volume3D& pred,
                                 const Volume3D& mask);

struct AggregateRow {
    int n_cases = 0;
    double mae_mean = 0.0, mae_std = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double ssim_mean = 0.0, ssim_std = 0.0;
};

struct MetricsReport {
    std::vector<CaseMetrics> per_case;
    // keyed by region name, plus "full" across all cases
    std::map<std::string, AggregateRow> aggregate;
};

// Aggregates use the population standard deviation. Rows keep their input
// order; aggregate keys are the regions present plus "full".
MetricsReport build_report(const std::vector<CaseMetrics>& rows);

// +inf serializes as the string "inf" (-inf likewise), NaN as null.
nlohmann::json report_to_json(const MetricsReport& report);
void write_report_json(const MetricsReport& report, const std::filesystem::path& path);
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace mcs
