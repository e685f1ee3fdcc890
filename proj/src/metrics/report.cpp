#include "metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "core/errors.hpp"
#include "metrics/image_metrics.hpp"

namespace mcs {

namespace {

nlohmann::json sentinel_number(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

std::string csv_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

struct Acc {
    std::vector<double> mae, psnr, ssim;
    void add(const CaseMetrics& m) {
        mae.push_back(m.mae);
        psnr.push_back(m.psnr);
        ssim.push_back(m.ssim);
    }
    // Two-pass population moments: a single case gives std exactly 0.
    static void finish(const std::vector<double>& xs, double* mean, double* sd) {
        const double n = static_cast<double>(xs.size());
        double s = 0;
        for (double x : xs) s += x;
        *mean = s / n;
        double v = 0;
        for (double x : xs) v += (x - *mean) * (x - *mean);
        *sd = std::sqrt(v / n);
    }
    AggregateRow row() const {
        AggregateRow r;
        r.n_cases = static_cast<int>(mae.size());
        finish(mae, &r.mae_mean, &r.mae_std);
        finish(psnr, &r.psnr_mean, &r.psnr_std);
        finish(ssim, &r.ssim_mean, &r.ssim_std);
        return r;
    }
};

}  // namespace

CaseMetrics compute_case_metrics(const std::string& case_id, const std::string& region,
                                 const Volume3D& gt, const Volume3D& pred,
                                 const Volume3D& mask) {
    CaseMetrics m;
    m.case_id = case_id;
    m.region = region;
    m.mae = masked_mae(gt, pred, mask);
    m.psnr = masked_psnr(gt, pred, mask);
    m.ssim = masked_ssim(gt, pred, mask);
    for (float v : mask.data) m.voxel_count += (v != 0.0f);
    return m;
}

MetricsReport build_report(const std::vector<CaseMetrics>& rows) {
    if (rows.empty()) throw ValidationError("report: no cases");
    MetricsReport rep;
    rep.per_case = rows;
    std::map<std::string, Acc> accs;
    for (const CaseMetrics& m : rows) {
        accs[m.region].add(m);
        accs["full"].add(m);
    }
    for (const auto& [name, acc] : accs) rep.aggregate[name] = acc.row();
    return rep;
}

nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json per_case = nlohmann::json::array();
    for (const CaseMetrics& m : report.per_case) {
        per_case.push_back({{"case_id", m.case_id},
                            {"region", m.region},
                            {"mae_hu", sentinel_number(m.mae)},
                            {"psnr_db", sentinel_number(m.psnr)},
                            {"ssim", sentinel_number(m.ssim)},
                            {"voxel_count", m.voxel_count}});
    }
    nlohmann::json agg;
    for (const auto& [name, row] : report.aggregate) {
        agg[name] = {{"n_cases", row.n_cases},
                     {"mae_hu", {{"mean", sentinel_number(row.mae_mean)},
                                 {"std", sentinel_number(row.mae_std)}}},
                     {"psnr_db", {{"mean", sentinel_number(row.psnr_mean)},
                                  {"std", sentinel_number(row.psnr_std)}}},
                     {"ssim", {{"mean", sentinel_number(row.ssim_mean)},
                               {"std", sentinel_number(row.ssim_std)}}}};
    }
    return nlohmann::json{{"format", "mcsynth-report/1"},
                          {"config",
                           {{"psnr_range", "in-mask ground-truth range"},
                            {"ssim", "2D slice-wise, gaussian 11x11 sigma 1.5, K1 0.01, K2 0.03, "
                                     "masked windows renormalized"},
                            {"std", "population"}}},
                          {"per_case", per_case},
                          {"aggregate", agg}};
}

void write_report_json(const MetricsReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("report: cannot open " + path.string());
    f << report_to_json(report).dump(2) << "\n";
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("report: cannot open " + path.string());
    f << "case_id,region,mae_hu,psnr_db,ssim,voxel_count\n";
    for (const CaseMetrics& m : report.per_case) {
        f << m.case_id << "," << m.region << "," << csv_number(m.mae) << ","
          << csv_number(m.psnr) << "," << csv_number(m.ssim) << "," << m.voxel_count << "\n";
    }
    for (const auto& [name, row] : report.aggregate) {
        f << "aggregate:" << name << "," << row.n_cases << "," << csv_number(row.mae_mean)
          << " +- " << csv_number(row.mae_std) << "," << csv_number(row.psnr_mean) << " +- "
          << csv_number(row.psnr_std) << "," << csv_number(row.ssim_mean) << " +- "
          << csv_number(row.ssim_std) << ",\n";
    }
}

}  // namespace mcs
