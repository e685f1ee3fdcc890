#include "train/selection.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/errors.hpp"
#include "infer/synthesis.hpp"
#include "metrics/image_metrics.hpp"
#include "nn/networks.hpp"

namespace mcs {

std::vector<int> rank_metric(const std::vector<double>& values, bool higher_is_better) {
    auto better = [&](double a, double b) {
        if (std::isnan(a)) return false;
        if (std::isnan(b)) return true;
        return higher_is_better ? a > b : a < b;
    };
    std::vector<int> ranks(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        int r = 1;
        for (size_t j = 0; j < values.size(); ++j)
            if (j != i && better(values[j], values[i])) ++r;
        ranks[i] = r;
    }
    return ranks;
}

size_t pick_checkpoint(std::vector<CheckpointScore>& scores) {
    if (scores.empty()) throw ValidationError("select_checkpoint: no checkpoints");
    std::vector<double> mae, psnr, ssim;
    for (const auto& s : scores) {
        mae.push_back(s.mae);
        psnr.push_back(s.psnr);
        ssim.push_back(s.ssim);
    }
    const std::vector<int> r_mae = rank_metric(mae, false);
    const std::vector<int> r_psnr = rank_metric(psnr, true);
    const std::vector<int> r_ssim = rank_metric(ssim, true);
    size_t best = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        scores[i].rank_mae = r_mae[i];
        scores[i].rank_psnr = r_psnr[i];
        scores[i].rank_ssim = r_ssim[i];
        scores[i].rank_sum = r_mae[i] + r_psnr[i] + r_ssim[i];
        scores[i].selected = false;
        const CheckpointScore& a = scores[i];
        const CheckpointScore& b = scores[best];
        if (i == 0) continue;
        if (a.rank_sum < b.rank_sum ||
            (a.rank_sum == b.rank_sum && a.mae < b.mae) ||
            (a.rank_sum == b.rank_sum && a.mae == b.mae && a.epoch < b.epoch)) {
            best = i;
        }
    }
    scores[best].selected = true;
    return best;
}

SelectionResult select_checkpoint(const std::vector<std::string>& checkpoint_dirs,
                                  const std::vector<PreprocessedCase>& val_cases,
                                  Region region) {
    if (checkpoint_dirs.empty()) throw ValidationError("select_checkpoint: no checkpoints");
    if (val_cases.empty()) throw ValidationError("select_checkpoint: no validation cases");
    for (const auto& c : val_cases)
        if (!c.has_ct)
            throw ValidationError("select_checkpoint: case '" + c.case_id + "' has no CT");

    SelectionResult res;
    for (const std::string& dir : checkpoint_dirs) {
        CheckpointMeta meta;
        ModelBundle bundle = load_checkpoint(dir, &meta);
        CheckpointScore s;
        s.dir = dir;
        s.epoch = meta.epoch;
        for (const PreprocessedCase& pc : val_cases) {
            SctBundle sct = generate_sct(pc, bundle, region, meta.slice_size);
            Volume3D final_sct = recombine_channels(sct, region);
            s.mae += masked_mae(pc.ct_masked, final_sct, pc.mask);
            s.psnr += masked_psnr(pc.ct_masked, final_sct, pc.mask);
            s.ssim += masked_ssim(pc.ct_masked, final_sct, pc.mask);
        }
        s.mae /= double(val_cases.size());
        s.psnr /= double(val_cases.size());
        s.ssim /= double(val_cases.size());
        res.scores.push_back(std::move(s));
    }
    res.selected_index = pick_checkpoint(res.scores);
    return res;
}

void write_selection_json(const SelectionResult& result, const std::string& path) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : result.scores) {
        rows.push_back({{"dir", s.dir},
                        {"epoch", s.epoch},
                        {"mae_hu", s.mae},
                        {"psnr_db", std::isinf(s.psnr) ? nlohmann::json("inf")
                                                       : nlohmann::json(s.psnr)},
                        {"ssim", s.ssim},
                        {"rank_mae", s.rank_mae},
                        {"rank_psnr", s.rank_psnr},
                        {"rank_ssim", s.rank_ssim},
                        {"rank_sum", s.rank_sum},
                        {"selected", s.selected}});
    }
    nlohmann::json j{{"format", "mcsynth-selection/1"},
                     {"checkpoints", rows},
                     {"selected", result.scores[result.selected_index].dir}};
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p);
    if (!f) throw IoError("selection: cannot open " + path);
    f << j.dump(2) << "\n";
}

}  // namespace mcs
