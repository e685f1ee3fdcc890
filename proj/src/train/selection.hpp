#pragma once

#include <string>
#include <vector>

#include "preprocess/channels.hpp"

namespace mcs {

struct CheckpointScore {
    std::string dir;
    int epoch = 0;
    double mae = 0.0;   // means over the validation cases
    double psnr = 0.0;
    double ssim = 0.0;
    int rank_mae = 0, rank_psnr = 0, rank_ssim = 0;
    int rank_sum = 0;
    bool selected = false;
};

struct SelectionResult {
    std::vector<CheckpointScore> scores;  // input order
    size_t selected_index = 0;
};

// Competition ranking: 1 + number of strictly better entries; equal values
// share a rank. NaN ranks behind every real value.
std::vector<int> rank_metric(const std::vector<double>& values, bool higher_is_better);

// Minimum rank-sum; ties broken by lowest MAE, then earliest epoch.
size_t pick_checkpoint(std::vector<CheckpointScore>& scores);

// Scores every checkpoint by mean masked MAE/PSNR/SSIM of its final sCT
// against the CT over the validation cases, then picks one.
SelectionResult select_checkpoint(const std::vector<std::string>& checkpoint_dirs,
                                  const std::vector<PreprocessedCase>& val_cases,
                                  Region region);

void write_selection_json(const SelectionResult& result, const std::string& path);

}  // namespace mcs
