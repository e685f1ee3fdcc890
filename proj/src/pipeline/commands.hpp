#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metrics/gamma.hpp"
#include "metrics/report.hpp"
#include "pipeline/config.hpp"
#include "train/selection.hpp"
#include "train/trainer.hpp"

namespace mcs {

extern const char* kToolVersion;

struct GlobalOptions {
    std::optional<uint64_t> seed;  // overrides config seeds when set
    int threads = 1;
    bool verbose = false;
};

struct PhantomCmd {
    int n = 8;
    std::string region = "brain";
    uint64_t seed = 0;
    std::string out;
    std::array<int64_t, 3> shape{0, 0, 0};  // 0 = region default
};
void cmd_phantom(const PhantomCmd& cmd, const GlobalOptions& g);

struct PreprocessCmd {
    std::string data;  // raw dataset root
    std::string out;   // cache root
    std::string region;  // empty = all regions present
};
void cmd_preprocess(const PreprocessCmd& cmd, const GlobalOptions& g);

struct TrainCmd {
    std::string data;  // preprocessed cache root
    std::string out;
    std::string region;
    std::string config_path;  // empty = defaults
};
struct TrainOutputs {
    TrainResult result;
    SelectionResult selection;
    std::string selected_dir;  // <out>/selected
};
TrainOutputs cmd_train(const TrainCmd& cmd, const GlobalOptions& g);

struct InferCmd {
    std::string checkpoint;
    std::string region;
    std::string case_dir;  // raw case directory
    std::string out;
    bool emit_intermediates = false;
    std::string base = "auto";
};
void cmd_infer(const InferCmd& cmd, const GlobalOptions& g);

struct EvaluateCmd {
    std::string gt, pred, mask;  // directories of SVF volumes (region subdirs or flat)
    std::string out_json;
    std::string out_csv;  // optional
    std::string region;   // required for flat layouts
    std::vector<std::string> gamma_volumes;  // [ref, eval] dose paths, optional
    GammaParams gamma_params;
};
MetricsReport cmd_evaluate(const EvaluateCmd& cmd, const GlobalOptions& g);

struct ReportCmd {
    std::vector<std::string> inputs;  // report JSON files to merge
    std::string out_json;
    std::string out_csv;  // optional
};
MetricsReport cmd_report(const ReportCmd& cmd, const GlobalOptions& g);

struct EndToEndCmd {
    std::string config_path;
    std::string workdir;
};
MetricsReport cmd_end_to_end(const EndToEndCmd& cmd, const GlobalOptions& g);

}  // namespace mcs
