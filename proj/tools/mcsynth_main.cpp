// mcsynth command line: phantom, preprocess, train, infer, evaluate, report,
// end-to-end. Exit codes: 0 success, 1 invalid input/usage, 2 runtime or IO
// failure. Built purely on the C API.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcsynth/mcsynth.h"

namespace {

int finish(mcs_status status) {
    if (status == MCS_OK) return 0;
    std::fprintf(stderr, "error: %s\n", mcs_last_error());
    return status == MCS_ERR_INVALID_ARGUMENT ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-channel CBCT-to-synthetic-CT pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags are accepted after the subcommand too
    app.failure_message(CLI::FailureMessage::help);
    app.set_version_flag("--version", std::string(mcs_version()));

    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    bool verbose = false;
    app.add_option("--seed", seed, "override the config/command seed")
        ->each([&](const std::string&) { seed_set = true; });
    app.add_option("--threads", threads, "BLAS thread count (default 1, deterministic)");
    app.add_flag("--verbose", verbose, "log per-stage progress to stderr");

    // phantom
    auto* ph = app.add_subcommand("phantom", "generate a procedural phantom dataset");
    int ph_n = 8;
    std::string ph_region, ph_out;
    std::vector<std::int64_t> ph_size;
    std::uint64_t ph_seed = 0;
    ph->add_option("--n", ph_n, "number of cases")->check(CLI::PositiveNumber);
    ph->add_option("--region", ph_region, "brain or pelvis")->required();
    ph->add_option("--seed", ph_seed, "dataset seed");
    ph->add_option("--out", ph_out, "output dataset directory")->required();
    ph->add_option("--size", ph_size, "volume shape z,y,x (default per region)")
        ->delimiter(',')
        ->expected(3);

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "build the normalized channel cache");
    std::string pre_data, pre_out, pre_region;
    pre->add_option("--data", pre_data, "raw dataset root")->required();
    pre->add_option("--out", pre_out, "cache output root")->required();
    pre->add_option("--region", pre_region, "restrict to one region");

    // train
    auto* tr = app.add_subcommand("train", "train the cycle-consistent model for a region");
    std::string tr_data, tr_out, tr_region, tr_config;
    tr->add_option("--data", tr_data, "preprocessed cache root")->required();
    tr->add_option("--out", tr_out, "training output directory")->required();
    tr->add_option("--region", tr_region, "brain or pelvis")->required();
    tr->add_option("--config", tr_config, "pipeline config JSON");

    // infer
    auto* in = app.add_subcommand("infer", "generate a synthetic CT for one case");
    std::string in_ckpt, in_region, in_case, in_out, in_base = "auto";
    bool in_intermediates = false;
    in->add_option("--checkpoint", in_ckpt, "checkpoint directory")->required();
    in->add_option("--region", in_region, "brain or pelvis")->required();
    in->add_option("--case", in_case, "case directory (cbct + mask, optional ct)")
        ->required();
    in->add_option("--out", in_out, "output directory")->required();
    in->add_flag("--emit-intermediates", in_intermediates,
                 "also write per-channel and fused volumes");
    in->add_option("--base", in_base, "recombination base: auto, ch1 or fused");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "score predictions against ground truth");
    std::string ev_gt, ev_pred, ev_mask, ev_out, ev_csv, ev_region;
    std::vector<std::string> ev_gamma;
    ev->add_option("--gt", ev_gt, "ground-truth volume directory")->required();
    ev->add_option("--pred", ev_pred, "prediction volume directory")->required();
    ev->add_option("--mask", ev_mask, "mask volume directory")->required();
    ev->add_option("--out", ev_out, "report JSON path")->required();
    ev->add_option("--csv", ev_csv, "also write CSV here");
    ev->add_option("--region", ev_region, "region label for flat layouts");
    ev->add_option("--gamma", ev_gamma, "reference and evaluated dose volumes")
        ->expected(2);

    // report
    auto* rp = app.add_subcommand("report", "merge report JSONs and recompute aggregates");
    std::vector<std::string> rp_in;
    std::string rp_out, rp_csv;
    rp->add_option("--in", rp_in, "input report JSON (repeatable)")->required();
    rp->add_option("--out", rp_out, "merged report JSON path")->required();
    rp->add_option("--csv", rp_csv, "also write CSV here");

    // end-to-end
    auto* e2e = app.add_subcommand("end-to-end",
                                   "phantom/preprocess/train/infer/evaluate in one run");
    std::string e2e_config, e2e_workdir;
    e2e->add_option("--config", e2e_config, "pipeline config JSON")->required();
    e2e->add_option("--workdir", e2e_workdir, "working directory for all stages")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (mcs_set_threads(threads) != MCS_OK) return finish(MCS_ERR_INVALID_ARGUMENT);
    mcs_set_verbose(verbose ? 1 : 0);
    if (seed_set) mcs_set_seed(seed);

    if (*ph) {
        const std::int64_t shape[3] = {ph_size.empty() ? 0 : ph_size[0],
                                       ph_size.empty() ? 0 : ph_size[1],
                                       ph_size.empty() ? 0 : ph_size[2]};
        return finish(mcs_cmd_phantom(ph_n, ph_region.c_str(), ph_seed, ph_out.c_str(),
                                      ph_size.empty() ? nullptr : shape));
    }
    if (*pre) {
        return finish(mcs_cmd_preprocess(pre_data.c_str(), pre_out.c_str(),
                                         pre_region.empty() ? nullptr : pre_region.c_str()));
    }
    if (*tr) {
        return finish(mcs_cmd_train(tr_data.c_str(), tr_out.c_str(), tr_region.c_str(),
                                    tr_config.empty() ? nullptr : tr_config.c_str()));
    }
    if (*in) {
        return finish(mcs_cmd_infer(in_ckpt.c_str(), in_region.c_str(), in_case.c_str(),
                                    in_out.c_str(), in_intermediates ? 1 : 0,
                                    in_base.c_str()));
    }
    if (*ev) {
        return finish(mcs_cmd_evaluate(
            ev_gt.c_str(), ev_pred.c_str(), ev_mask.c_str(), ev_out.c_str(),
            ev_csv.empty() ? nullptr : ev_csv.c_str(),
            ev_region.empty() ? nullptr : ev_region.c_str(),
            ev_gamma.empty() ? nullptr : ev_gamma[0].c_str(),
            ev_gamma.empty() ? nullptr : ev_gamma[1].c_str()));
    }
    if (*rp) {
        std::vector<const char*> inputs;
        for (const std::string& s : rp_in) inputs.push_back(s.c_str());
        return finish(mcs_cmd_report(inputs.data(), inputs.size(), rp_out.c_str(),
                                     rp_csv.empty() ? nullptr : rp_csv.c_str()));
    }
    if (*e2e) {
        return finish(mcs_cmd_end_to_end(e2e_config.c_str(), e2e_workdir.c_str()));
    }
    return 1;
}
