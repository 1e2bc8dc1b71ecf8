// Command-line front end. Talks to the engine exclusively through the
// shared-library C API in u5apc.h.

#include <u5apc.h>

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <string>

namespace {

struct Args {
    std::string input, adjacency, proportions, model_config, sim_config, run_dir, out;
    std::string variant = "APC";
    std::string hyper = "eb";
    std::string cohort_collapse = "dominant";
    int draws = 1000;
    int horizon = 0;
    int first_period = 0;
    int last_period = 0;
    int holdout = 0;
    int clusters = 17;
    int households = 25;
    int threads = 0;
    int budget = 300;
    int cv_budget = 48;
    std::uint64_t seed = 0;
};

u5apc_options to_options(const Args& a) {
    u5apc_options opts;
    u5apc_options_init(&opts);
    opts.survey_csv = a.input.empty() ? nullptr : a.input.c_str();
    opts.adjacency = a.adjacency.empty() ? nullptr : a.adjacency.c_str();
    opts.proportions = a.proportions.empty() ? nullptr : a.proportions.c_str();
    opts.model_config = a.model_config.empty() ? nullptr : a.model_config.c_str();
    opts.sim_config = a.sim_config.empty() ? nullptr : a.sim_config.c_str();
    opts.run_dir = a.run_dir.empty() ? nullptr : a.run_dir.c_str();
    opts.out_dir = a.out.c_str();
    opts.variant = a.variant.c_str();
    opts.hyper = a.hyper.c_str();
    opts.cohort_collapse = a.cohort_collapse.c_str();
    opts.draws = a.draws;
    opts.horizon = a.horizon;
    opts.first_period = a.first_period;
    opts.last_period = a.last_period;
    opts.holdout_period = a.holdout;
    opts.clusters_per_stratum = a.clusters;
    opts.households_per_cluster = a.households;
    int threads = a.threads;
    if (threads <= 0) {
        if (const char* env = std::getenv("U5APC_THREADS")) threads = std::atoi(env);
    }
    opts.threads = threads > 0 ? threads : 1;
    opts.optimizer_budget = a.budget;
    opts.cv_optimizer_budget = a.cv_budget;
    opts.seed = a.seed;
    return opts;
}

void add_common(CLI::App* cmd, Args& args) {
    cmd->add_option("--out", args.out, "output directory")->required();
    cmd->add_option("--seed", args.seed, "random seed (default 0)");
    cmd->add_option("--threads", args.threads,
                    "worker threads (default: U5APC_THREADS or 1)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(u5apc_version()) +
                 " — subnational U5MR estimation with APC smoothing"};
    app.require_subcommand(1);
    Args args;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic survey with known truth");
    sim->add_option("--config", args.sim_config, "simulation config (key = value)")->required();
    sim->add_option("--clusters", args.clusters, "sampled clusters per stratum");
    sim->add_option("--households", args.households, "households per cluster");
    add_common(sim, args);

    auto* expand = app.add_subcommand("expand", "expand birth histories into count cells");
    expand->add_option("--input", args.input, "survey CSV")->required();
    add_common(expand, args);

    const auto add_model_options = [&](CLI::App* cmd, bool need_adjacency) {
        cmd->add_option("--input", args.input, "survey CSV")->required();
        auto* adj = cmd->add_option("--adjacency", args.adjacency, "region adjacency file");
        if (need_adjacency) adj->required();
        cmd->add_option("--proportions", args.proportions,
                        "stratum/national proportions CSV");
        cmd->add_option("--model-config", args.model_config, "model config (key = value)");
        cmd->add_option("--variant", args.variant, "AP, AC or APC");
        cmd->add_option("--draws", args.draws, "posterior draws (default 1000)");
        cmd->add_option("--first-period", args.first_period, "first estimation year");
        cmd->add_option("--last-period", args.last_period, "last estimation year");
        cmd->add_option("--budget", args.budget, "hyper optimizer evaluation budget");
    };

    auto* fit = app.add_subcommand("fit", "fit the model and write estimates");
    add_model_options(fit, true);
    fit->add_option("--horizon", args.horizon, "prediction years past the last period");
    fit->add_option("--hyper", args.hyper, "hyperparameter treatment: eb or ccd");
    fit->add_option("--cohort-collapse", args.cohort_collapse,
                    "band-period cohort rule: dominant or weighted");
    add_common(fit, args);

    auto* predict = app.add_subcommand("predict", "fit and write prediction-period estimates");
    add_model_options(predict, true);
    predict->add_option("--horizon", args.horizon, "prediction years")->required();
    predict->add_option("--hyper", args.hyper, "hyperparameter treatment: eb or ccd");
    predict->add_option("--cohort-collapse", args.cohort_collapse,
                        "band-period cohort rule: dominant or weighted");
    add_common(predict, args);

    auto* direct = app.add_subcommand("direct",
                                      "design-weighted direct estimates and national smoother");
    direct->add_option("--input", args.input, "survey CSV")->required();
    direct->add_option("--first-period", args.first_period, "first year");
    direct->add_option("--last-period", args.last_period, "last year");
    direct->add_option("--horizon", args.horizon, "smoother extrapolation years");
    direct->add_option("--draws", args.draws, "posterior draws for the smoother");
    add_common(direct, args);

    auto* cv = app.add_subcommand("cv", "leave-one-region-out validation and scores");
    add_model_options(cv, true);
    cv->add_option("--holdout", args.holdout, "held-out year (default: last period)");
    cv->add_option("--cv-budget", args.cv_budget, "optimizer budget per refit");
    cv->add_option("--cohort-collapse", args.cohort_collapse,
                   "band-period cohort rule: dominant or weighted");
    add_common(cv, args);

    auto* report = app.add_subcommand("report", "emit plot-ready long-format CSVs");
    report->add_option("--run-dir", args.run_dir, "directory of a completed run")->required();
    add_common(report, args);

    CLI11_PARSE(app, argc, argv);

    const u5apc_options opts = to_options(args);
    int rc = U5APC_ERR_INVALID;
    if (sim->parsed()) rc = u5apc_run_simulate(&opts);
    if (expand->parsed()) rc = u5apc_run_expand(&opts);
    if (fit->parsed()) rc = u5apc_run_fit(&opts);
    if (predict->parsed()) rc = u5apc_run_predict(&opts);
    if (direct->parsed()) rc = u5apc_run_direct(&opts);
    if (cv->parsed()) rc = u5apc_run_cv(&opts);
    if (report->parsed()) rc = u5apc_run_report(&opts);

    if (rc != U5APC_OK) {
        std::fprintf(stderr, "u5apc: %s\n", u5apc_last_error());
        return rc;
    }
    return 0;
}
