// Exercises the shared-library C interface the way an external caller would:
// only u5apc.h, opaque handles and status codes.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <u5apc.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub) const { return (path / sub).string(); }
};

void write_sim_config(const std::string& path) {
    std::ofstream out(path);
    out << "regions = 4\n"
        << "first_period = 2009\n"
        << "last_period = 2013\n"
        << "eas_urban_min = 6\n"
        << "eas_urban_max = 8\n"
        << "eas_rural_min = 6\n"
        << "eas_rural_max = 10\n"
        << "ea_households_min = 50\n"
        << "ea_households_max = 90\n"
        << "births_per_household_year = 0.10\n"
        << "base_age_logit = -3.4, -5.6, -6.6, -7.0, -7.2, -7.4\n";
}

} // namespace

TEST_CASE("version and error strings are always available") {
    CHECK(std::strlen(u5apc_version()) > 0);
    CHECK(u5apc_last_error() != nullptr);
}

TEST_CASE("options init fills defaults") {
    u5apc_options opts;
    u5apc_options_init(&opts);
    CHECK(opts.draws == 1000);
    CHECK(std::strcmp(opts.variant, "APC") == 0);
    CHECK(opts.threads == 1);
    CHECK(opts.out_dir == nullptr);
}

TEST_CASE("commands validate their inputs") {
    CHECK(u5apc_run_fit(nullptr) == U5APC_ERR_INVALID);
    u5apc_options opts;
    u5apc_options_init(&opts);
    CHECK(u5apc_run_fit(&opts) == U5APC_ERR_INVALID);  // missing out_dir
    CHECK(std::strlen(u5apc_last_error()) > 0);

    TempDir dir("u5apc_capi_badfit");
    const std::string out = dir.str("out");
    opts.out_dir = out.c_str();
    CHECK(u5apc_run_fit(&opts) != U5APC_OK);  // missing survey
}

TEST_CASE("survey handle reports loading failures") {
    u5apc_survey* survey = nullptr;
    CHECK(u5apc_survey_open("/nonexistent/file.csv", &survey) == U5APC_ERR_IO);
    CHECK(survey == nullptr);
    CHECK(std::strlen(u5apc_last_error()) > 0);
}

TEST_CASE("full pipeline through the C interface") {
    TempDir dir("u5apc_capi_pipeline");
    const std::string cfg_path = dir.str("sim.cfg");
    write_sim_config(cfg_path);

    u5apc_options opts;
    u5apc_options_init(&opts);
    const std::string sim_out = dir.str("sim");
    opts.sim_config = cfg_path.c_str();
    opts.out_dir = sim_out.c_str();
    opts.clusters_per_stratum = 4;
    opts.households_per_cluster = 20;
    opts.seed = 11;
    REQUIRE(u5apc_run_simulate(&opts) == U5APC_OK);
    REQUIRE(fs::exists(fs::path(sim_out) / "survey.csv"));
    REQUIRE(fs::exists(fs::path(sim_out) / "manifest.json"));

    const std::string survey_path = (fs::path(sim_out) / "survey.csv").string();
    u5apc_survey* survey = nullptr;
    REQUIRE(u5apc_survey_open(survey_path.c_str(), &survey) == U5APC_OK);
    int64_t records = 0;
    int64_t rejections = 0;
    CHECK(u5apc_survey_counts(survey, &records, &rejections) == U5APC_OK);
    CHECK(records > 200);
    CHECK(rejections == 0);
    const std::string rej_path = dir.str("rejections.csv");
    CHECK(u5apc_survey_write_rejections(survey, rej_path.c_str()) == U5APC_OK);
    CHECK(fs::exists(rej_path));

    const std::string adjacency = (fs::path(sim_out) / "adjacency.txt").string();
    const std::string proportions = (fs::path(sim_out) / "proportions.csv").string();
    u5apc_options fit_opts;
    u5apc_options_init(&fit_opts);
    fit_opts.adjacency = adjacency.c_str();
    fit_opts.proportions = proportions.c_str();
    fit_opts.variant = "AP";
    fit_opts.draws = 150;
    fit_opts.seed = 3;
    fit_opts.first_period = 2009;
    fit_opts.last_period = 2013;
    fit_opts.optimizer_budget = 80;

    u5apc_fit* fit = nullptr;
    REQUIRE(u5apc_fit_run(survey, &fit_opts, &fit) == U5APC_OK);
    int32_t hypers = 0;
    CHECK(u5apc_fit_hyper_count(fit, &hypers) == U5APC_OK);
    CHECK(hypers == 6);  // AP drops the cohort precision
    char name[64];
    bool saw_phi = false;
    for (int32_t i = 0; i < hypers; ++i) {
        CHECK(u5apc_fit_hyper_name(fit, i, name, sizeof(name)) == U5APC_OK);
        double internal = 0.0;
        double natural = 0.0;
        CHECK(u5apc_fit_hyper_value(fit, i, &internal, &natural) == U5APC_OK);
        if (std::strcmp(name, "logit_phi") == 0) {
            saw_phi = true;
            CHECK(natural > 0.0);
            CHECK(natural < 1.0);
        }
    }
    CHECK(saw_phi);
    CHECK(u5apc_fit_hyper_value(fit, hypers + 1, nullptr, nullptr) == U5APC_ERR_INVALID);

    double violation = -1.0;
    CHECK(u5apc_fit_constraint_violation(fit, &violation) == U5APC_OK);
    CHECK(violation >= 0.0);
    CHECK(violation < 1e-8);

    const std::string est_path = dir.str("estimates.csv");
    CHECK(u5apc_fit_write_estimates(fit, est_path.c_str()) == U5APC_OK);
    CHECK(fs::file_size(est_path) > 100);

    u5apc_fit_close(fit);
    u5apc_survey_close(survey);

    // expand + direct through the command interface
    u5apc_options expand_opts;
    u5apc_options_init(&expand_opts);
    const std::string expand_out = dir.str("expand");
    expand_opts.survey_csv = survey_path.c_str();
    expand_opts.out_dir = expand_out.c_str();
    CHECK(u5apc_run_expand(&expand_opts) == U5APC_OK);
    CHECK(fs::exists(fs::path(expand_out) / "cells.csv"));

    u5apc_options direct_opts;
    u5apc_options_init(&direct_opts);
    const std::string direct_out = dir.str("direct");
    direct_opts.survey_csv = survey_path.c_str();
    direct_opts.out_dir = direct_out.c_str();
    direct_opts.first_period = 2009;
    direct_opts.last_period = 2013;
    direct_opts.seed = 5;
    CHECK(u5apc_run_direct(&direct_opts) == U5APC_OK);
    CHECK(fs::exists(fs::path(direct_out) / "direct.csv"));
}
