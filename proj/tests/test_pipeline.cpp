#include <doctest.h>

#include "csv.hpp"
#include "pipeline.hpp"

#include <filesystem>
#include <fstream>

using namespace u5apc;

namespace {

namespace fs = std::filesystem;

fs::path make_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_sim_config(const fs::path& path) {
    std::ofstream out(path);
    out << "regions = 5\n"
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

RunConfig base_config(const fs::path& dir) {
    RunConfig cfg;
    cfg.sim_config = (dir / "sim.cfg").string();
    cfg.out_dir = (dir / "sim").string();
    cfg.clusters_per_stratum = 4;
    cfg.households_per_cluster = 20;
    cfg.seed = 123;
    return cfg;
}

std::string file_digest(const fs::path& p) { return sha256_file(p); }

} // namespace

TEST_CASE("reruns with the same seed write byte-identical artifacts") {
    const fs::path dir = make_dir("u5apc_pipeline_determinism");
    write_sim_config(dir / "sim.cfg");

    RunConfig sim = base_config(dir);
    cmd_simulate(sim);
    RunConfig sim2 = sim;
    sim2.out_dir = (dir / "sim2").string();
    cmd_simulate(sim2);
    for (const char* name : {"survey.csv", "truth.csv", "proportions.csv", "adjacency.txt",
                             "clusters.csv"}) {
        CHECK(file_digest(dir / "sim" / name) == file_digest(dir / "sim2" / name));
    }

    RunConfig fit;
    fit.survey_csv = (dir / "sim" / "survey.csv").string();
    fit.adjacency = (dir / "sim" / "adjacency.txt").string();
    fit.proportions = (dir / "sim" / "proportions.csv").string();
    fit.variant = "AP";
    fit.draws = 120;
    fit.seed = 77;
    fit.first_period = 2009;
    fit.last_period = 2013;
    fit.horizon = 2;
    fit.optimizer_budget = 60;
    fit.out_dir = (dir / "fit1").string();
    cmd_fit(fit);
    RunConfig fit2 = fit;
    fit2.out_dir = (dir / "fit2").string();
    cmd_fit(fit2);
    for (const char* name : {"estimates.csv", "fit_report.csv", "hazards.csv",
                             "rejections.csv"}) {
        CHECK(file_digest(dir / "fit1" / name) == file_digest(dir / "fit2" / name));
    }

    // a different seed must change the sampled draws
    RunConfig fit3 = fit;
    fit3.seed = 78;
    fit3.out_dir = (dir / "fit3").string();
    cmd_fit(fit3);
    CHECK(file_digest(dir / "fit1" / "estimates.csv") !=
          file_digest(dir / "fit3" / "estimates.csv"));

    fs::remove_all(dir);
}

TEST_CASE("manifest lists every artifact with its digest") {
    const fs::path dir = make_dir("u5apc_pipeline_manifest");
    write_sim_config(dir / "sim.cfg");
    RunConfig sim = base_config(dir);
    cmd_simulate(sim);

    std::ifstream in(dir / "sim" / "manifest.json");
    REQUIRE(in.good());
    std::string manifest((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
    for (const char* name : {"survey.csv", "truth.csv", "proportions.csv", "adjacency.txt",
                             "clusters.csv", "truth_params.txt"}) {
        CHECK(manifest.find(name) != std::string::npos);
        CHECK(manifest.find(file_digest(dir / "sim" / name)) != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("failed commands leave no partial artifacts") {
    const fs::path dir = make_dir("u5apc_pipeline_failure");
    RunConfig cfg;
    cfg.survey_csv = (dir / "missing.csv").string();
    cfg.out_dir = (dir / "out").string();
    CHECK_THROWS(cmd_expand(cfg));
    CHECK(!fs::exists(dir / "out" / "cells.csv"));
    CHECK(!fs::exists(dir / "out" / "manifest.json"));
    fs::remove_all(dir);
}

TEST_CASE("cv emits a scores table shaped like the validation summary") {
    const fs::path dir = make_dir("u5apc_pipeline_cv");
    write_sim_config(dir / "sim.cfg");
    RunConfig sim = base_config(dir);
    sim.clusters_per_stratum = 5;
    cmd_simulate(sim);

    RunConfig cv;
    cv.survey_csv = (dir / "sim" / "survey.csv").string();
    cv.adjacency = (dir / "sim" / "adjacency.txt").string();
    cv.proportions = (dir / "sim" / "proportions.csv").string();
    cv.variant = "AP,APC";
    cv.draws = 100;
    cv.seed = 5;
    cv.first_period = 2009;
    cv.last_period = 2013;
    cv.holdout_period = 2013;
    cv.optimizer_budget = 60;
    cv.cv_optimizer_budget = 25;
    cv.out_dir = (dir / "cv").string();
    cmd_cv(cv);

    const CsvTable scores = read_csv(dir / "cv" / "cv_scores.csv");
    CHECK(scores.header ==
          std::vector<std::string>{"model", "mae", "mse", "is_50", "coverage_50", "is_05",
                                   "coverage_05", "regions"});
    REQUIRE(scores.rows.size() == 2);
    CHECK(scores.rows[0][0] == "AP");
    CHECK(scores.rows[1][0] == "APC");

    // report passes the table through
    RunConfig rep;
    rep.run_dir = cv.out_dir;
    rep.out_dir = (dir / "report").string();
    cmd_report(rep);
    CHECK(fs::exists(dir / "report" / "table_scores.csv"));
    fs::remove_all(dir);
}
