#pragma once

#include "aggregate.hpp"
#include "data.hpp"
#include "inference.hpp"
#include "model.hpp"
#include "predict.hpp"
#include "validate.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace u5apc {

// One run's configuration, shared across subcommands (unused fields ignored).
struct RunConfig {
    std::string survey_csv;
    std::string adjacency;
    std::string proportions;
    std::string model_config;
    std::string sim_config;
    std::string run_dir;  // report input
    std::string out_dir;
    std::string variant = "APC";       // comma list allowed for cv
    std::string hyper = "eb";          // eb | ccd
    std::string cohort_collapse = "dominant";
    int draws = 1000;
    int horizon = 0;
    int first_period = 0;  // 0: from data
    int last_period = 0;
    int holdout_period = 0;
    int clusters_per_stratum = 17;
    int households_per_cluster = 25;
    int threads = 1;
    int optimizer_budget = 300;
    int cv_optimizer_budget = 48;
    std::uint64_t seed = 0;
};

// Collects artifacts for the manifest and removes partial output on failure.
class ArtifactSet {
  public:
    explicit ArtifactSet(std::filesystem::path out_dir);
    std::filesystem::path path(const std::string& name);
    void keep(const std::filesystem::path& written);      // register an artifact
    void write_manifest(const std::string& command, const RunConfig& cfg,
                        const std::map<std::string, std::string>& extra,
                        double elapsed_seconds);
    void discard_all();  // delete everything registered so far

    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
};

std::string sha256_file(const std::filesystem::path& path);
const char* version_string();

// In-memory result of a model fit, reused by the C API fit handle.
struct FitBundle {
    SurveyModel sm;
    OptimResult opt;
    GaussianApprox approx;
    PosteriorDraws draws;
    StratumProportions props;
    std::vector<RejectedRow> rejections;
    std::vector<U5MRSummary> summaries;
    double max_constraint_violation = 0.0;
    int data_first_period = 0;
    int data_last_period = 0;
    long long n_records = 0;
    long long n_cells = 0;
};

FitBundle run_fit_bundle(const RunConfig& cfg, const SurveyData& survey);
void write_estimates_csv(const std::vector<U5MRSummary>& summaries,
                         const std::filesystem::path& path);

// Subcommand bodies; each writes its artifacts plus manifest.json under
// cfg.out_dir and throws on failure (partial outputs removed).
void cmd_simulate(const RunConfig& cfg);
void cmd_expand(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
void cmd_predict(const RunConfig& cfg);
void cmd_direct(const RunConfig& cfg);
void cmd_cv(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);

} // namespace u5apc
