#pragma once

#include "direct.hpp"
#include "model.hpp"
#include "predict.hpp"
#include "spatial.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace u5apc {

// One held-out region-period with its model sampling distribution and direct
// benchmark.
struct CVPrediction {
    std::string region;
    int period = 0;
    Eigen::VectorXd raw_draws;    // logit U5MR draws from the refit
    Eigen::VectorXd noisy_draws;  // with Normal(0, V_des) sampling noise
    double direct_logit = 0.0;
    double direct_variance = 0.0;
};

struct CVScores {
    double mae = 0.0;
    double mse = 0.0;
    double is50 = 0.0;
    double coverage50 = 0.0;
    double is05 = 0.0;
    double coverage05 = 0.0;
    int regions = 0;
};

struct LoroCvOptions {
    int holdout_period = 0;
    int draws = 1000;
    std::uint64_t seed = 0;
    int optimizer_budget = 60;     // per-refit Nelder-Mead evaluations
    double optimizer_step = 0.15;  // restart simplex radius around warm theta
    CohortCollapse collapse = CohortCollapse::Dominant;
    int threads = 1;               // refits are independent
};

struct LoroCvResult {
    std::vector<CVPrediction> predictions;
    std::vector<std::string> skipped;  // region: reason
};

// Interval score at level alpha: (u-l) + (2/alpha) penalties outside.
double interval_score(double lower, double upper, double y, double alpha);

// MAE/MSE over regions and draws against the direct benchmarks, interval
// score and empirical coverage at alpha in {0.5, 0.05}.
CVScores score_cv(const std::vector<CVPrediction>& predictions);

// Leave-one-region-out holdout of one period: removes each region's
// holdout-period cells, refits warm-started from `theta_full`, predicts the
// held-out region-period, and adds design noise to each draw. Regions whose
// direct estimate is undefined are skipped with a diagnostic.
LoroCvResult loro_cv(const std::vector<CountCell>& cells, const AdjacencyGraph& graph,
                     const AgeBandSchema& schema, Variant variant, const ModelPriors& priors,
                     const StratumProportions& props,
                     const std::vector<DirectEstimate>& benchmarks,
                     const Eigen::VectorXd& theta_full, const LoroCvOptions& opts);

void write_scores_csv(const std::vector<std::pair<std::string, CVScores>>& model_scores,
                      const std::filesystem::path& path);

} // namespace u5apc
