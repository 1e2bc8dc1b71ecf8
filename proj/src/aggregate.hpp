#pragma once

#include "temporal.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace u5apc {

// Rural share of the target population per (period, region) and region share
// of the national population per period.
struct StratumProportions {
    // keys are (period, region_id)
    std::map<std::pair<int, std::string>, double> rural_share;      // q
    std::map<std::pair<int, std::string>, double> national_weight;  // w

    double q(int period, const std::string& region) const;
    double w(int period, const std::string& region) const;
    // Checks 0 <= q <= 1 and that w sums to one per period.
    void validate(double tol = 1e-6) const;

    static StratumProportions read_csv(const std::filesystem::path& path);
    void write_csv(const std::filesystem::path& path) const;
};

struct U5MRSummary {
    std::string level;   // stratum | region | national
    int period = 0;
    std::string region;  // empty at national level
    std::string stratum; // empty unless level == stratum
    double median = 0.0; // per 1000 live births
    double lower = 0.0;
    double upper = 0.0;
    int draws = 0;
};

// 1 - prod (1 - h_i)^{z_i} computed in log space.
double u5mr_from_hazards(const std::array<double, AgeBandSchema::kBands>& hazards,
                         const AgeBandSchema& schema);

// Drawwise rural q + urban (1-q).
Eigen::VectorXd strata_aggregate(const Eigen::VectorXd& rural_draws,
                                 const Eigen::VectorXd& urban_draws, double q);

// Drawwise weighted sum across regions; weights must sum to one.
Eigen::VectorXd national_aggregate(const std::vector<Eigen::VectorXd>& region_draws,
                                   const std::vector<double>& weights, double tol = 1e-6);

// Empirical quantiles with linear interpolation, reported per 1000.
U5MRSummary summarize(const Eigen::VectorXd& draws,
                      const std::array<double, 3>& quantiles = {0.025, 0.5, 0.975});

double empirical_quantile(const Eigen::VectorXd& draws, double p);

} // namespace u5apc
