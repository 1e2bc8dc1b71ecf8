#pragma once

#include "data.hpp"
#include "temporal.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace u5apc {

// Design-weighted logit-U5MR point estimate with delete-one-cluster
// jackknife variance. Undefined (flagged) when no band-complete exposure
// exists or no deaths were observed.
struct DirectEstimate {
    std::string region;  // "" for the national estimate
    int period = 0;
    double logit_u5mr = 0.0;
    double variance = 0.0;
    int n_clusters = 0;
    bool defined = false;
    std::string reason;  // why undefined, when applicable
};

// Weighted person-month tallies per (region, period, cluster, band), the
// working form for design-based estimation.
class WeightedTallies {
  public:
    WeightedTallies(const std::vector<BirthRecord>& records, const AgeBandSchema& schema);

    // Direct estimate for one region-period; empty region pools nationally.
    DirectEstimate estimate(const std::string& region, int period) const;

    // Weighted per-band hazard ratios for one region-period; NaN for bands
    // without exposure.
    std::array<double, AgeBandSchema::kBands> band_hazards(const std::string& region,
                                                           int period) const;

    std::vector<int> periods() const;
    std::vector<std::string> regions() const;

  private:
    struct ClusterCell {
        std::string cluster;
        bool urban = false;
        std::array<double, AgeBandSchema::kBands> w_deaths{};
        std::array<double, AgeBandSchema::kBands> w_exposure{};
    };
    // (region, period) -> clusters
    std::map<std::pair<std::string, int>, std::vector<ClusterCell>> cells_;
    AgeBandSchema schema_;
};

std::vector<DirectEstimate> direct_estimates(const std::vector<BirthRecord>& records,
                                             const AgeBandSchema& schema,
                                             int first_period, int last_period,
                                             bool include_national = true);

void write_direct_csv(const std::vector<DirectEstimate>& estimates,
                      const std::filesystem::path& path);
std::vector<DirectEstimate> read_direct_csv(const std::filesystem::path& path);

// Fay-Herriot style smoothing of a direct-estimate series for one area:
// latent intercept + RW2 over periods + independent noise, observation
// variances fixed at the design variances. Extrapolates `horizon` periods.
struct SmoothedPoint {
    int period = 0;
    double logit_median = 0.0;
    double logit_lower = 0.0;
    double logit_upper = 0.0;
    bool extrapolated = false;
};

std::vector<SmoothedPoint> fay_herriot_smooth(const std::vector<DirectEstimate>& series,
                                              int horizon, int n_draws, std::uint64_t seed);

} // namespace u5apc
