#pragma once

#include "data.hpp"
#include "keyvalue.hpp"
#include "spatial.hpp"
#include "temporal.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace u5apc {

// Synthetic population configuration. The truth surface follows the same
// age/period/cohort/space decomposition the estimator targets, with
// magnitudes set here or drawn once from the priors.
struct SynthConfig {
    int regions = 8;
    int urban_only_regions = 0;     // first k regions get no rural stratum
    int first_period = 2008;
    int last_period = 2013;
    int interview_year = 2014;
    int interview_month = 6;
    int truth_horizon = 5;          // extra years of truth surface past the data

    int eas_urban_min = 6, eas_urban_max = 14;
    int eas_rural_min = 10, eas_rural_max = 22;
    int ea_households_min = 80, ea_households_max = 220;
    double births_per_household_year = 0.07;

    // truth parameters (logit scale)
    std::vector<double> base_age_logit{-4.0, -6.3, -7.3, -7.8, -8.0, -8.2};
    double urban_effect = -0.25;
    double period_slope = -0.045;   // per year
    double cohort_slope = -0.01;    // per year
    double sigma_period = 0.05;
    double sigma_cohort = 0.05;
    double sigma_spatial = 0.35;
    double phi_spatial = 0.5;
    double sigma_interaction = 0.05;
    double cluster_sd = 0.1;
    bool truth_from_priors = false;  // draw the sigmas from the PC priors instead

    std::string adjacency_path;  // optional: use this graph instead of a grid

    static SynthConfig from_config(const KeyValueConfig& cfg);
};

struct SurveyDesign {
    int clusters_per_stratum = 17;
    int households_per_cluster = 25;
    bool pps = true;  // false: equal-probability cluster sampling
};

struct EnumerationArea {
    std::string id;
    int region = 0;
    bool urban = false;
    int households = 0;
    double x_km = 0.0, y_km = 0.0;
    double cluster_effect = 0.0;
    std::uint64_t child_stream = 0;  // realization seed, fixed at generation
};

struct Stratum {
    int region = 0;
    bool urban = false;
    std::vector<EnumerationArea> eas;
};

// Generated population: sampling frame plus the deterministic truth surface.
// Children are realized lazily per household so that different surveys of
// the same population observe the same underlying births.
class SyntheticPopulation {
  public:
    SyntheticPopulation(const SynthConfig& cfg, std::uint64_t seed);

    const AdjacencyGraph& graph() const { return *graph_; }
    const std::vector<Stratum>& strata() const { return strata_; }
    const SynthConfig& config() const { return cfg_; }
    MonthIndex interview() const { return interview_; }

    double true_hazard_logit(int band, int period, int cohort, int region, bool urban) const;
    // Hazard-surface U5MR via the product formula, strata mixed with the
    // true rural share.
    double true_u5mr(int period, int region) const;
    double true_stratum_u5mr(int period, int region, bool urban) const;
    double rural_share(int region) const;     // q, constant over periods
    double national_weight(int region) const; // w

    // Realizes every child of one household (deterministic).
    std::vector<BirthRecord> realize_household(const EnumerationArea& ea, int household_index,
                                               double weight) const;
    // A census: every household enumerated with weight one.
    std::vector<BirthRecord> census_records() const;

    // Truth parameter echo (after any prior draws).
    const SynthConfig& realized_truth() const { return cfg_; }

  private:
    SynthConfig cfg_;
    std::shared_ptr<AdjacencyGraph> graph_;
    std::vector<Stratum> strata_;
    MonthIndex interview_ = 0;
    MonthIndex birth_window_start_ = 0;
    AgeBandSchema schema_;

    // truth effects
    std::vector<double> period_curv_;   // over truth periods
    std::vector<double> cohort_curv_;   // over truth cohorts
    std::vector<double> spatial_;       // per region
    std::vector<double> interaction_;   // period-major, region fastest
    int truth_first_period_ = 0, truth_last_period_ = 0;
    int truth_first_cohort_ = 0, truth_last_cohort_ = 0;
};

struct SurveyDraw {
    std::vector<BirthRecord> records;
    // sampled clusters with display coordinates (jittered)
    struct Cluster {
        std::string id;
        std::string region_id;
        bool urban = false;
        double x_km = 0.0, y_km = 0.0;
        double weight = 1.0;  // household design weight within this cluster
    };
    std::vector<Cluster> clusters;
};

// Stage 1: systematic PPS (or SRS) of EAs within each stratum; stage 2:
// equal-probability households. Weights are inverse inclusion probabilities.
SurveyDraw draw_survey(const SyntheticPopulation& pop, const SurveyDesign& design,
                       std::uint64_t seed);

// Confidentiality-style displacement: urban up to 2 km, rural up to 5 km,
// and 1% of rural clusters up to 10 km.
void jitter_cluster_coordinates(std::vector<SurveyDraw::Cluster>& clusters, std::uint64_t seed);

// A rook-adjacency grid graph with `n` regions labelled R01, R02, ...
AdjacencyGraph make_grid_graph(int n);

} // namespace u5apc
