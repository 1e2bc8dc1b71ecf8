#pragma once

#include "precision.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace u5apc {

enum class AxisKind { Age, Period, Cohort };

// Ordered axis values: age uses band midpoints in months, period and cohort
// use calendar years.
struct TemporalAxis {
    AxisKind kind = AxisKind::Period;
    std::vector<double> values;  // strictly increasing

    int size() const { return static_cast<int>(values.size()); }
};

// The six discrete hazard age bands in months.
struct AgeBandSchema {
    static constexpr int kBands = 6;
    // [lower, upper) month boundaries.
    std::array<int, kBands + 1> boundaries{0, 1, 12, 24, 36, 48, 60};
    std::array<double, kBands> midpoints{0.0, 6.0, 17.5, 29.5, 41.5, 52.5};
    std::array<int, kBands> widths{1, 11, 12, 12, 12, 12};

    // Band containing age-month a (0..59); -1 for ages outside [0, 60).
    int band_of_age(int age_months) const;
};

// RW2 structure on a (possibly unevenly spaced) axis: Q = D^T W D with D the
// second-order divided-difference rows scaled so the equal-spacing case
// reduces to the integer second-difference matrix, and W the inverse of the
// local window widths. Null space spans (1, values); rank deficiency 2.
StructuredPrecision rw2_precision(const TemporalAxis& axis);

// Two rows per curvature block: sum-to-zero and orthogonality to the centered
// axis values.
Eigen::MatrixXd curvature_constraints(const TemporalAxis& axis);

enum class Variant { AP, AC, APC };

Variant parse_variant(const std::string& text);
std::string variant_name(Variant v);

// Forward declaration; defined in data.hpp.
struct CountCell;

// Identifiable APC design layout: which slope covariates each cell carries
// and how cells map into the curvature blocks. Slope covariates are centered
// and scaled to unit range over the estimation axis; prediction periods and
// cohorts extend past the fitted range on the same affine scale.
struct ApcLayout {
    Variant variant = Variant::APC;
    TemporalAxis age_axis;      // band midpoints present in the data
    TemporalAxis period_axis;   // consecutive years (estimation + prediction)
    TemporalAxis cohort_axis;   // consecutive years (estimation + prediction)
    int first_prediction_period = 0;  // 0 when no prediction extension

    double age_center = 0.0, age_range = 1.0;
    double t2_center = 0.0, t2_range = 1.0;  // period (AP/APC) or cohort (AC)

    bool has_period_curvature() const { return variant != Variant::AC; }
    bool has_cohort_curvature() const { return variant != Variant::AP; }

    double t1_of(double age_mid) const { return (age_mid - age_center) / age_range; }
    double t2_of_period(int year) const;  // AP/APC slope covariate
    double t2_of_cohort(int year) const;  // AC slope covariate

    int age_index(double mid) const;
    int period_index(int year) const;
    int cohort_index(int year) const;
};

// Builds the layout from data cells; when horizon > 0 the period and cohort
// axes are extended to cover prediction years.
ApcLayout build_apc_layout(const std::vector<CountCell>& cells, Variant variant,
                           const AgeBandSchema& schema, int horizon = 0);

// One aggregated prediction cell: months counts how many (calendar month,
// age month) pairs fall in this (band, period, cohort) combination.
struct PredictionCell {
    int age_band = 0;
    int period = 0;  // calendar year
    int cohort = 0;  // birth year
    int months = 0;
};

// Month-by-month enumeration of future periods minus monthly ages, grouped to
// yearly (band, period, cohort) cells exactly as real cohorts would appear.
std::vector<PredictionCell> prediction_grid(int last_period, int horizon,
                                            const AgeBandSchema& schema);

// Same enumeration for a single calendar year.
std::vector<PredictionCell> year_cohort_cells(int period, const AgeBandSchema& schema);

// For each band of `period`, the cohort contributing the most months (ties to
// the later cohort) plus the per-cohort month weights.
struct BandCohortMix {
    int dominant_cohort = 0;
    std::map<int, double> weights;  // cohort -> share of months in the band
};
std::array<BandCohortMix, AgeBandSchema::kBands> band_cohort_mix(
    int period, const AgeBandSchema& schema);

} // namespace u5apc
