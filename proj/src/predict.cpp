#include "predict.hpp"

#include <cmath>
#include <stdexcept>

namespace u5apc {

CohortCollapse parse_cohort_collapse(const std::string& text) {
    if (text == "dominant") return CohortCollapse::Dominant;
    if (text == "weighted") return CohortCollapse::MonthWeighted;
    throw std::invalid_argument("unknown cohort collapse rule '" + text + "'");
}

namespace {

int clamp_cohort(const ApcLayout& layout, int cohort) {
    const int lo = static_cast<int>(layout.cohort_axis.values.front());
    const int hi = static_cast<int>(layout.cohort_axis.values.back());
    return std::min(std::max(cohort, lo), hi);
}

double eta_of(const LatentModel::Obs& row, const Eigen::MatrixXd& draws, int s) {
    double eta = 0.0;
    for (int k = 0; k < row.count; ++k) eta += row.coef[k] * draws(s, row.idx[k]);
    return eta;
}

} // namespace

Eigen::VectorXd stratum_u5mr_draws(const SurveyModel& sm, const Eigen::MatrixXd& draws,
                                   int period, int region_index, bool urban,
                                   CohortCollapse collapse) {
    const int n = static_cast<int>(draws.rows());
    const auto mix = band_cohort_mix(period, sm.schema);
    Eigen::VectorXd out(n);

    if (collapse == CohortCollapse::Dominant) {
        std::array<LatentModel::Obs, AgeBandSchema::kBands> rows;
        for (int b = 0; b < AgeBandSchema::kBands; ++b) {
            rows[b] = sm.predictor_row(b, period, clamp_cohort(sm.layout, mix[b].dominant_cohort),
                                       region_index, urban);
        }
        for (int s = 0; s < n; ++s) {
            double log_survival = 0.0;
            for (int b = 0; b < AgeBandSchema::kBands; ++b) {
                const double h = expit(eta_of(rows[b], draws, s));
                log_survival += sm.schema.widths[b] * std::log1p(-h);
            }
            out[s] = -std::expm1(log_survival);
        }
        return out;
    }

    // Month-weighted: split each band's exponent across contributing cohorts.
    std::array<std::vector<std::pair<LatentModel::Obs, double>>, AgeBandSchema::kBands> rows;
    for (int b = 0; b < AgeBandSchema::kBands; ++b) {
        for (const auto& [cohort, weight] : mix[b].weights) {
            rows[b].emplace_back(
                sm.predictor_row(b, period, clamp_cohort(sm.layout, cohort), region_index, urban),
                weight * sm.schema.widths[b]);
        }
    }
    for (int s = 0; s < n; ++s) {
        double log_survival = 0.0;
        for (int b = 0; b < AgeBandSchema::kBands; ++b) {
            for (const auto& [row, exponent] : rows[b]) {
                const double h = expit(eta_of(row, draws, s));
                log_survival += exponent * std::log1p(-h);
            }
        }
        out[s] = -std::expm1(log_survival);
    }
    return out;
}

Eigen::VectorXd national_hazard_logit_draws(const SurveyModel& sm,
                                            const Eigen::MatrixXd& draws, int band,
                                            int period, int cohort, bool urban,
                                            const std::vector<double>& region_weights) {
    const int n = static_cast<int>(draws.rows());
    const int regions = static_cast<int>(sm.region_ids.size());
    if (static_cast<int>(region_weights.size()) != regions) {
        throw std::invalid_argument("region weight count mismatch");
    }
    std::vector<LatentModel::Obs> rows(regions);
    for (int r = 0; r < regions; ++r) {
        rows[r] = sm.predictor_row(band, period, clamp_cohort(sm.layout, cohort), r, urban);
    }
    Eigen::VectorXd out(n);
    for (int s = 0; s < n; ++s) {
        double hazard = 0.0;
        for (int r = 0; r < regions; ++r) {
            hazard += region_weights[r] * expit(eta_of(rows[r], draws, s));
        }
        out[s] = logit(std::min(std::max(hazard, 1e-12), 1.0 - 1e-12));
    }
    return out;
}

} // namespace u5apc
