#pragma once

#include "aggregate.hpp"
#include "inference.hpp"
#include "model.hpp"

namespace u5apc {

// How a (band, period) pair maps onto real cohorts when assembling hazards:
// either the cohort contributing the most months, or a month-weighted mix.
enum class CohortCollapse { Dominant, MonthWeighted };

CohortCollapse parse_cohort_collapse(const std::string& text);

// Drawwise U5MR for one (period, region, stratum) on the probability scale.
Eigen::VectorXd stratum_u5mr_draws(const SurveyModel& sm, const Eigen::MatrixXd& draws,
                                   int period, int region_index, bool urban,
                                   CohortCollapse collapse = CohortCollapse::Dominant);

// Drawwise logit hazard for one (band, period or cohort, stratum),
// aggregated across regions with national weights on the probability scale.
Eigen::VectorXd national_hazard_logit_draws(const SurveyModel& sm,
                                            const Eigen::MatrixXd& draws, int band,
                                            int period, int cohort, bool urban,
                                            const std::vector<double>& region_weights);

} // namespace u5apc
