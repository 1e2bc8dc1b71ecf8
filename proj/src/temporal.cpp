#include "temporal.hpp"

#include "calendar.hpp"
#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace u5apc {

int AgeBandSchema::band_of_age(int age_months) const {
    if (age_months < 0 || age_months >= boundaries.back()) return -1;
    for (int b = 0; b < kBands; ++b) {
        if (age_months < boundaries[b + 1]) return b;
    }
    return -1;
}

StructuredPrecision rw2_precision(const TemporalAxis& axis) {
    const int n = axis.size();
    if (n < 3) throw std::invalid_argument("RW2 axis needs at least 3 values");
    for (int i = 1; i < n; ++i) {
        if (!(axis.values[i] > axis.values[i - 1])) {
            throw std::invalid_argument("RW2 axis values must be strictly increasing");
        }
    }
    // D rows are slope differences; W weights by the inverse local window so
    // the quadratic form approximates the integrated squared second
    // derivative and the equal-spacing case gives the integer matrix.
    Eigen::SparseMatrix<double> d(n - 2, n);
    std::vector<Triplet> dtrips;
    Eigen::VectorXd w(n - 2);
    for (int i = 1; i + 1 < n; ++i) {
        const double h0 = axis.values[i] - axis.values[i - 1];
        const double h1 = axis.values[i + 1] - axis.values[i];
        dtrips.emplace_back(i - 1, i - 1, 1.0 / h0);
        dtrips.emplace_back(i - 1, i, -(1.0 / h0 + 1.0 / h1));
        dtrips.emplace_back(i - 1, i + 1, 1.0 / h1);
        w[i - 1] = 2.0 / (h0 + h1);
    }
    d.setFromTriplets(dtrips.begin(), dtrips.end());
    StructuredPrecision q;
    q.matrix = SpMat(d.transpose() * w.asDiagonal() * d);
    q.matrix.makeCompressed();
    q.rank_deficiency = 2;
    q.constraints = curvature_constraints(axis);
    q.constraint_values = Eigen::VectorXd::Zero(2);
    return q;
}

Eigen::MatrixXd curvature_constraints(const TemporalAxis& axis) {
    const int n = axis.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, n);
    double mean = 0.0;
    for (double v : axis.values) mean += v;
    mean /= static_cast<double>(n);
    for (int i = 0; i < n; ++i) {
        a(0, i) = 1.0;
        a(1, i) = axis.values[i] - mean;
    }
    return a;
}

Variant parse_variant(const std::string& text) {
    if (text == "AP" || text == "ap") return Variant::AP;
    if (text == "AC" || text == "ac") return Variant::AC;
    if (text == "APC" || text == "apc") return Variant::APC;
    throw std::invalid_argument("unknown model variant '" + text + "' (expected AP, AC or APC)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::AP: return "AP";
        case Variant::AC: return "AC";
        case Variant::APC: return "APC";
    }
    return "?";
}

double ApcLayout::t2_of_period(int year) const {
    return (static_cast<double>(year) - t2_center) / t2_range;
}

double ApcLayout::t2_of_cohort(int year) const {
    return (static_cast<double>(year) - t2_center) / t2_range;
}

namespace {

int axis_index(const TemporalAxis& axis, double value, const char* what) {
    for (int i = 0; i < axis.size(); ++i) {
        if (std::abs(axis.values[i] - value) < 1e-9) return i;
    }
    throw std::out_of_range(std::string(what) + " value not on axis");
}

} // namespace

int ApcLayout::age_index(double mid) const { return axis_index(age_axis, mid, "age"); }

int ApcLayout::period_index(int year) const {
    return axis_index(period_axis, static_cast<double>(year), "period");
}

int ApcLayout::cohort_index(int year) const {
    return axis_index(cohort_axis, static_cast<double>(year), "cohort");
}

ApcLayout build_apc_layout(const std::vector<CountCell>& cells, Variant variant,
                           const AgeBandSchema& schema, int horizon) {
    if (cells.empty()) throw std::invalid_argument("cannot build a layout from zero cells");
    ApcLayout layout;
    layout.variant = variant;

    layout.age_axis.kind = AxisKind::Age;
    layout.age_axis.values.assign(schema.midpoints.begin(), schema.midpoints.end());

    int p_min = cells.front().period;
    int p_max = cells.front().period;
    int c_min = cells.front().cohort;
    int c_max = cells.front().cohort;
    for (const auto& cell : cells) {
        p_min = std::min(p_min, cell.period);
        p_max = std::max(p_max, cell.period);
        c_min = std::min(c_min, cell.cohort);
        c_max = std::max(c_max, cell.cohort);
    }
    const int last_data_period = p_max;
    if (horizon > 0) {
        layout.first_prediction_period = last_data_period + 1;
        p_max = last_data_period + horizon;
        c_max = std::max(c_max, p_max);
    }
    layout.period_axis.kind = AxisKind::Period;
    for (int y = p_min; y <= p_max; ++y) {
        layout.period_axis.values.push_back(static_cast<double>(y));
    }
    layout.cohort_axis.kind = AxisKind::Cohort;
    for (int y = c_min; y <= c_max; ++y) {
        layout.cohort_axis.values.push_back(static_cast<double>(y));
    }

    const auto set_scale = [](double lo, double hi, double& center, double& range) {
        center = 0.5 * (lo + hi);
        range = std::max(hi - lo, 1.0);
    };
    set_scale(layout.age_axis.values.front(), layout.age_axis.values.back(),
              layout.age_center, layout.age_range);
    if (variant == Variant::AC) {
        // Slope covariate runs over estimation cohorts.
        set_scale(static_cast<double>(c_min),
                  static_cast<double>(std::min(c_max, last_data_period)),
                  layout.t2_center, layout.t2_range);
    } else {
        set_scale(static_cast<double>(p_min), static_cast<double>(last_data_period),
                  layout.t2_center, layout.t2_range);
    }
    return layout;
}

std::vector<PredictionCell> prediction_grid(int last_period, int horizon,
                                            const AgeBandSchema& schema) {
    std::vector<PredictionCell> grid;
    if (horizon < 0) throw std::invalid_argument("horizon must be non-negative");
    if (horizon == 0) return grid;
    std::map<std::tuple<int, int, int>, int> counts;
    const MonthIndex first = make_month(last_period + 1, 1);
    const MonthIndex last = make_month(last_period + horizon, 12);
    for (MonthIndex m = first; m <= last; ++m) {
        for (int a = 0; a < schema.boundaries.back(); ++a) {
            const int band = schema.band_of_age(a);
            counts[{year_of(m), band, year_of(m - a)}] += 1;
        }
    }
    for (const auto& [key, months] : counts) {
        grid.push_back({std::get<1>(key), std::get<0>(key), std::get<2>(key), months});
    }
    return grid;
}

std::vector<PredictionCell> year_cohort_cells(int period, const AgeBandSchema& schema) {
    std::map<std::pair<int, int>, int> counts;
    for (MonthIndex m = make_month(period, 1); m <= make_month(period, 12); ++m) {
        for (int a = 0; a < schema.boundaries.back(); ++a) {
            counts[{schema.band_of_age(a), year_of(m - a)}] += 1;
        }
    }
    std::vector<PredictionCell> cells;
    for (const auto& [key, months] : counts) {
        cells.push_back({key.first, period, key.second, months});
    }
    return cells;
}

std::array<BandCohortMix, AgeBandSchema::kBands> band_cohort_mix(int period,
                                                                 const AgeBandSchema& schema) {
    std::array<BandCohortMix, AgeBandSchema::kBands> mix{};
    std::array<int, AgeBandSchema::kBands> totals{};
    for (const auto& cell : year_cohort_cells(period, schema)) {
        mix[cell.age_band].weights[cell.cohort] += cell.months;
        totals[cell.age_band] += cell.months;
    }
    for (int b = 0; b < AgeBandSchema::kBands; ++b) {
        double best = -1.0;
        for (auto& [cohort, w] : mix[b].weights) {
            w /= static_cast<double>(totals[b]);
            if (w >= best) {  // ties resolve to the later cohort
                best = w;
                mix[b].dominant_cohort = cohort;
            }
        }
    }
    return mix;
}

} // namespace u5apc
