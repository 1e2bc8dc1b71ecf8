#include "aggregate.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace u5apc {

double StratumProportions::q(int period, const std::string& region) const {
    auto it = rural_share.find({period, region});
    if (it == rural_share.end()) {
        throw std::out_of_range("no rural share for period " + std::to_string(period) +
                                ", region " + region);
    }
    return it->second;
}

double StratumProportions::w(int period, const std::string& region) const {
    auto it = national_weight.find({period, region});
    if (it == national_weight.end()) {
        throw std::out_of_range("no national weight for period " + std::to_string(period) +
                                ", region " + region);
    }
    return it->second;
}

void StratumProportions::validate(double tol) const {
    for (const auto& [key, v] : rural_share) {
        if (v < 0.0 || v > 1.0) {
            throw std::invalid_argument("rural share outside [0, 1] for region " + key.second);
        }
    }
    std::map<int, double> sums;
    for (const auto& [key, v] : national_weight) sums[key.first] += v;
    for (const auto& [period, total] : sums) {
        if (std::abs(total - 1.0) > tol) {
            throw std::invalid_argument("national weights for period " +
                                        std::to_string(period) + " sum to " +
                                        std::to_string(total));
        }
    }
}

StratumProportions StratumProportions::read_csv(const std::filesystem::path& path) {
    const CsvTable table = u5apc::read_csv(path);
    const auto c_period = table.column("period");
    const auto c_region = table.column("region_id");
    const auto c_q = table.column("q_rural");
    const auto c_w = table.column("w_national");
    StratumProportions props;
    for (const auto& row : table.rows) {
        const int period = std::stoi(row[c_period]);
        props.rural_share[{period, row[c_region]}] = std::stod(row[c_q]);
        props.national_weight[{period, row[c_region]}] = std::stod(row[c_w]);
    }
    props.validate();
    return props;
}

void StratumProportions::write_csv(const std::filesystem::path& path) const {
    CsvWriter out(path);
    out.row({"period", "region_id", "q_rural", "w_national"});
    for (const auto& [key, q_val] : rural_share) {
        out.row({std::to_string(key.first), key.second, CsvWriter::num(q_val),
                 CsvWriter::num(national_weight.at(key))});
    }
    out.close();
}

double u5mr_from_hazards(const std::array<double, AgeBandSchema::kBands>& hazards,
                         const AgeBandSchema& schema) {
    double log_survival = 0.0;
    for (int i = 0; i < AgeBandSchema::kBands; ++i) {
        const double h = hazards[i];
        if (h < 0.0 || h > 1.0) throw std::invalid_argument("hazard outside [0, 1]");
        if (h >= 1.0) return 1.0;
        log_survival += schema.widths[i] * std::log1p(-h);
    }
    return -std::expm1(log_survival);
}

Eigen::VectorXd strata_aggregate(const Eigen::VectorXd& rural_draws,
                                 const Eigen::VectorXd& urban_draws, double q) {
    if (rural_draws.size() != urban_draws.size()) {
        throw std::invalid_argument("rural and urban draw counts differ");
    }
    if (q < 0.0 || q > 1.0) throw std::invalid_argument("rural proportion outside [0, 1]");
    return q * rural_draws + (1.0 - q) * urban_draws;
}

Eigen::VectorXd national_aggregate(const std::vector<Eigen::VectorXd>& region_draws,
                                   const std::vector<double>& weights, double tol) {
    if (region_draws.empty() || region_draws.size() != weights.size()) {
        throw std::invalid_argument("regions and weights disagree");
    }
    double total = 0.0;
    for (double w : weights) total += w;
    if (std::abs(total - 1.0) > tol) {
        throw std::invalid_argument("national weights sum to " + std::to_string(total));
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(region_draws.front().size());
    for (std::size_t r = 0; r < region_draws.size(); ++r) {
        if (region_draws[r].size() != out.size()) {
            throw std::invalid_argument("draw counts differ across regions");
        }
        out += weights[r] * region_draws[r];
    }
    return out;
}

double empirical_quantile(const Eigen::VectorXd& draws, double p) {
    if (draws.size() == 0) throw std::invalid_argument("no draws to summarize");
    std::vector<double> sorted(draws.data(), draws.data() + draws.size());
    std::sort(sorted.begin(), sorted.end());
    const double pos = p * (static_cast<double>(sorted.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

U5MRSummary summarize(const Eigen::VectorXd& draws, const std::array<double, 3>& quantiles) {
    if (draws.size() < 2) throw std::invalid_argument("summaries need at least 2 draws");
    U5MRSummary s;
    s.lower = 1000.0 * empirical_quantile(draws, quantiles[0]);
    s.median = 1000.0 * empirical_quantile(draws, quantiles[1]);
    s.upper = 1000.0 * empirical_quantile(draws, quantiles[2]);
    s.draws = static_cast<int>(draws.size());
    return s;
}

} // namespace u5apc
