#include "direct.hpp"

#include "aggregate.hpp"
#include "csv.hpp"
#include "inference.hpp"
#include "likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <tuple>

namespace u5apc {

WeightedTallies::WeightedTallies(const std::vector<BirthRecord>& records,
                                 const AgeBandSchema& schema)
    : schema_(schema) {
    // (region, period, cluster) -> slot in cells_
    std::map<std::tuple<std::string, int, std::string>, std::size_t> slots;
    for (const auto& rec : records) {
        const auto months = expand_birth_history(rec, schema);
        for (const auto& pm : months) {
            auto& clusters = cells_[{rec.region_id, pm.period}];
            auto [it, inserted] =
                slots.try_emplace({rec.region_id, pm.period, rec.cluster_id}, clusters.size());
            if (inserted) {
                clusters.push_back({rec.cluster_id, rec.is_urban, {}, {}});
            }
            auto& cell = clusters[it->second];
            cell.w_deaths[pm.age_band] += rec.weight * pm.died;
            cell.w_exposure[pm.age_band] += rec.weight * pm.months_at_risk;
        }
    }
}

namespace {

struct Totals {
    std::array<double, AgeBandSchema::kBands> deaths{};
    std::array<double, AgeBandSchema::kBands> exposure{};
};

// Logit U5MR from weighted band ratios; unset when some band lacks exposure
// or no deaths were seen.
std::optional<double> logit_from_totals(const Totals& t, const AgeBandSchema& schema,
                                        std::string* reason = nullptr) {
    std::array<double, AgeBandSchema::kBands> hazards{};
    double death_total = 0.0;
    for (int b = 0; b < AgeBandSchema::kBands; ++b) {
        if (t.exposure[b] <= 0.0) {
            if (reason) *reason = "no exposure in band " + std::to_string(b);
            return std::nullopt;
        }
        hazards[b] = std::min(t.deaths[b] / t.exposure[b], 1.0);
        death_total += t.deaths[b];
    }
    if (death_total <= 0.0) {
        if (reason) *reason = "no deaths observed";
        return std::nullopt;
    }
    const double rate = u5mr_from_hazards(hazards, schema);
    if (rate <= 0.0 || rate >= 1.0) {
        if (reason) *reason = "degenerate rate";
        return std::nullopt;
    }
    return logit(rate);
}

} // namespace

DirectEstimate WeightedTallies::estimate(const std::string& region, int period) const {
    DirectEstimate est;
    est.region = region;
    est.period = period;

    // Gather contributing clusters, keyed by stratum for the jackknife.
    std::vector<const ClusterCell*> clusters;
    for (const auto& [key, cluster_list] : cells_) {
        if (key.second != period) continue;
        if (!region.empty() && key.first != region) continue;
        for (const auto& cell : cluster_list) clusters.push_back(&cell);
    }
    if (clusters.empty()) {
        est.reason = "no exposure";
        return est;
    }
    est.n_clusters = static_cast<int>(clusters.size());

    Totals full;
    for (const auto* c : clusters) {
        for (int b = 0; b < AgeBandSchema::kBands; ++b) {
            full.deaths[b] += c->w_deaths[b];
            full.exposure[b] += c->w_exposure[b];
        }
    }
    const auto point = logit_from_totals(full, schema_, &est.reason);
    if (!point) return est;
    est.logit_u5mr = *point;
    est.defined = true;

    std::array<double, AgeBandSchema::kBands> full_hazards{};
    for (int b = 0; b < AgeBandSchema::kBands; ++b) {
        full_hazards[b] = std::min(full.deaths[b] / full.exposure[b], 1.0);
    }

    // Delete-one-cluster jackknife within strata (urban/rural). Replicates
    // are formed on the probability scale, where boundary replicates (all
    // deaths removed) stay finite, and the variance is carried to the logit
    // scale by the delta method at the full estimate. A replicate band left
    // without exposure inherits the full-sample hazard.
    std::map<bool, std::vector<const ClusterCell*>> strata;
    for (const auto* c : clusters) strata[c->urban].push_back(c);
    double variance = 0.0;
    for (const auto& [urban, members] : strata) {
        const int nh = static_cast<int>(members.size());
        if (nh < 2) continue;
        const double rescale = static_cast<double>(nh) / (nh - 1.0);
        std::vector<double> reps;
        reps.reserve(members.size());
        for (const auto* removed : members) {
            Totals t;
            for (const auto* c : clusters) {
                if (c == removed) continue;
                const double f = (c->urban == urban) ? rescale : 1.0;
                for (int b = 0; b < AgeBandSchema::kBands; ++b) {
                    t.deaths[b] += f * c->w_deaths[b];
                    t.exposure[b] += f * c->w_exposure[b];
                }
            }
            std::array<double, AgeBandSchema::kBands> hazards{};
            for (int b = 0; b < AgeBandSchema::kBands; ++b) {
                hazards[b] = t.exposure[b] > 0.0
                                 ? std::min(t.deaths[b] / t.exposure[b], 1.0)
                                 : full_hazards[b];
            }
            reps.push_back(u5mr_from_hazards(hazards, schema_));
        }
        double mean = 0.0;
        for (double r : reps) mean += r;
        mean /= static_cast<double>(reps.size());
        double ss = 0.0;
        for (double r : reps) ss += (r - mean) * (r - mean);
        const double m = static_cast<double>(reps.size());
        variance += (m - 1.0) / m * ss;
    }
    const double p = expit(est.logit_u5mr);
    est.variance = variance / (p * p * (1.0 - p) * (1.0 - p));
    return est;
}

std::array<double, AgeBandSchema::kBands> WeightedTallies::band_hazards(
    const std::string& region, int period) const {
    Totals totals;
    for (const auto& [key, cluster_list] : cells_) {
        if (key.second != period) continue;
        if (!region.empty() && key.first != region) continue;
        for (const auto& cell : cluster_list) {
            for (int b = 0; b < AgeBandSchema::kBands; ++b) {
                totals.deaths[b] += cell.w_deaths[b];
                totals.exposure[b] += cell.w_exposure[b];
            }
        }
    }
    std::array<double, AgeBandSchema::kBands> hazards{};
    for (int b = 0; b < AgeBandSchema::kBands; ++b) {
        hazards[b] = totals.exposure[b] > 0.0
                         ? totals.deaths[b] / totals.exposure[b]
                         : std::numeric_limits<double>::quiet_NaN();
    }
    return hazards;
}

std::vector<int> WeightedTallies::periods() const {
    std::set<int> periods;
    for (const auto& [key, cluster_list] : cells_) periods.insert(key.second);
    return {periods.begin(), periods.end()};
}

std::vector<std::string> WeightedTallies::regions() const {
    std::set<std::string> regions;
    for (const auto& [key, cluster_list] : cells_) regions.insert(key.first);
    return {regions.begin(), regions.end()};
}

std::vector<DirectEstimate> direct_estimates(const std::vector<BirthRecord>& records,
                                             const AgeBandSchema& schema, int first_period,
                                             int last_period, bool include_national) {
    const WeightedTallies tallies(records, schema);
    std::vector<DirectEstimate> out;
    for (const auto& region : tallies.regions()) {
        for (int p = first_period; p <= last_period; ++p) {
            out.push_back(tallies.estimate(region, p));
        }
    }
    if (include_national) {
        for (int p = first_period; p <= last_period; ++p) {
            out.push_back(tallies.estimate("", p));
        }
    }
    return out;
}

void write_direct_csv(const std::vector<DirectEstimate>& estimates,
                      const std::filesystem::path& path) {
    CsvWriter out(path);
    out.row({"region", "period", "logit_u5mr", "variance", "n_clusters", "defined"});
    for (const auto& e : estimates) {
        out.row({e.region.empty() ? "NATIONAL" : e.region, std::to_string(e.period),
                 e.defined ? CsvWriter::num(e.logit_u5mr) : "NA",
                 e.defined ? CsvWriter::num(e.variance) : "NA", std::to_string(e.n_clusters),
                 e.defined ? "1" : "0"});
    }
    out.close();
}

std::vector<DirectEstimate> read_direct_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const auto c_region = table.column("region");
    const auto c_period = table.column("period");
    const auto c_logit = table.column("logit_u5mr");
    const auto c_var = table.column("variance");
    const auto c_n = table.column("n_clusters");
    const auto c_def = table.column("defined");
    std::vector<DirectEstimate> out;
    for (const auto& row : table.rows) {
        DirectEstimate e;
        e.region = row[c_region] == "NATIONAL" ? "" : row[c_region];
        e.period = std::stoi(row[c_period]);
        e.defined = row[c_def] == "1";
        if (e.defined) {
            e.logit_u5mr = std::stod(row[c_logit]);
            e.variance = std::stod(row[c_var]);
        }
        e.n_clusters = std::stoi(row[c_n]);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<SmoothedPoint> fay_herriot_smooth(const std::vector<DirectEstimate>& series,
                                              int horizon, int n_draws, std::uint64_t seed) {
    std::vector<const DirectEstimate*> defined;
    for (const auto& e : series) {
        if (e.defined) defined.push_back(&e);
    }
    if (defined.size() < 3) {
        throw std::invalid_argument("Fay-Herriot smoothing needs at least 3 defined periods");
    }
    int p_min = defined.front()->period;
    int p_max = defined.front()->period;
    for (const auto* e : defined) {
        p_min = std::min(p_min, e->period);
        p_max = std::max(p_max, e->period);
    }
    TemporalAxis axis;
    axis.kind = AxisKind::Period;
    for (int p = p_min; p <= p_max + horizon; ++p) {
        axis.values.push_back(static_cast<double>(p));
    }
    const int n_periods = axis.size();

    auto model = std::make_shared<LatentModel>();
    const int off_intercept = model->add_block("intercept", 1);
    const int off_trend = model->add_block("trend", n_periods);
    const int off_noise = model->add_block("noise", n_periods);

    const PcPrecisionPrior pc(PcPriorSpec{1.0, 0.01});
    const int h_trend = model->add_hyper(
        {"log_tau_trend", [pc](double x) { return pc.log_density_log_tau(x); }, std::log(10.0)});
    const int h_noise = model->add_hyper(
        {"log_tau_noise", [pc](double x) { return pc.log_density_log_tau(x); }, std::log(50.0)});

    model->add_diagonal_term(off_intercept, 1, 1.0 / 1000.0);
    const StructuredPrecision rw2 = scale_structure(rw2_precision(axis));
    model->add_precision_term(rw2.matrix, off_trend,
                              [h_trend](const Eigen::VectorXd& t) { return std::exp(t[h_trend]); });
    model->add_diagonal_term(off_trend, n_periods, LatentModel::kIntrinsicJitter);
    {
        SpMat eye(n_periods, n_periods);
        eye.setIdentity();
        model->add_precision_term(eye, off_noise, [h_noise](const Eigen::VectorXd& t) {
            return std::exp(t[h_noise]);
        });
    }
    // Sum-to-zero only: the linear direction stays free so the smoother can
    // carry a trend alongside the intercept.
    Eigen::MatrixXd sum_row = Eigen::MatrixXd::Ones(1, n_periods);
    model->add_constraints(sum_row, off_trend, Eigen::VectorXd::Zero(1));

    for (const auto* e : defined) {
        LatentModel::Obs obs;
        obs.y = e->logit_u5mr;
        obs.n_or_var = std::max(e->variance, 1e-8);
        obs.mult = 1.0;
        obs.count = 0;
        obs.idx[obs.count] = off_intercept;
        obs.coef[obs.count++] = 1.0;
        obs.idx[obs.count] = off_trend + (e->period - p_min);
        obs.coef[obs.count++] = 1.0;
        obs.idx[obs.count] = off_noise + (e->period - p_min);
        obs.coef[obs.count++] = 1.0;
        model->add_observation(obs);
    }
    model->obs_kind = LatentModel::ObsKind::Gaussian;
    model->finalize();

    InferenceEngine engine(model);
    OptimOptions opts;
    opts.max_evals = 200;
    const OptimResult opt = engine.optimize_hyper(model->initial_theta(), opts);
    GaussianApprox approx;
    engine.log_posterior_hyper(opt.theta, &approx);
    const PosteriorDraws draws = engine.sample_latent(approx, n_draws, seed);

    std::vector<SmoothedPoint> out;
    for (int p = p_min; p <= p_max + horizon; ++p) {
        Eigen::VectorXd eta(n_draws);
        for (int s = 0; s < n_draws; ++s) {
            eta[s] = draws.draws(s, off_intercept) + draws.draws(s, off_trend + (p - p_min)) +
                     draws.draws(s, off_noise + (p - p_min));
        }
        SmoothedPoint pt;
        pt.period = p;
        pt.logit_median = empirical_quantile(eta, 0.5);
        pt.logit_lower = empirical_quantile(eta, 0.025);
        pt.logit_upper = empirical_quantile(eta, 0.975);
        pt.extrapolated = p > p_max;
        out.push_back(pt);
    }
    return out;
}

} // namespace u5apc
