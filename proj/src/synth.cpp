#include "synth.hpp"

#include "aggregate.hpp"
#include "likelihood.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace u5apc {

SynthConfig SynthConfig::from_config(const KeyValueConfig& cfg) {
    SynthConfig c;
    c.regions = cfg.get_int("regions", c.regions);
    c.urban_only_regions = cfg.get_int("urban_only_regions", c.urban_only_regions);
    c.first_period = cfg.get_int("first_period", c.first_period);
    c.last_period = cfg.get_int("last_period", c.last_period);
    c.interview_year = cfg.get_int("interview_year", c.interview_year);
    c.interview_month = cfg.get_int("interview_month", c.interview_month);
    c.truth_horizon = cfg.get_int("truth_horizon", c.truth_horizon);
    c.eas_urban_min = cfg.get_int("eas_urban_min", c.eas_urban_min);
    c.eas_urban_max = cfg.get_int("eas_urban_max", c.eas_urban_max);
    c.eas_rural_min = cfg.get_int("eas_rural_min", c.eas_rural_min);
    c.eas_rural_max = cfg.get_int("eas_rural_max", c.eas_rural_max);
    c.ea_households_min = cfg.get_int("ea_households_min", c.ea_households_min);
    c.ea_households_max = cfg.get_int("ea_households_max", c.ea_households_max);
    c.births_per_household_year =
        cfg.get_double("births_per_household_year", c.births_per_household_year);
    if (cfg.has("base_age_logit")) {
        c.base_age_logit = cfg.get_doubles("base_age_logit");
        if (c.base_age_logit.size() != AgeBandSchema::kBands) {
            throw std::invalid_argument("base_age_logit needs exactly 6 values");
        }
    }
    c.urban_effect = cfg.get_double("urban_effect", c.urban_effect);
    c.period_slope = cfg.get_double("period_slope", c.period_slope);
    c.cohort_slope = cfg.get_double("cohort_slope", c.cohort_slope);
    c.sigma_period = cfg.get_double("sigma_period", c.sigma_period);
    c.sigma_cohort = cfg.get_double("sigma_cohort", c.sigma_cohort);
    c.sigma_spatial = cfg.get_double("sigma_spatial", c.sigma_spatial);
    c.phi_spatial = cfg.get_double("phi_spatial", c.phi_spatial);
    c.sigma_interaction = cfg.get_double("sigma_interaction", c.sigma_interaction);
    c.cluster_sd = cfg.get_double("cluster_sd", c.cluster_sd);
    c.truth_from_priors = cfg.get_int("truth_from_priors", 0) != 0;
    c.adjacency_path = cfg.get_or("adjacency", "");
    if (c.regions < 1) throw std::invalid_argument("need at least one region");
    if (c.last_period < c.first_period + 2) {
        throw std::invalid_argument("need at least 3 periods");
    }
    if (c.interview_year <= c.last_period) {
        throw std::invalid_argument("interview must fall after the last period");
    }
    return c;
}

AdjacencyGraph make_grid_graph(int n) {
    if (n < 1) throw std::invalid_argument("need at least one region");
    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
    std::vector<std::string> ids(n);
    std::vector<std::vector<int>> neighbors(n);
    char buf[16];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "R%02d", i + 1);
        ids[i] = buf;
        const int row = i / cols;
        const int col = i % cols;
        const auto maybe = [&](int r, int c) {
            const int j = r * cols + c;
            if (r >= 0 && c >= 0 && c < cols && j >= 0 && j < n) neighbors[i].push_back(j);
        };
        maybe(row - 1, col);
        maybe(row + 1, col);
        maybe(row, col - 1);
        maybe(row, col + 1);
    }
    return AdjacencyGraph(std::move(ids), std::move(neighbors));
}

namespace {

// Zero-mean draw from the scaled structure's constrained generalized
// inverse, multiplied by sigma.
std::vector<double> structured_draw(const SpMat& scaled, double sigma, Rng& rng) {
    Eigen::MatrixXd dense(scaled);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dense);
    const double cut = kNullEigenTol * std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(scaled.rows());
    for (int k = 0; k < eig.eigenvalues().size(); ++k) {
        if (eig.eigenvalues()[k] >= cut) {
            out += eig.eigenvectors().col(k) * (rng.normal() / std::sqrt(eig.eigenvalues()[k]));
        }
    }
    std::vector<double> v(out.size());
    for (int i = 0; i < out.size(); ++i) v[i] = sigma * out[i];
    return v;
}

int poisson_draw(double mean, Rng& rng) {
    // Knuth's method; means here are small.
    const double limit = std::exp(-mean);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= rng.uniform();
    } while (p > limit);
    return k - 1;
}

} // namespace

SyntheticPopulation::SyntheticPopulation(const SynthConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
    if (!cfg.adjacency_path.empty()) {
        graph_ = std::make_shared<AdjacencyGraph>(
            AdjacencyGraph::from_adjacency_file(cfg.adjacency_path));
        if (graph_->size() != cfg.regions) {
            throw std::invalid_argument("adjacency file region count differs from config");
        }
    } else {
        graph_ = std::make_shared<AdjacencyGraph>(make_grid_graph(cfg.regions));
    }
    interview_ = make_month(cfg.interview_year, cfg.interview_month);
    // Retrospective birth histories: children born up to five years before
    // the first period still contribute person-months inside it.
    birth_window_start_ = make_month(cfg.first_period - 5, 1);

    Rng rng(Rng::derive(seed, 0));

    if (cfg_.truth_from_priors) {
        // sigma ~ Exp(lambda) per the PC tail statements used by the fit.
        const double lam_curv = -std::log(0.01) / 1.0;
        const double lam_mix = -std::log(2.0 / 3.0) / 0.5;
        cfg_.sigma_period = rng.exponential(lam_curv);
        cfg_.sigma_cohort = rng.exponential(lam_curv);
        cfg_.sigma_spatial = rng.exponential(lam_curv);
        cfg_.sigma_interaction = rng.exponential(lam_mix);
        cfg_.phi_spatial = rng.uniform();
    }

    // Truth axes: periods must reach any month a child can live through.
    truth_first_period_ = cfg.first_period;
    truth_last_period_ = std::max(cfg.interview_year, cfg.last_period + cfg.truth_horizon);
    truth_first_cohort_ = cfg.first_period - 5;
    truth_last_cohort_ = truth_last_period_;

    TemporalAxis period_axis{AxisKind::Period, {}};
    for (int p = truth_first_period_; p <= truth_last_period_; ++p) {
        period_axis.values.push_back(static_cast<double>(p));
    }
    TemporalAxis cohort_axis{AxisKind::Cohort, {}};
    for (int c = truth_first_cohort_; c <= truth_last_cohort_; ++c) {
        cohort_axis.values.push_back(static_cast<double>(c));
    }
    const StructuredPrecision period_rw2 = scale_structure(rw2_precision(period_axis));
    const StructuredPrecision cohort_rw2 = scale_structure(rw2_precision(cohort_axis));
    period_curv_ = structured_draw(period_rw2.matrix, cfg_.sigma_period, rng);
    cohort_curv_ = structured_draw(cohort_rw2.matrix, cfg_.sigma_cohort, rng);

    const StructuredPrecision icar_scaled = scale_icar(icar_precision(*graph_));
    Bym2Block bym2(icar_scaled);
    const Eigen::VectorXd spatial =
        bym2.simulate_total(1.0 / (cfg_.sigma_spatial * cfg_.sigma_spatial), cfg_.phi_spatial,
                            rng);
    spatial_.assign(spatial.data(), spatial.data() + spatial.size());

    SpMat kron(period_axis.size() * graph_->size(), period_axis.size() * graph_->size());
    {
        std::vector<Triplet> trips;
        const int s = graph_->size();
        for (int po = 0; po < period_rw2.matrix.outerSize(); ++po) {
            for (SpMat::InnerIterator pit(period_rw2.matrix, po); pit; ++pit) {
                for (int so = 0; so < icar_scaled.matrix.outerSize(); ++so) {
                    for (SpMat::InnerIterator sit(icar_scaled.matrix, so); sit; ++sit) {
                        trips.emplace_back(
                            static_cast<int>(pit.row()) * s + static_cast<int>(sit.row()),
                            static_cast<int>(pit.col()) * s + static_cast<int>(sit.col()),
                            pit.value() * sit.value());
                    }
                }
            }
        }
        kron.setFromTriplets(trips.begin(), trips.end());
    }
    interaction_ = structured_draw(kron, cfg_.sigma_interaction, rng);

    // Frame: enumeration areas with sizes, coordinates and cluster effects.
    const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(cfg_.regions))));
    int ea_counter = 0;
    for (int r = 0; r < cfg_.regions; ++r) {
        const bool urban_only = r < cfg_.urban_only_regions;
        for (const bool urban : {true, false}) {
            if (!urban && urban_only) continue;
            Stratum stratum;
            stratum.region = r;
            stratum.urban = urban;
            const int lo = urban ? cfg_.eas_urban_min : cfg_.eas_rural_min;
            const int hi = urban ? cfg_.eas_urban_max : cfg_.eas_rural_max;
            const int n_eas = lo + static_cast<int>(rng.integer(hi - lo + 1));
            for (int e = 0; e < n_eas; ++e) {
                EnumerationArea ea;
                char buf[24];
                std::snprintf(buf, sizeof(buf), "EA%06d", ++ea_counter);
                ea.id = buf;
                ea.region = r;
                ea.urban = urban;
                ea.households =
                    cfg_.ea_households_min +
                    static_cast<int>(rng.integer(cfg_.ea_households_max - cfg_.ea_households_min + 1));
                ea.x_km = 50.0 * (r % cols) + 50.0 * rng.uniform();
                ea.y_km = 50.0 * (r / cols) + 50.0 * rng.uniform();
                ea.cluster_effect = cfg_.cluster_sd * rng.normal();
                ea.child_stream = Rng::derive(seed, 0x10000 + ea_counter);
                stratum.eas.push_back(std::move(ea));
            }
            strata_.push_back(std::move(stratum));
        }
    }
}

double SyntheticPopulation::true_hazard_logit(int band, int period, int cohort, int region,
                                              bool urban) const {
    const int p = std::clamp(period, truth_first_period_, truth_last_period_);
    const int c = std::clamp(cohort, truth_first_cohort_, truth_last_cohort_);
    const int pi = p - truth_first_period_;
    const int ci = c - truth_first_cohort_;
    const double p_center = 0.5 * (cfg_.first_period + cfg_.last_period);
    const double c_center = p_center - 2.5;
    return cfg_.base_age_logit[band] + (urban ? cfg_.urban_effect : 0.0) +
           cfg_.period_slope * (p - p_center) + cfg_.cohort_slope * (c - c_center) +
           period_curv_[pi] + cohort_curv_[ci] + spatial_[region] +
           interaction_[pi * graph_->size() + region];
}

double SyntheticPopulation::true_stratum_u5mr(int period, int region, bool urban) const {
    const auto mix = band_cohort_mix(period, schema_);
    std::array<double, AgeBandSchema::kBands> hazards{};
    for (int b = 0; b < AgeBandSchema::kBands; ++b) {
        hazards[b] =
            expit(true_hazard_logit(b, period, mix[b].dominant_cohort, region, urban));
    }
    return u5mr_from_hazards(hazards, schema_);
}

double SyntheticPopulation::rural_share(int region) const {
    long long rural = 0;
    long long total = 0;
    for (const auto& stratum : strata_) {
        if (stratum.region != region) continue;
        for (const auto& ea : stratum.eas) {
            total += ea.households;
            if (!stratum.urban) rural += ea.households;
        }
    }
    if (total == 0) throw std::out_of_range("region has no households");
    return static_cast<double>(rural) / static_cast<double>(total);
}

double SyntheticPopulation::national_weight(int region) const {
    long long mine = 0;
    long long total = 0;
    for (const auto& stratum : strata_) {
        for (const auto& ea : stratum.eas) {
            total += ea.households;
            if (stratum.region == region) mine += ea.households;
        }
    }
    return static_cast<double>(mine) / static_cast<double>(total);
}

double SyntheticPopulation::true_u5mr(int period, int region) const {
    const double q = rural_share(region);
    return q * true_stratum_u5mr(period, region, false) +
           (1.0 - q) * true_stratum_u5mr(period, region, true);
}

std::vector<BirthRecord> SyntheticPopulation::realize_household(const EnumerationArea& ea,
                                                                int household_index,
                                                                double weight) const {
    Rng rng(Rng::derive(ea.child_stream, static_cast<std::uint64_t>(household_index)));
    const int window_months = interview_ - birth_window_start_;
    const double mean_births =
        cfg_.births_per_household_year * static_cast<double>(window_months) / 12.0;
    const int births = poisson_draw(mean_births, rng);
    std::vector<BirthRecord> out;
    for (int b = 0; b < births; ++b) {
        BirthRecord rec;
        rec.birth_month =
            birth_window_start_ + static_cast<MonthIndex>(rng.integer(window_months));
        rec.interview_month = interview_;
        rec.cluster_id = ea.id;
        rec.region_id = graph_->region_ids()[ea.region];
        rec.is_urban = ea.urban;
        rec.weight = weight;
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%s-H%04d-C%d", ea.id.c_str(), household_index, b + 1);
        rec.child_id = buf;
        for (int a = 0; a < 60; ++a) {
            const MonthIndex m = rec.birth_month + a;
            if (m >= interview_) break;
            const double h =
                expit(true_hazard_logit(schema_.band_of_age(a), year_of(m),
                                        year_of(rec.birth_month), ea.region, ea.urban) +
                      ea.cluster_effect);
            if (rng.uniform() < h) {
                rec.death_month = m;
                break;
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<BirthRecord> SyntheticPopulation::census_records() const {
    std::vector<BirthRecord> out;
    for (const auto& stratum : strata_) {
        for (const auto& ea : stratum.eas) {
            for (int h = 0; h < ea.households; ++h) {
                auto recs = realize_household(ea, h, 1.0);
                out.insert(out.end(), recs.begin(), recs.end());
            }
        }
    }
    return out;
}

SurveyDraw draw_survey(const SyntheticPopulation& pop, const SurveyDesign& design,
                       std::uint64_t seed) {
    if (design.clusters_per_stratum <= 0 || design.households_per_cluster <= 0) {
        throw std::invalid_argument("survey design counts must be positive");
    }
    SurveyDraw out;
    int stratum_index = 0;
    for (const auto& stratum : pop.strata()) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(stratum_index++)));
        const int n_take = design.clusters_per_stratum;
        const int n_eas = static_cast<int>(stratum.eas.size());
        if (n_take > n_eas) {
            throw std::invalid_argument("design asks for more clusters than EAs in a stratum");
        }
        // Oversized units are taken with certainty (standard PPS practice);
        // the remainder is drawn by systematic PPS on a randomized list.
        std::vector<double> incl(n_eas, 0.0);
        std::vector<int> certain;
        std::vector<int> pool(n_eas);
        for (int i = 0; i < n_eas; ++i) pool[i] = i;
        int remaining_take = n_take;
        const auto size_of = [&](int i) {
            return design.pps ? static_cast<double>(stratum.eas[i].households) : 1.0;
        };
        for (bool changed = true; changed && remaining_take > 0;) {
            changed = false;
            double pool_size = 0.0;
            for (int i : pool) pool_size += size_of(i);
            std::vector<int> next_pool;
            for (int i : pool) {
                if (remaining_take * size_of(i) >= pool_size) {
                    certain.push_back(i);
                    incl[i] = 1.0;
                    --remaining_take;
                    changed = true;
                } else {
                    next_pool.push_back(i);
                }
            }
            pool = std::move(next_pool);
        }
        double pool_size = 0.0;
        for (int i : pool) pool_size += size_of(i);
        for (int i : pool) incl[i] = remaining_take * size_of(i) / pool_size;

        std::vector<int> order = pool;
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            std::swap(order[i], order[static_cast<int>(rng.integer(i + 1))]);
        }
        std::vector<int> selected = certain;
        if (remaining_take > 0) {
            const double step = pool_size / remaining_take;
            const double start = rng.uniform() * step;
            double cumulative = 0.0;
            int next_point = 0;
            for (std::size_t k = 0; k < order.size() && next_point < remaining_take; ++k) {
                const int ea_idx = order[k];
                const double lo = cumulative;
                cumulative += size_of(ea_idx);
                while (next_point < remaining_take && start + next_point * step < cumulative &&
                       start + next_point * step >= lo) {
                    selected.push_back(ea_idx);
                    ++next_point;
                }
            }
        }
        for (int ea_idx : selected) {
            const auto& ea = stratum.eas[ea_idx];
            const int m = std::min(design.households_per_cluster, ea.households);
            // SRS of households without replacement.
            std::vector<int> hh(ea.households);
            for (int i = 0; i < ea.households; ++i) hh[i] = i;
            for (int i = 0; i < m; ++i) {
                const int j = i + static_cast<int>(rng.integer(ea.households - i));
                std::swap(hh[i], hh[j]);
            }
            const double weight =
                (1.0 / incl[ea_idx]) * (static_cast<double>(ea.households) / m);
            for (int i = 0; i < m; ++i) {
                auto recs = pop.realize_household(ea, hh[i], weight);
                out.records.insert(out.records.end(), recs.begin(), recs.end());
            }
            out.clusters.push_back({ea.id, pop.graph().region_ids()[ea.region], ea.urban,
                                    ea.x_km, ea.y_km, weight});
        }
    }
    jitter_cluster_coordinates(out.clusters, Rng::derive(seed, 0xC00Dull));
    return out;
}

void jitter_cluster_coordinates(std::vector<SurveyDraw::Cluster>& clusters,
                                std::uint64_t seed) {
    Rng rng(seed);
    for (auto& cluster : clusters) {
        double cap = cluster.urban ? 2.0 : 5.0;
        if (!cluster.urban && rng.uniform() < 0.01) cap = 10.0;
        const double distance = cap * rng.uniform();
        const double angle = 2.0 * std::numbers::pi * rng.uniform();
        cluster.x_km += distance * std::cos(angle);
        cluster.y_km += distance * std::sin(angle);
    }
}

} // namespace u5apc
