#include "model.hpp"

#include "interaction.hpp"
#include "keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace u5apc {

PcPrecisionPrior::PcPrecisionPrior(const PcPriorSpec& spec) {
    if (!(spec.U > 0.0) || !(spec.p > 0.0) || !(spec.p < 1.0)) {
        throw std::invalid_argument("PC precision prior needs U > 0 and p in (0, 1)");
    }
    lambda = -std::log(spec.p) / spec.U;
}

double PcPrecisionPrior::log_density_tau(double tau) const {
    if (!(tau > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(lambda / 2.0) - 1.5 * std::log(tau) - lambda / std::sqrt(tau);
}

double PcPrecisionPrior::log_density_log_tau(double log_tau) const {
    return std::log(lambda / 2.0) - 0.5 * log_tau - lambda * std::exp(-0.5 * log_tau);
}

namespace {

// sqrt(2 KLD(phi)) against the iid base model on the constrained subspace.
double mixing_distance(double phi, const std::vector<double>& gamma) {
    double acc = 0.0;
    for (double g : gamma) {
        acc += phi * (g - 1.0) - std::log1p(phi * (g - 1.0));
    }
    return std::sqrt(std::max(acc, 0.0));
}

} // namespace

PcMixingPrior::PcMixingPrior(const PcPriorSpec& spec, const Eigen::VectorXd& evals,
                             int grid_size) {
    if (!(spec.U > 0.0) || !(spec.U < 1.0) || !(spec.p > 0.0) || !(spec.p < 1.0)) {
        throw std::invalid_argument("PC mixing prior needs U and p in (0, 1)");
    }
    if (evals.size() == 0) throw std::invalid_argument("PC mixing prior needs eigenvalues");
    std::vector<double> gamma(evals.size());
    for (int i = 0; i < evals.size(); ++i) {
        if (!(evals[i] > 0.0)) {
            throw std::invalid_argument("PC mixing prior expects positive eigenvalues");
        }
        gamma[i] = 1.0 / evals[i];
    }

    const int n = grid_size;
    grid_phi_.resize(n + 1);
    std::vector<double> dist(n + 1);
    for (int k = 0; k <= n; ++k) {
        grid_phi_[k] = static_cast<double>(k) / n;
        dist[k] = mixing_distance(grid_phi_[k], gamma);
    }
    const double d_u = mixing_distance(spec.U, gamma);
    const double d_one = dist[n];

    // P(phi < U) as a function of the rate; monotone increasing in lambda.
    const auto tail = [&](double lam) {
        if (std::abs(lam) < 1e-12) return d_u / d_one;
        return (1.0 - std::exp(-lam * d_u)) / (1.0 - std::exp(-lam * d_one));
    };
    double lo = -500.0;
    double hi = 500.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tail(mid) < spec.p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lambda_ = 0.5 * (lo + hi);

    // Unnormalized log density via the chain rule, then exact grid
    // normalization.
    grid_logpdf_.resize(n + 1);
    for (int k = 0; k <= n; ++k) {
        const int km = std::max(k - 1, 0);
        const int kp = std::min(k + 1, n);
        const double slope = (dist[kp] - dist[km]) / (grid_phi_[kp] - grid_phi_[km]);
        grid_logpdf_[k] = -lambda_ * dist[k] + std::log(std::max(slope, 1e-300));
    }
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        total += 0.5 * (std::exp(grid_logpdf_[k]) + std::exp(grid_logpdf_[k + 1])) / n;
    }
    const double log_total = std::log(total);
    for (auto& v : grid_logpdf_) v -= log_total;
}

double PcMixingPrior::log_density_phi(double phi) const {
    if (!(phi >= 0.0) || !(phi <= 1.0)) return -std::numeric_limits<double>::infinity();
    const double pos = phi * (grid_phi_.size() - 1);
    const int k = std::min(static_cast<int>(pos), static_cast<int>(grid_phi_.size()) - 2);
    const double frac = pos - k;
    return grid_logpdf_[k] * (1.0 - frac) + grid_logpdf_[k + 1] * frac;
}

double PcMixingPrior::log_density_logit_phi(double x) const {
    const double phi = expit(x);
    return log_density_phi(phi) + std::log(phi) + std::log1p(-phi);
}

int LatentModel::add_block(const std::string& name, int size) {
    if (size <= 0) throw std::invalid_argument("block size must be positive");
    blocks_.push_back({name, dim_, size});
    dim_ += size;
    return blocks_.back().offset;
}

const LatentModel::Block& LatentModel::block(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return b;
    }
    throw std::out_of_range("no latent block named '" + name + "'");
}

bool LatentModel::has_block(const std::string& name) const {
    for (const auto& b : blocks_) {
        if (b.name == name) return true;
    }
    return false;
}

void LatentModel::add_precision_term(const SpMat& block_matrix, int offset,
                                     std::function<double(const Eigen::VectorXd&)> coef) {
    PrecisionTerm term;
    term.base = block_matrix;  // re-embedded during finalize()
    term.coef = std::move(coef);
    terms_.push_back(std::move(term));
    terms_.back().base.makeCompressed();
    term_offsets_.push_back(offset);
}

void LatentModel::add_diagonal_term(int offset, int size, double constant) {
    SpMat diag(size, size);
    diag.setIdentity();
    add_precision_term(diag, offset, [constant](const Eigen::VectorXd&) { return constant; });
}

void LatentModel::add_constraints(const Eigen::MatrixXd& rows_in_block, int offset,
                                  const Eigen::VectorXd& values) {
    if (rows_in_block.rows() != values.size()) {
        throw std::invalid_argument("constraint rows and values disagree");
    }
    constraint_parts_.emplace_back(rows_in_block, offset);
    constraint_value_parts_.push_back(values);
}

int LatentModel::add_hyper(HyperDef def) {
    hypers_.push_back(std::move(def));
    return static_cast<int>(hypers_.size()) - 1;
}

void LatentModel::finalize() {
    if (finalized_) return;
    // Embed block-local precision terms and constraints at full dimension.
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        const int offset = term_offsets_[t];
        const SpMat& local = terms_[t].base;
        std::vector<Triplet> trips;
        trips.reserve(local.nonZeros());
        for (int o = 0; o < local.outerSize(); ++o) {
            for (SpMat::InnerIterator it(local, o); it; ++it) {
                trips.emplace_back(offset + static_cast<int>(it.row()),
                                   offset + static_cast<int>(it.col()), it.value());
            }
        }
        SpMat full(dim_, dim_);
        full.setFromTriplets(trips.begin(), trips.end());
        terms_[t].base = std::move(full);
    }
    int total_rows = 0;
    for (const auto& [rows, offset] : constraint_parts_) {
        total_rows += static_cast<int>(rows.rows());
    }
    constraints_ = Eigen::MatrixXd::Zero(total_rows, dim_);
    constraint_values_ = Eigen::VectorXd::Zero(total_rows);
    int at = 0;
    for (std::size_t c = 0; c < constraint_parts_.size(); ++c) {
        const auto& [rows, offset] = constraint_parts_[c];
        constraints_.block(at, offset, rows.rows(), rows.cols()) = rows;
        constraint_values_.segment(at, rows.rows()) = constraint_value_parts_[c];
        at += static_cast<int>(rows.rows());
    }
    finalized_ = true;
}

Eigen::VectorXd LatentModel::initial_theta() const {
    Eigen::VectorXd theta(hyper_count());
    for (int i = 0; i < hyper_count(); ++i) theta[i] = hypers_[i].init;
    return theta;
}

double LatentModel::log_hyper_prior(const Eigen::VectorXd& theta) const {
    if (theta.size() != hyper_count()) {
        throw std::invalid_argument("theta dimension mismatch");
    }
    double total = 0.0;
    for (int i = 0; i < hyper_count(); ++i) total += hypers_[i].log_prior(theta[i]);
    return total;
}

SpMat LatentModel::prior_precision(const Eigen::VectorXd& theta) const {
    std::vector<Triplet> trips;
    for (const auto& term : terms_) {
        const double c = term.coef(theta);
        for (int o = 0; o < term.base.outerSize(); ++o) {
            for (SpMat::InnerIterator it(term.base, o); it; ++it) {
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                   c * it.value());
            }
        }
    }
    SpMat q(dim_, dim_);
    q.setFromTriplets(trips.begin(), trips.end());
    return q;
}

ModelPriors ModelPriors::from_config(const KeyValueConfig& cfg) {
    ModelPriors priors;
    priors.curvature.U = cfg.get_double("pc_curvature_u", priors.curvature.U);
    priors.curvature.p = cfg.get_double("pc_curvature_p", priors.curvature.p);
    priors.spatial_precision.U = cfg.get_double("pc_spatial_u", priors.spatial_precision.U);
    priors.spatial_precision.p = cfg.get_double("pc_spatial_p", priors.spatial_precision.p);
    priors.spatial_mixing.U = cfg.get_double("pc_mixing_u", priors.spatial_mixing.U);
    priors.spatial_mixing.p = cfg.get_double("pc_mixing_p", priors.spatial_mixing.p);
    priors.interaction_precision.U =
        cfg.get_double("pc_interaction_u", priors.interaction_precision.U);
    priors.interaction_precision.p =
        cfg.get_double("pc_interaction_p", priors.interaction_precision.p);
    priors.overdispersion.U = cfg.get_double("pc_overdispersion_u", priors.overdispersion.U);
    priors.overdispersion.p = cfg.get_double("pc_overdispersion_p", priors.overdispersion.p);
    priors.fixed_effect_variance =
        cfg.get_double("fixed_effect_variance", priors.fixed_effect_variance);
    return priors;
}

LatentModel::Obs SurveyModel::predictor_row(int age_band, int period, int cohort,
                                            int region_index, bool urban) const {
    LatentModel::Obs obs;
    const auto push = [&obs](int idx, double coef) {
        obs.idx[obs.count] = idx;
        obs.coef[obs.count] = coef;
        ++obs.count;
    };
    const auto& fixed = model->block("fixed");
    push(fixed.offset + 0, 1.0);
    if (urban) push(fixed.offset + 1, 1.0);
    push(fixed.offset + 2, layout.t1_of(schema.midpoints[age_band]));
    const double t2 = layout.variant == Variant::AC ? layout.t2_of_cohort(cohort)
                                                    : layout.t2_of_period(period);
    push(fixed.offset + 3, t2);
    push(model->block("age_curv").offset + age_band, 1.0);
    if (layout.has_period_curvature()) {
        push(model->block("period_curv").offset + layout.period_index(period), 1.0);
    }
    if (layout.has_cohort_curvature()) {
        push(model->block("cohort_curv").offset + layout.cohort_index(cohort), 1.0);
    }
    push(model->block("bym2").offset + region_index, 1.0);
    const int regions = static_cast<int>(region_ids.size());
    push(model->block("interaction").offset + layout.period_index(period) * regions +
             region_index,
         1.0);
    return obs;
}

HyperParams SurveyModel::natural_hyper(const Eigen::VectorXd& theta) const {
    HyperParams h;
    if (h_d >= 0) h.d = expit(theta[h_d]);
    if (h_nu >= 0) h.tau_nu = std::exp(theta[h_nu]);
    if (h_eta >= 0) h.tau_eta = std::exp(theta[h_eta]);
    if (h_xi >= 0) h.tau_xi = std::exp(theta[h_xi]);
    if (h_s >= 0) h.tau_S = std::exp(theta[h_s]);
    if (h_phi >= 0) h.phi = expit(theta[h_phi]);
    if (h_delta >= 0) h.tau_delta = std::exp(theta[h_delta]);
    return h;
}

SurveyModel assemble_model(const std::vector<CountCell>& cells, const AdjacencyGraph& graph,
                           const AgeBandSchema& schema, Variant variant,
                           const ModelPriors& priors, int horizon) {
    if (cells.empty()) throw std::invalid_argument("no cells to model");
    {
        std::map<int, int> periods_seen;
        for (const auto& cell : cells) periods_seen[cell.period] += 1;
        if (periods_seen.size() < 3) {
            throw std::invalid_argument("model needs cells covering at least 3 periods");
        }
    }
    SurveyModel sm;
    sm.schema = schema;
    sm.priors = priors;
    sm.layout = build_apc_layout(cells, variant, schema, horizon);
    sm.region_ids = graph.region_ids();
    sm.model = std::make_shared<LatentModel>();
    LatentModel& m = *sm.model;

    if (variant != Variant::AP && sm.layout.cohort_axis.size() < 3) {
        throw std::invalid_argument("cohort axis has fewer than 3 levels");
    }

    // Region lookup with a hard error for ids absent from the graph.
    std::map<std::string, int> region_index;
    for (int i = 0; i < graph.size(); ++i) region_index[graph.region_ids()[i]] = i;
    for (const auto& cell : cells) {
        if (!region_index.count(cell.region_id)) {
            throw std::invalid_argument("region '" + cell.region_id +
                                        "' in data is missing from the adjacency graph");
        }
    }

    // Structures, scaled to unit generalized variance.
    const StructuredPrecision age_struct = scale_structure(rw2_precision(sm.layout.age_axis));
    const StructuredPrecision period_struct =
        scale_structure(rw2_precision(sm.layout.period_axis));
    StructuredPrecision cohort_struct;
    if (variant != Variant::AP) {
        cohort_struct = scale_structure(rw2_precision(sm.layout.cohort_axis));
    }
    const StructuredPrecision icar_scaled = scale_icar(icar_precision(graph));
    sm.bym2 = std::make_shared<Bym2Block>(icar_scaled);
    InteractionBlock inter = kronecker_precision(period_struct, icar_scaled);
    inter.constraints = null_space_constraints(inter);

    const int regions = graph.size();
    const int periods = sm.layout.period_axis.size();
    const int cohorts = sm.layout.cohort_axis.size();

    const int fixed_off = m.add_block("fixed", 4);
    const int age_off = m.add_block("age_curv", AgeBandSchema::kBands);
    int period_off = -1;
    int cohort_off = -1;
    if (variant != Variant::AC) period_off = m.add_block("period_curv", periods);
    if (variant != Variant::AP) cohort_off = m.add_block("cohort_curv", cohorts);
    const int bym2_off = m.add_block("bym2", 2 * regions);
    const int inter_off = m.add_block("interaction", periods * regions);

    // Hyperparameters (internal scale: log precisions, logit phi, logit d).
    {
        const double lam = -std::log(priors.overdispersion.p) / priors.overdispersion.U;
        const double norm = std::log1p(-std::exp(-lam));
        sm.h_d = m.add_hyper(
            {"logit_d",
             [lam, norm](double x) {
                 const double d = expit(x);
                 return std::log(lam) - lam * d - norm + std::log(d) + std::log1p(-d);
             },
             logit(0.01)});
        m.overdispersion_hyper = sm.h_d;
    }
    const PcPrecisionPrior curv_prior(priors.curvature);
    const auto log_tau_prior = [](const PcPrecisionPrior& prior) {
        return [prior](double x) { return prior.log_density_log_tau(x); };
    };
    sm.h_nu = m.add_hyper({"log_tau_nu", log_tau_prior(curv_prior), std::log(1.0)});
    if (variant != Variant::AC) {
        sm.h_eta = m.add_hyper({"log_tau_eta", log_tau_prior(curv_prior), std::log(50.0)});
    }
    if (variant != Variant::AP) {
        sm.h_xi = m.add_hyper({"log_tau_xi", log_tau_prior(curv_prior), std::log(50.0)});
    }
    sm.h_s = m.add_hyper(
        {"log_tau_S", log_tau_prior(PcPrecisionPrior(priors.spatial_precision)), std::log(8.0)});
    {
        PcMixingPrior mix(priors.spatial_mixing, sm.bym2->structure_eigenvalues());
        sm.h_phi = m.add_hyper(
            {"logit_phi", [mix](double x) { return mix.log_density_logit_phi(x); }, 0.0});
    }
    sm.h_delta = m.add_hyper({"log_tau_delta",
                              log_tau_prior(PcPrecisionPrior(priors.interaction_precision)),
                              std::log(200.0)});

    // Precision terms.
    m.add_diagonal_term(fixed_off, 4, 1.0 / priors.fixed_effect_variance);
    const int h_nu = sm.h_nu;
    m.add_precision_term(age_struct.matrix, age_off,
                         [h_nu](const Eigen::VectorXd& t) { return std::exp(t[h_nu]); });
    m.add_diagonal_term(age_off, AgeBandSchema::kBands, LatentModel::kIntrinsicJitter);
    if (period_off >= 0) {
        const int h_eta = sm.h_eta;
        m.add_precision_term(period_struct.matrix, period_off,
                             [h_eta](const Eigen::VectorXd& t) { return std::exp(t[h_eta]); });
        m.add_diagonal_term(period_off, periods, LatentModel::kIntrinsicJitter);
    }
    if (cohort_off >= 0) {
        const int h_xi = sm.h_xi;
        m.add_precision_term(cohort_struct.matrix, cohort_off,
                             [h_xi](const Eigen::VectorXd& t) { return std::exp(t[h_xi]); });
        m.add_diagonal_term(cohort_off, cohorts, LatentModel::kIntrinsicJitter);
    }
    {
        const int h_s = sm.h_s;
        const int h_phi = sm.h_phi;
        SpMat total_diag(2 * regions, 2 * regions);
        SpMat cross(2 * regions, 2 * regions);
        SpMat struct_diag(2 * regions, 2 * regions);
        SpMat struct_mat(2 * regions, 2 * regions);
        std::vector<Triplet> t1, t2, t3, t4;
        for (int i = 0; i < regions; ++i) {
            t1.emplace_back(i, i, 1.0);
            t2.emplace_back(i, regions + i, 1.0);
            t2.emplace_back(regions + i, i, 1.0);
            t3.emplace_back(regions + i, regions + i, 1.0);
        }
        for (int o = 0; o < icar_scaled.matrix.outerSize(); ++o) {
            for (SpMat::InnerIterator it(icar_scaled.matrix, o); it; ++it) {
                t4.emplace_back(regions + static_cast<int>(it.row()),
                                regions + static_cast<int>(it.col()), it.value());
            }
        }
        total_diag.setFromTriplets(t1.begin(), t1.end());
        cross.setFromTriplets(t2.begin(), t2.end());
        struct_diag.setFromTriplets(t3.begin(), t3.end());
        struct_mat.setFromTriplets(t4.begin(), t4.end());
        m.add_precision_term(total_diag, bym2_off, [h_s, h_phi](const Eigen::VectorXd& t) {
            return std::exp(t[h_s]) / (1.0 - expit(t[h_phi]));
        });
        m.add_precision_term(cross, bym2_off, [h_s, h_phi](const Eigen::VectorXd& t) {
            const double phi = expit(t[h_phi]);
            return -std::sqrt(phi * std::exp(t[h_s])) / (1.0 - phi);
        });
        m.add_precision_term(struct_diag, bym2_off, [h_phi](const Eigen::VectorXd& t) {
            const double phi = expit(t[h_phi]);
            return phi / (1.0 - phi);
        });
        m.add_precision_term(struct_mat, bym2_off, [](const Eigen::VectorXd&) { return 1.0; });
        m.add_diagonal_term(bym2_off, 2 * regions, LatentModel::kIntrinsicJitter);
    }
    {
        const int h_delta = sm.h_delta;
        m.add_precision_term(inter.precision, inter_off,
                             [h_delta](const Eigen::VectorXd& t) { return std::exp(t[h_delta]); });
        m.add_diagonal_term(inter_off, periods * regions, LatentModel::kIntrinsicJitter);
    }

    // Constraints.
    m.add_constraints(curvature_constraints(sm.layout.age_axis), age_off,
                      Eigen::VectorXd::Zero(2));
    if (period_off >= 0) {
        m.add_constraints(curvature_constraints(sm.layout.period_axis), period_off,
                          Eigen::VectorXd::Zero(2));
    }
    if (cohort_off >= 0) {
        m.add_constraints(curvature_constraints(sm.layout.cohort_axis), cohort_off,
                          Eigen::VectorXd::Zero(2));
    }
    m.add_constraints(sm.bym2->constraints(), bym2_off,
                      Eigen::VectorXd::Zero(sm.bym2->constraints().rows()));
    m.add_constraints(inter.constraints, inter_off,
                      Eigen::VectorXd::Zero(inter.constraints.rows()));

    // Observations, merged over identical (stratum cell, y, n) tuples.
    struct ObsKey {
        int region, band, period, cohort;
        bool urban;
        long long y, n;
        bool operator<(const ObsKey& o) const {
            return std::tie(region, band, period, cohort, urban, y, n) <
                   std::tie(o.region, o.band, o.period, o.cohort, o.urban, o.y, o.n);
        }
    };
    std::map<ObsKey, double> merged;
    for (const auto& cell : cells) {
        ObsKey key{region_index.at(cell.region_id), cell.age_band,    cell.period,
                   cell.cohort,                     cell.is_urban,    cell.deaths,
                   cell.exposure};
        merged[key] += 1.0;
    }
    for (const auto& [key, mult] : merged) {
        LatentModel::Obs obs =
            sm.predictor_row(key.band, key.period, key.cohort, key.region, key.urban);
        obs.y = static_cast<double>(key.y);
        obs.n_or_var = static_cast<double>(key.n);
        obs.mult = mult;
        m.add_observation(obs);
    }
    m.obs_kind = LatentModel::ObsKind::BetaBinomial;
    m.finalize();
    return sm;
}

} // namespace u5apc
