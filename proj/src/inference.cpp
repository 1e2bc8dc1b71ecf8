#include "inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace u5apc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::MatrixXd& cov) {
    const int k = static_cast<int>(x.size());
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("constraint covariance is not positive definite");
    }
    double log_det = 0.0;
    for (int i = 0; i < k; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const Eigen::VectorXd r = x - mean;
    const double quad = r.dot(llt.solve(r));
    return -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

} // namespace

InferenceEngine::InferenceEngine(std::shared_ptr<const LatentModel> model)
    : model_(std::move(model)), dim_(model_->dim()) {
    if (dim_ > kDenseLimit) {
        throw std::invalid_argument("latent dimension exceeds the engine's dense-scatter limit");
    }
    scatter_ = Eigen::MatrixXd::Zero(dim_, dim_);

    // theta-independent union sparsity: every precision-term entry, every
    // observation cross product, and the full diagonal.
    std::vector<Triplet> trips;
    for (const auto& term : model_->precision_terms()) {
        for (int o = 0; o < term.base.outerSize(); ++o) {
            for (SpMat::InnerIterator it(term.base, o); it; ++it) {
                trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), 1.0);
            }
        }
    }
    SpMat prior_pattern(dim_, dim_);
    prior_pattern.setFromTriplets(trips.begin(), trips.end());
    prior_pattern_ = prior_pattern;
    prior_pattern_.makeCompressed();
    for (const auto& obs : model_->observations()) {
        for (int a = 0; a < obs.count; ++a) {
            for (int b = 0; b < obs.count; ++b) {
                trips.emplace_back(obs.idx[a], obs.idx[b], 1.0);
            }
        }
    }
    for (int i = 0; i < dim_; ++i) trips.emplace_back(i, i, 0.0);
    pattern_.resize(dim_, dim_);
    pattern_.setFromTriplets(trips.begin(), trips.end());
    pattern_.makeCompressed();

    q_post_ = pattern_;
    q_prior_ = prior_pattern_;
    prior_solver_.analyzePattern(prior_pattern_);
    post_solver_.analyzePattern(pattern_);
    post_analyzed_ = true;

    obs_eta_.resize(model_->observations().size());
    obs_d1_.resize(model_->observations().size());
    obs_w_.resize(model_->observations().size());
}

void InferenceEngine::build_prior(const Eigen::VectorXd& theta) {
    scatter_.setZero();
    for (const auto& term : model_->precision_terms()) {
        const double c = term.coef(theta);
        for (int o = 0; o < term.base.outerSize(); ++o) {
            for (SpMat::InnerIterator it(term.base, o); it; ++it) {
                scatter_(it.row(), it.col()) += c * it.value();
            }
        }
    }
    for (int o = 0; o < q_prior_.outerSize(); ++o) {
        for (SpMat::InnerIterator it(q_prior_, o); it; ++it) {
            it.valueRef() = scatter_(it.row(), it.col());
        }
    }
}

double InferenceEngine::likelihood_pass(const Eigen::VectorXd& x, double d, bool value_only) {
    double loglik = 0.0;
    const auto& obs = model_->observations();
    const bool betabin = model_->obs_kind == LatentModel::ObsKind::BetaBinomial;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto& o = obs[i];
        double eta = 0.0;
        for (int k = 0; k < o.count; ++k) eta += o.coef[k] * x[o.idx[k]];
        obs_eta_[i] = eta;
        const LikTerms t = betabin ? betabinomial_loglik(o.y, o.n_or_var, eta, d)
                                   : gaussian_loglik(o.y, o.n_or_var, eta);
        loglik += o.mult * t.value;
        if (!value_only) {
            obs_d1_[i] = o.mult * t.d1;
            obs_w_[i] = o.mult * std::max(-t.d2, 1e-10);
        }
    }
    return loglik;
}

void InferenceEngine::assemble_posterior() {
    // q_prior_ holds the current prior values; obs weights are in obs_w_.
    scatter_.setZero();
    for (int o = 0; o < q_prior_.outerSize(); ++o) {
        for (SpMat::InnerIterator it(q_prior_, o); it; ++it) {
            scatter_(it.row(), it.col()) = it.value();
        }
    }
    const auto& obs = model_->observations();
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto& o = obs[i];
        const double w = obs_w_[i];
        for (int a = 0; a < o.count; ++a) {
            const double wa = w * o.coef[a];
            for (int b = 0; b < o.count; ++b) {
                scatter_(o.idx[a], o.idx[b]) += wa * o.coef[b];
            }
        }
    }
    for (int o = 0; o < q_post_.outerSize(); ++o) {
        for (SpMat::InnerIterator it(q_post_, o); it; ++it) {
            it.valueRef() = scatter_(it.row(), it.col());
        }
    }
}

double InferenceEngine::objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const {
    // -0.5 x' Q_prior x + loglik(x); slow path used by tests and the MCMC
    // oracle.
    const SpMat q = model_->prior_precision(theta);
    double d = 0.5;
    if (model_->overdispersion_hyper >= 0) d = expit(theta[model_->overdispersion_hyper]);
    double loglik = 0.0;
    const bool betabin = model_->obs_kind == LatentModel::ObsKind::BetaBinomial;
    for (const auto& o : model_->observations()) {
        double eta = 0.0;
        for (int k = 0; k < o.count; ++k) eta += o.coef[k] * x[o.idx[k]];
        const LikTerms t = betabin ? betabinomial_loglik(o.y, o.n_or_var, eta, d)
                                   : gaussian_loglik(o.y, o.n_or_var, eta);
        loglik += o.mult * t.value;
    }
    return -0.5 * x.dot(q * x) + loglik;
}

GaussianApprox InferenceEngine::find_mode(const Eigen::VectorXd& theta, int max_iterations,
                                          double grad_tol) {
    if (theta.size() != model_->hyper_count()) {
        throw std::invalid_argument("theta dimension mismatch");
    }
    for (int i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(theta[i])) throw std::invalid_argument("theta outside domain");
    }
    build_prior(theta);
    double d = 0.5;
    if (model_->overdispersion_hyper >= 0) d = expit(theta[model_->overdispersion_hyper]);

    Eigen::VectorXd x =
        (have_warm_ && warm_mode_.size() == dim_) ? warm_mode_ : Eigen::VectorXd::Zero(dim_);

    bool converged = false;
    int iterations = 0;
    double loglik = likelihood_pass(x, d, false);
    double objective_now = -0.5 * x.dot(q_prior_ * x) + loglik;
    if (!std::isfinite(objective_now)) {
        x.setZero();
        loglik = likelihood_pass(x, d, false);
        objective_now = loglik;
    }
    for (int iter = 1; iter <= max_iterations; ++iter) {
        iterations = iter;
        // gradient: -Q_prior x + B' d1
        Eigen::VectorXd g = -(q_prior_ * x);
        const auto& obs = model_->observations();
        for (std::size_t i = 0; i < obs.size(); ++i) {
            const auto& o = obs[i];
            for (int k = 0; k < o.count; ++k) g[o.idx[k]] += o.coef[k] * obs_d1_[i];
        }
        if (g.cwiseAbs().maxCoeff() < grad_tol) {
            converged = true;
            break;
        }
        assemble_posterior();
        post_solver_.factorize(q_post_);
        if (post_solver_.info() != Eigen::Success) {
            throw std::runtime_error("posterior precision factorization failed (indefinite?)");
        }
        const Eigen::VectorXd step = post_solver_.solve(g);
        const double slope = g.dot(step);
        // Numerical stationarity: the Newton model predicts no measurable
        // improvement (flat directions pinned only by jitter).
        if (slope < 1e-10 * (1.0 + std::abs(objective_now))) {
            converged = true;
            break;
        }
        double t = 1.0;
        bool stepped = false;
        for (int ls = 0; ls < 40; ++ls) {
            const Eigen::VectorXd x_new = x + t * step;
            const double trial = likelihood_pass(x_new, d, true);
            const double f_new = -0.5 * x_new.dot(q_prior_ * x_new) + trial;
            if (std::isfinite(f_new) && f_new >= objective_now + 1e-4 * t * slope) {
                x = x_new;
                objective_now = f_new;
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if (!stepped) {
            throw std::runtime_error("mode search line search failed to make progress");
        }
        loglik = likelihood_pass(x, d, false);
    }
    if (!converged) {
        throw std::runtime_error("mode search did not converge within " +
                                 std::to_string(max_iterations) + " iterations");
    }

    // Final curvature at the mode.
    likelihood_pass(x, d, false);
    assemble_posterior();
    post_solver_.factorize(q_post_);
    if (post_solver_.info() != Eigen::Success) {
        throw std::runtime_error("posterior factorization failed at the mode");
    }
    prior_solver_.factorize(q_prior_);
    if (prior_solver_.info() != Eigen::Success) {
        throw std::runtime_error("prior precision factorization failed");
    }
    GaussianApprox approx;
    approx.theta = theta;
    approx.raw_mode = x;
    approx.mode = krige(x);
    approx.posterior_precision = q_post_;
    approx.log_det_posterior = post_solver_.vectorD().array().log().sum();
    approx.log_det_prior = prior_solver_.vectorD().array().log().sum();
    approx.loglik_at_mode = loglik;
    approx.prior_quad_at_mode = x.dot(q_prior_ * x);
    approx.iterations = iterations;
    warm_mode_ = x;
    have_warm_ = true;
    return approx;
}

Eigen::VectorXd InferenceEngine::krige(const Eigen::VectorXd& x) const {
    const auto& a = model_->constraint_matrix();
    if (a.rows() == 0) return x;
    const Eigen::MatrixXd w = post_solver_.solve(a.transpose());
    const Eigen::MatrixXd s = a * w;
    const Eigen::VectorXd resid = a * x - model_->constraint_values();
    return x - w * Eigen::LLT<Eigen::MatrixXd>(s).solve(resid);
}

double InferenceEngine::log_posterior_hyper(const Eigen::VectorXd& theta,
                                            GaussianApprox* approx_out) {
    if (theta.size() != model_->hyper_count()) {
        throw std::invalid_argument("theta dimension mismatch");
    }
    for (int i = 0; i < theta.size(); ++i) {
        if (!std::isfinite(theta[i])) return -kInf;
    }
    const double hyper_prior = model_->log_hyper_prior(theta);
    if (!std::isfinite(hyper_prior)) return -kInf;

    GaussianApprox approx = find_mode(theta);

    // Unconstrained Laplace: loglik + log prior density - log Gaussian
    // density, both evaluated at the raw mode. The (2 pi) powers cancel.
    double value = hyper_prior + approx.loglik_at_mode - 0.5 * approx.prior_quad_at_mode +
                   0.5 * approx.log_det_prior - 0.5 * approx.log_det_posterior;

    const auto& a = model_->constraint_matrix();
    if (a.rows() > 0) {
        // Conditioning on Ax = e: add the constraint density under the
        // posterior Gaussian and remove it under the prior.
        const Eigen::MatrixXd w_post = post_solver_.solve(a.transpose());
        const Eigen::MatrixXd s_post = a * w_post;
        const Eigen::MatrixXd w_pr = prior_solver_.solve(a.transpose());
        const Eigen::MatrixXd s_pr = a * w_pr;
        const Eigen::VectorXd e = model_->constraint_values();
        value += log_gaussian_density(e, a * approx.raw_mode, s_post);
        value -= log_gaussian_density(e, Eigen::VectorXd::Zero(e.size()), s_pr);
    }
    if (approx_out) *approx_out = std::move(approx);
    return value;
}

OptimResult InferenceEngine::optimize_hyper(const Eigen::VectorXd& theta0,
                                            const OptimOptions& opts) {
    if (opts.max_evals <= 0) throw std::invalid_argument("optimizer budget must be positive");
    const int n = static_cast<int>(theta0.size());
    int evals = 0;
    const auto f = [&](const Eigen::VectorXd& t) -> double {
        ++evals;
        try {
            const double v = log_posterior_hyper(t);
            return std::isfinite(v) ? v : -kInf;
        } catch (const std::exception&) {
            return -kInf;
        }
    };

    // Nelder-Mead (ascent) with standard coefficients.
    std::vector<Eigen::VectorXd> pts(n + 1, theta0);
    std::vector<double> vals(n + 1);
    for (int i = 1; i <= n; ++i) pts[i][i - 1] += opts.initial_step;
    for (int i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    bool converged = false;
    while (evals < opts.max_evals) {
        std::vector<int> order(n + 1);
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] > vals[b]; });
        std::vector<Eigen::VectorXd> spts(n + 1);
        std::vector<double> svals(n + 1);
        for (int i = 0; i <= n; ++i) {
            spts[i] = pts[order[i]];
            svals[i] = vals[order[i]];
        }
        pts = spts;
        vals = svals;
        if (std::isfinite(vals[n]) && vals[0] - vals[n] < opts.f_tol) {
            converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[i];
        centroid /= static_cast<double>(n);

        const Eigen::VectorXd reflect = centroid + (centroid - pts[n]);
        const double f_r = f(reflect);
        if (f_r > vals[0]) {
            const Eigen::VectorXd expand = centroid + 2.0 * (centroid - pts[n]);
            const double f_e = f(expand);
            if (f_e > f_r) {
                pts[n] = expand;
                vals[n] = f_e;
            } else {
                pts[n] = reflect;
                vals[n] = f_r;
            }
        } else if (f_r > vals[n - 1]) {
            pts[n] = reflect;
            vals[n] = f_r;
        } else {
            const Eigen::VectorXd contract = centroid + 0.5 * (pts[n] - centroid);
            const double f_c = f(contract);
            if (f_c > vals[n]) {
                pts[n] = contract;
                vals[n] = f_c;
            } else {
                for (int i = 1; i <= n; ++i) {
                    pts[i] = pts[0] + 0.5 * (pts[i] - pts[0]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }

    int best = 0;
    for (int i = 1; i <= n; ++i) {
        if (vals[i] > vals[best]) best = i;
    }
    OptimResult result;
    result.theta = pts[best];
    result.value = vals[best];
    result.evaluations = evals;
    result.converged = converged;
    if (!std::isfinite(result.value)) {
        throw std::runtime_error("hyperparameter optimization never found a finite value");
    }
    if (opts.compute_hessian) {
        const double h = opts.hessian_step;
        Eigen::MatrixXd hess(n, n);
        const auto fv = [&](const Eigen::VectorXd& t) { return f(t); };
        const double f0 = result.value;
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd tp = result.theta, tm = result.theta;
            tp[i] += h;
            tm[i] -= h;
            hess(i, i) = (fv(tp) - 2.0 * f0 + fv(tm)) / (h * h);
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                Eigen::VectorXd tpp = result.theta, tpm = result.theta, tmp = result.theta,
                                tmm = result.theta;
                tpp[i] += h;
                tpp[j] += h;
                tpm[i] += h;
                tpm[j] -= h;
                tmp[i] -= h;
                tmp[j] += h;
                tmm[i] -= h;
                tmm[j] -= h;
                hess(i, j) = hess(j, i) =
                    (fv(tpp) - fv(tpm) - fv(tmp) + fv(tmm)) / (4.0 * h * h);
            }
        }
        result.hessian = hess;
    }
    return result;
}

PosteriorDraws InferenceEngine::sample_latent(const GaussianApprox& approx, int n,
                                              std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("draw count must be positive");
    post_solver_.factorize(approx.posterior_precision);
    if (post_solver_.info() != Eigen::Success) {
        throw std::runtime_error("cannot factorize posterior precision for sampling");
    }
    const Eigen::VectorXd dvec = post_solver_.vectorD();
    for (int i = 0; i < dvec.size(); ++i) {
        if (!(dvec[i] > 0.0)) throw std::runtime_error("posterior precision is not PD");
    }
    const Eigen::VectorXd d_inv_sqrt = dvec.cwiseInverse().cwiseSqrt();

    const auto& a = model_->constraint_matrix();
    Eigen::MatrixXd w;  // Q^{-1} A'
    Eigen::LLT<Eigen::MatrixXd> s_llt;
    if (a.rows() > 0) {
        w = post_solver_.solve(a.transpose());
        s_llt.compute(a * w);
        if (s_llt.info() != Eigen::Success) {
            throw std::runtime_error("constraint system is singular");
        }
    }

    Rng rng(seed);
    PosteriorDraws out;
    out.theta = approx.theta;
    out.draws.resize(n, dim_);
    Eigen::VectorXd z(dim_);
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < dim_; ++i) z[i] = rng.normal();
        // x = raw_mode + P^{-1} L^{-T} D^{-1/2} z gives cov Q^{-1}
        Eigen::VectorXd y = d_inv_sqrt.cwiseProduct(z);
        post_solver_.matrixU().solveInPlace(y);
        Eigen::VectorXd x = approx.raw_mode + post_solver_.permutationPinv() * y;
        if (a.rows() > 0) {
            const Eigen::VectorXd resid = a * x - model_->constraint_values();
            x -= w * s_llt.solve(resid);
        }
        out.draws.row(s) = x.transpose();
    }
    return out;
}

McmcSummary InferenceEngine::mcmc_reference(const Eigen::VectorXd& theta,
                                            const McmcOptions& opts, std::uint64_t seed) {
    if (dim_ > opts.max_latent_dim) {
        throw std::invalid_argument("MCMC oracle is limited to small latent dimensions");
    }
    GaussianApprox approx = find_mode(theta);
    post_solver_.factorize(approx.posterior_precision);
    const Eigen::VectorXd d_inv_sqrt = post_solver_.vectorD().cwiseInverse().cwiseSqrt();

    const auto& a = model_->constraint_matrix();
    Eigen::MatrixXd w;
    Eigen::LLT<Eigen::MatrixXd> s_llt;
    if (a.rows() > 0) {
        w = post_solver_.solve(a.transpose());
        s_llt.compute(a * w);
    }
    const auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        if (a.rows() == 0) return v;
        return v - w * s_llt.solve(a * v - model_->constraint_values());
    };

    const long long burn = opts.burn_in >= 0 ? opts.burn_in : opts.iterations / 5;
    double step_scale = opts.initial_step;
    Rng rng(seed);

    double d = 0.5;
    if (model_->overdispersion_hyper >= 0) d = expit(theta[model_->overdispersion_hyper]);
    build_prior(theta);
    const SpMat q_prior = q_prior_;
    const auto logpost = [&](const Eigen::VectorXd& v) {
        return -0.5 * v.dot(q_prior * v) + likelihood_pass(v, d, true);
    };

    Eigen::VectorXd x = project(approx.raw_mode);
    double f_cur = logpost(x);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim_);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim_);
    long long kept = 0;
    long long accepted = 0;
    long long proposals = 0;
    long long window_acc = 0;
    long long window_n = 0;
    Eigen::VectorXd z(dim_);
    for (long long it = 0; it < opts.iterations; ++it) {
        for (int i = 0; i < dim_; ++i) z[i] = rng.normal();
        Eigen::VectorXd delta = d_inv_sqrt.cwiseProduct(z);
        post_solver_.matrixU().solveInPlace(delta);
        delta = post_solver_.permutationPinv() * delta;
        if (a.rows() > 0) delta -= w * s_llt.solve(a * delta);
        const Eigen::VectorXd prop = x + step_scale * delta;
        const double f_prop = logpost(prop);
        ++proposals;
        ++window_n;
        if (std::log(std::max(rng.uniform(), 1e-300)) < f_prop - f_cur) {
            x = prop;
            f_cur = f_prop;
            ++accepted;
            ++window_acc;
        }
        if (it < burn && window_n == 200) {
            const double rate = static_cast<double>(window_acc) / window_n;
            if (rate > 0.35) step_scale *= 1.25;
            if (rate < 0.18) step_scale /= 1.25;
            window_acc = 0;
            window_n = 0;
        }
        if (it >= burn) {
            ++kept;
            const Eigen::VectorXd delta_mean = x - mean;
            mean += delta_mean / static_cast<double>(kept);
            m2 += delta_mean.cwiseProduct(x - mean);
        }
    }
    McmcSummary summary;
    summary.mean = mean;
    summary.sd = (m2 / std::max<double>(1.0, static_cast<double>(kept - 1))).cwiseSqrt();
    summary.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposals);
    summary.iterations = opts.iterations;
    return summary;
}

std::vector<CcdPoint> InferenceEngine::ccd_design(const Eigen::VectorXd& theta_hat,
                                                  const Eigen::MatrixXd& hessian,
                                                  double radius_scale) {
    const int n = static_cast<int>(theta_hat.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-hessian);
    Eigen::VectorXd evals = eig.eigenvalues().cwiseMax(1e-8);
    const double radius = radius_scale * std::sqrt(static_cast<double>(n));
    std::vector<CcdPoint> design;
    // Degree-3 rule: center + axial pairs; weights reproduce the Gaussian
    // second moments.
    const double w_axial = 1.0 / (2.0 * radius * radius);
    const double w_center = 1.0 - 2.0 * n * w_axial;
    design.push_back({theta_hat, w_center});
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd dir = eig.eigenvectors().col(i) / std::sqrt(evals[i]);
        // Flat finite-difference curvature would fling the axial points to
        // unusable hyperparameter values; cap the move on the internal scale.
        const double max_move = radius * dir.cwiseAbs().maxCoeff();
        if (max_move > 5.0) dir *= 5.0 / max_move;
        design.push_back({theta_hat + radius * dir, w_axial});
        design.push_back({theta_hat - radius * dir, w_axial});
    }
    return design;
}

PosteriorDraws InferenceEngine::sample_latent_ccd(const std::vector<CcdPoint>& design, int n,
                                                  std::uint64_t seed) {
    if (design.empty()) throw std::invalid_argument("empty CCD design");
    // Reweight by the actual hyper posterior at each point; points where the
    // mode search fails drop out of the mixture.
    std::vector<double> logpost(design.size());
    double max_lp = -kInf;
    for (std::size_t j = 0; j < design.size(); ++j) {
        try {
            logpost[j] = log_posterior_hyper(design[j].theta);
        } catch (const std::exception&) {
            logpost[j] = -kInf;
        }
        max_lp = std::max(max_lp, logpost[j]);
    }
    std::vector<double> weight(design.size());
    double total = 0.0;
    for (std::size_t j = 0; j < design.size(); ++j) {
        weight[j] = design[j].weight * std::exp(logpost[j] - max_lp);
        total += weight[j];
    }
    PosteriorDraws out;
    out.draws.resize(n, dim_);
    out.theta = design.front().theta;
    int row = 0;
    for (std::size_t j = 0; j < design.size(); ++j) {
        int take = static_cast<int>(std::llround(weight[j] / total * n));
        if (j + 1 == design.size()) take = n - row;
        take = std::min(take, n - row);
        if (take <= 0) continue;
        GaussianApprox approx;
        log_posterior_hyper(design[j].theta, &approx);
        const PosteriorDraws part = sample_latent(approx, take, Rng::derive(seed, j));
        out.draws.middleRows(row, take) = part.draws;
        row += take;
    }
    if (row < n) {
        GaussianApprox approx;
        log_posterior_hyper(design.front().theta, &approx);
        const PosteriorDraws part =
            sample_latent(approx, n - row, Rng::derive(seed, design.size()));
        out.draws.middleRows(row, n - row) = part.draws;
    }
    return out;
}

long long InferenceEngine::posterior_factor_nonzeros() const {
    const SpMat l = post_solver_.matrixL();
    return l.nonZeros();
}

} // namespace u5apc
