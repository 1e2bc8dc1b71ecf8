#include <doctest.h>

#include "inference.hpp"
#include "model.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "temporal.hpp"

#include <cmath>
#include <numbers>

using namespace u5apc;

namespace {

// Small proper-prior Gaussian model: x ~ N(0, (tau Q0)^{-1}), y_i ~ N((Bx)_i, v_i).
struct ConjugateToy {
    std::shared_ptr<LatentModel> model;
    Eigen::MatrixXd q0;        // base prior precision (PD)
    Eigen::MatrixXd design;    // dense copy of B
    Eigen::VectorXd y;
    Eigen::VectorXd obs_var;
};

ConjugateToy make_conjugate(int dim, int n_obs, bool with_constraint, std::uint64_t seed) {
    ConjugateToy toy;
    Rng rng(seed);
    toy.model = std::make_shared<LatentModel>();
    const int off = toy.model->add_block("field", dim);

    // tridiagonal PD base precision
    Eigen::MatrixXd q0 = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        q0(i, i) = 2.2;
        if (i + 1 < dim) {
            q0(i, i + 1) = -0.8;
            q0(i + 1, i) = -0.8;
        }
    }
    toy.q0 = q0;
    SpMat q0s = q0.sparseView();
    const int h_tau =
        toy.model->add_hyper({"log_tau", [](double) { return 0.0; }, std::log(1.3)});
    toy.model->add_precision_term(q0s, off, [h_tau](const Eigen::VectorXd& t) {
        return std::exp(t[h_tau]);
    });

    toy.design = Eigen::MatrixXd::Zero(n_obs, dim);
    toy.y.resize(n_obs);
    toy.obs_var.resize(n_obs);
    for (int i = 0; i < n_obs; ++i) {
        LatentModel::Obs obs;
        obs.mult = 1.0;
        obs.count = 0;
        const int a = static_cast<int>(rng.integer(dim));
        int b = static_cast<int>(rng.integer(dim));
        if (b == a) b = (a + 1) % dim;
        const double ca = 0.5 + rng.uniform();
        const double cb = rng.normal() * 0.5;
        obs.idx[obs.count] = off + a;
        obs.coef[obs.count++] = ca;
        obs.idx[obs.count] = off + b;
        obs.coef[obs.count++] = cb;
        toy.design(i, a) = ca;
        toy.design(i, b) = cb;
        obs.y = rng.normal() * 0.7 + 0.3;
        obs.n_or_var = 0.3 + rng.uniform();
        toy.y[i] = obs.y;
        toy.obs_var[i] = obs.n_or_var;
        toy.model->add_observation(obs);
    }
    if (with_constraint) {
        toy.model->add_constraints(Eigen::MatrixXd::Ones(1, dim), off,
                                   Eigen::VectorXd::Zero(1));
    }
    toy.model->obs_kind = LatentModel::ObsKind::Gaussian;
    toy.model->finalize();
    return toy;
}

double analytic_marginal(const ConjugateToy& toy, double tau) {
    const Eigen::MatrixXd prior_cov = (tau * toy.q0).inverse();
    const Eigen::MatrixXd cov = Eigen::MatrixXd(toy.obs_var.asDiagonal()) +
                                toy.design * prior_cov * toy.design.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    double log_det = 0.0;
    for (int i = 0; i < toy.y.size(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const double quad = toy.y.dot(llt.solve(toy.y));
    return -0.5 * (toy.y.size() * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

double analytic_marginal_constrained(const ConjugateToy& toy, double tau) {
    const Eigen::MatrixXd prior_cov = (tau * toy.q0).inverse();
    const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(1, toy.q0.rows());
    const Eigen::MatrixXd s = a * prior_cov * a.transpose();
    const Eigen::MatrixXd constrained =
        prior_cov - prior_cov * a.transpose() * s.inverse() * a * prior_cov;
    const Eigen::MatrixXd cov = Eigen::MatrixXd(toy.obs_var.asDiagonal()) +
                                toy.design * constrained * toy.design.transpose();
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    double log_det = 0.0;
    for (int i = 0; i < toy.y.size(); ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const double quad = toy.y.dot(llt.solve(toy.y));
    return -0.5 * (toy.y.size() * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

std::vector<CountCell> tiny_cells(int regions, long long deaths) {
    AgeBandSchema schema;
    const auto graph = make_grid_graph(regions);
    std::vector<CountCell> cells;
    for (int r = 0; r < regions; ++r) {
        for (int p = 2010; p <= 2013; ++p) {
            for (const auto& pc : year_cohort_cells(p, schema)) {
                CountCell cell;
                cell.age_band = pc.age_band;
                cell.period = pc.period;
                cell.cohort = pc.cohort;
                cell.cluster_id = "cl" + std::to_string(r);
                cell.region_id = graph.region_ids()[r];
                cell.is_urban = r % 2 == 0;
                cell.deaths = pc.age_band == 0 ? deaths : 0;
                cell.exposure = 40 * pc.months;
                cells.push_back(cell);
            }
        }
    }
    return cells;
}

} // namespace

TEST_CASE("conjugate gaussian mode equals the closed-form solution") {
    auto toy = make_conjugate(6, 14, false, 101);
    InferenceEngine engine(toy.model);
    Eigen::VectorXd theta(1);
    theta << std::log(1.7);

    const double tau = std::exp(theta[0]);
    const Eigen::MatrixXd q_post =
        tau * toy.q0 +
        toy.design.transpose() *
            toy.obs_var.cwiseInverse().asDiagonal() * toy.design;
    const Eigen::VectorXd mean =
        q_post.ldlt().solve(toy.design.transpose() *
                            toy.obs_var.cwiseInverse().cwiseProduct(toy.y).eval());

    const auto approx = engine.find_mode(theta);
    CHECK((approx.mode - mean).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(approx.iterations <= 3);
}

TEST_CASE("conjugate gaussian marginal likelihood matches the analytic value") {
    auto toy = make_conjugate(6, 14, false, 202);
    InferenceEngine engine(toy.model);
    for (const double tau : {0.6, 1.0, 2.5}) {
        Eigen::VectorXd theta(1);
        theta << std::log(tau);
        const double got = engine.log_posterior_hyper(theta);
        CHECK(got == doctest::Approx(analytic_marginal(toy, tau)).epsilon(1e-6));
    }
}

TEST_CASE("constraint-corrected marginal likelihood matches the conditioned prior") {
    auto toy = make_conjugate(6, 14, true, 303);
    InferenceEngine engine(toy.model);
    for (const double tau : {0.8, 1.9}) {
        Eigen::VectorXd theta(1);
        theta << std::log(tau);
        const double got = engine.log_posterior_hyper(theta);
        CHECK(got == doctest::Approx(analytic_marginal_constrained(toy, tau)).epsilon(1e-6));
    }
}

TEST_CASE("log posterior returns minus infinity outside the domain") {
    auto toy = make_conjugate(5, 8, false, 404);
    InferenceEngine engine(toy.model);
    Eigen::VectorXd theta(1);
    theta << std::numeric_limits<double>::quiet_NaN();
    CHECK(engine.log_posterior_hyper(theta) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("optimizer matches a dense grid search on a one-hyper model") {
    auto toy = make_conjugate(6, 20, false, 505);
    InferenceEngine engine(toy.model);
    double best_grid = 0.0;
    double best_val = -1e300;
    for (int k = 0; k <= 400; ++k) {
        Eigen::VectorXd theta(1);
        theta << -3.0 + 6.0 * k / 400.0;
        const double v = engine.log_posterior_hyper(theta);
        if (v > best_val) {
            best_val = v;
            best_grid = theta[0];
        }
    }
    OptimOptions opts;
    opts.max_evals = 200;
    opts.f_tol = 1e-10;
    const auto result = engine.optimize_hyper(toy.model->initial_theta(), opts);
    CHECK(std::abs(result.theta[0] - best_grid) < 6.0 / 400.0 + 1e-3);

    // restarting from the optimum stays put
    OptimOptions tight = opts;
    tight.initial_step = 0.05;
    const auto again = engine.optimize_hyper(result.theta, tight);
    CHECK(std::abs(again.theta[0] - result.theta[0]) < 1e-4);
}

TEST_CASE("optimizer rejects a zero evaluation budget") {
    auto toy = make_conjugate(4, 6, false, 606);
    InferenceEngine engine(toy.model);
    OptimOptions opts;
    opts.max_evals = 0;
    CHECK_THROWS_AS(engine.optimize_hyper(toy.model->initial_theta(), opts),
                    std::invalid_argument);
}

TEST_CASE("a stronger precision prior never lowers the optimal precision") {
    // Exponential(lambda) prior on sigma: a larger rate concentrates on
    // smaller sigma, so the argmax of tau moves up (or stays).
    const auto cells = tiny_cells(4, 1);
    const auto graph = make_grid_graph(4);
    AgeBandSchema schema;
    ModelPriors weak;
    weak.curvature = {1.0, 0.5};     // lambda ~ 0.69
    ModelPriors strong;
    strong.curvature = {0.1, 0.01};  // lambda ~ 46
    const auto sm_weak = assemble_model(cells, graph, schema, Variant::AP, weak);
    const auto sm_strong = assemble_model(cells, graph, schema, Variant::AP, strong);
    InferenceEngine e_weak(sm_weak.model);
    InferenceEngine e_strong(sm_strong.model);
    OptimOptions opts;
    opts.max_evals = 250;
    const auto r_weak = e_weak.optimize_hyper(sm_weak.model->initial_theta(), opts);
    const auto r_strong = e_strong.optimize_hyper(sm_strong.model->initial_theta(), opts);
    CHECK(r_strong.theta[sm_strong.h_nu] >= r_weak.theta[sm_weak.h_nu] - 0.05);
}

TEST_CASE("zero-death data drives every hazard predictor negative but finite") {
    const auto cells = tiny_cells(4, 0);
    const auto graph = make_grid_graph(4);
    AgeBandSchema schema;
    const auto sm = assemble_model(cells, graph, schema, Variant::APC, ModelPriors{});
    InferenceEngine engine(sm.model);
    const auto approx = engine.find_mode(sm.model->initial_theta());
    for (const auto& obs : sm.model->observations()) {
        double eta = 0.0;
        for (int k = 0; k < obs.count; ++k) eta += obs.coef[k] * approx.mode[obs.idx[k]];
        CHECK(std::isfinite(eta));
        CHECK(eta < -2.0);
    }
}

TEST_CASE("a single-cell model converges within the iteration cap") {
    auto model = std::make_shared<LatentModel>();
    const int off = model->add_block("field", 1);
    model->add_diagonal_term(off, 1, 0.5);
    const int h_d = model->add_hyper({"logit_d", [](double) { return 0.0; }, logit(0.01)});
    model->overdispersion_hyper = h_d;
    LatentModel::Obs obs;
    obs.y = 2;
    obs.n_or_var = 30;
    obs.mult = 1.0;
    obs.count = 1;
    obs.idx[0] = off;
    obs.coef[0] = 1.0;
    model->add_observation(obs);
    model->obs_kind = LatentModel::ObsKind::BetaBinomial;
    model->finalize();
    InferenceEngine engine(model);
    Eigen::VectorXd theta(1);
    theta << logit(0.05);
    const auto approx = engine.find_mode(theta);
    CHECK(approx.iterations <= 50);
    CHECK(std::isfinite(approx.mode[0]));
}

TEST_CASE("posterior draws satisfy the constraints and reproduce the mode") {
    const auto cells = tiny_cells(5, 1);
    const auto graph = make_grid_graph(5);
    AgeBandSchema schema;
    const auto sm = assemble_model(cells, graph, schema, Variant::APC, ModelPriors{});
    InferenceEngine engine(sm.model);
    const auto approx = engine.find_mode(sm.model->initial_theta());
    const int n = 4000;
    const auto draws = engine.sample_latent(approx, n, 777);

    const auto& a = sm.model->constraint_matrix();
    const auto& e = sm.model->constraint_values();
    for (int s = 0; s < n; ++s) {
        const Eigen::VectorXd resid = a * draws.draws.row(s).transpose() - e;
        CHECK(resid.cwiseAbs().maxCoeff() < 1e-8);
    }

    // componentwise mean within 3 standard errors of the (projected) mode
    const Eigen::VectorXd mean = draws.draws.colwise().mean();
    for (int i = 0; i < sm.model->dim(); ++i) {
        const double sd = std::sqrt(
            (draws.draws.col(i).array() - mean[i]).square().sum() / (n - 1.0));
        const double se = sd / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mean[i] - approx.mode[i]) <= 3.5 * se + 1e-9);
    }

    // determinism under a fixed seed
    const auto again = engine.sample_latent(approx, 50, 777);
    CHECK((again.draws - draws.draws.topRows(50)).cwiseAbs().maxCoeff() == 0.0);

    // constrained sample covariance loses rank exactly for the constraints
    Eigen::MatrixXd centered = draws.draws.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / (n - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    int positive = 0;
    const double cut = 1e-10 * eig.eigenvalues().maxCoeff();
    for (int i = 0; i < eig.eigenvalues().size(); ++i) {
        if (eig.eigenvalues()[i] > cut) ++positive;
    }
    CHECK(positive <= sm.model->dim() - a.rows());
}

TEST_CASE("sample covariance matches the posterior covariance on the conjugate toy") {
    auto toy = make_conjugate(5, 12, false, 808);
    InferenceEngine engine(toy.model);
    Eigen::VectorXd theta(1);
    theta << std::log(1.1);
    const auto approx = engine.find_mode(theta);
    const auto draws = engine.sample_latent(approx, 30000, 3141);
    const Eigen::MatrixXd cov_true =
        Eigen::MatrixXd(approx.posterior_precision).inverse();
    const Eigen::VectorXd mean = draws.draws.colwise().mean();
    Eigen::MatrixXd centered = draws.draws.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / (draws.count() - 1.0);
    CHECK((cov - cov_true).cwiseAbs().maxCoeff() < 0.05 * cov_true.diagonal().maxCoeff());
}

TEST_CASE("log posterior is invariant to observation order") {
    auto toy = make_conjugate(6, 18, false, 909);
    // same observations, reversed
    auto reversed = std::make_shared<LatentModel>();
    const int off = reversed->add_block("field", 6);
    SpMat q0s = toy.q0.sparseView();
    reversed->add_precision_term(q0s, off, [](const Eigen::VectorXd& t) {
        return std::exp(t[0]);
    });
    reversed->add_hyper({"log_tau", [](double) { return 0.0; }, std::log(1.3)});
    auto obs_copy = toy.model->observations();
    std::reverse(obs_copy.begin(), obs_copy.end());
    for (const auto& o : obs_copy) reversed->add_observation(o);
    reversed->obs_kind = LatentModel::ObsKind::Gaussian;
    reversed->finalize();

    InferenceEngine e1(toy.model);
    InferenceEngine e2(reversed);
    Eigen::VectorXd theta(1);
    theta << std::log(1.4);
    CHECK(e1.log_posterior_hyper(theta) ==
          doctest::Approx(e2.log_posterior_hyper(theta)).epsilon(1e-10));
}

TEST_CASE("posterior factor fill is fixed across hyperparameter values") {
    const auto cells = tiny_cells(5, 1);
    const auto graph = make_grid_graph(5);
    AgeBandSchema schema;
    const auto sm = assemble_model(cells, graph, schema, Variant::APC, ModelPriors{});
    InferenceEngine engine(sm.model);
    Eigen::VectorXd theta = sm.model->initial_theta();
    engine.find_mode(theta);
    const long long nnz_a = engine.posterior_factor_nonzeros();
    theta.array() += 0.7;
    engine.find_mode(theta);
    const long long nnz_b = engine.posterior_factor_nonzeros();
    CHECK(nnz_a == nnz_b);
}

TEST_CASE("mcmc oracle agrees with the closed form on the conjugate toy") {
    auto toy = make_conjugate(5, 12, false, 1010);
    InferenceEngine engine(toy.model);
    Eigen::VectorXd theta(1);
    theta << std::log(1.2);

    const double tau = std::exp(theta[0]);
    const Eigen::MatrixXd q_post =
        tau * toy.q0 +
        toy.design.transpose() * toy.obs_var.cwiseInverse().asDiagonal() * toy.design;
    const Eigen::VectorXd mean =
        q_post.ldlt().solve(toy.design.transpose() *
                            toy.obs_var.cwiseInverse().cwiseProduct(toy.y).eval());

    McmcOptions opts;
    opts.iterations = 200000;
    const auto summary = engine.mcmc_reference(theta, opts, 99);
    CHECK(summary.acceptance_rate > 0.1);
    CHECK(summary.acceptance_rate < 0.6);
    for (int i = 0; i < 5; ++i) {
        // MC error of a correlated chain; tolerance in posterior sd units
        CHECK(std::abs(summary.mean[i] - mean[i]) < 0.05 * (1.0 + std::abs(mean[i])));
    }
}

TEST_CASE("mcmc oracle refuses large latent fields") {
    const auto cells = tiny_cells(12, 1);
    const auto graph = make_grid_graph(12);
    AgeBandSchema schema;
    const auto sm = assemble_model(cells, graph, schema, Variant::APC, ModelPriors{});
    InferenceEngine engine(sm.model);
    McmcOptions opts;
    opts.iterations = 10;
    opts.max_latent_dim = 50;
    CHECK_THROWS_AS(engine.mcmc_reference(sm.model->initial_theta(), opts, 1),
                    std::invalid_argument);
}

TEST_CASE("ccd design weights sum to one and sampling honors the mixture") {
    auto toy = make_conjugate(5, 12, false, 1111);
    InferenceEngine engine(toy.model);
    OptimOptions opts;
    opts.max_evals = 120;
    opts.compute_hessian = true;
    const auto result = engine.optimize_hyper(toy.model->initial_theta(), opts);
    REQUIRE(result.hessian.has_value());
    const auto design = engine.ccd_design(result.theta, *result.hessian);
    double total = 0.0;
    for (const auto& pt : design) total += pt.weight;
    CHECK(total == doctest::Approx(1.0));
    CHECK(design.size() == 1 + 2 * result.theta.size());
    const auto draws = engine.sample_latent_ccd(design, 200, 17);
    CHECK(draws.count() == 200);
}
