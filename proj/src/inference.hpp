#pragma once

#include "model.hpp"
#include "rng.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <optional>
#include <vector>

namespace u5apc {

// Gaussian approximation of the latent posterior at fixed hyperparameters.
struct GaussianApprox {
    Eigen::VectorXd theta;
    Eigen::VectorXd mode;      // constraint-projected mode
    Eigen::VectorXd raw_mode;  // unconstrained penalized-likelihood mode
    SpMat posterior_precision;
    double log_det_posterior = 0.0;
    double log_det_prior = 0.0;
    double loglik_at_mode = 0.0;
    double prior_quad_at_mode = 0.0;  // x' Q_prior x
    int iterations = 0;
};

struct PosteriorDraws {
    Eigen::MatrixXd draws;  // one row per draw
    Eigen::VectorXd theta;
    int count() const { return static_cast<int>(draws.rows()); }
};

struct OptimOptions {
    int max_evals = 400;
    double f_tol = 1e-4;
    double initial_step = 0.5;
    bool compute_hessian = false;
    double hessian_step = 0.05;
};

struct OptimResult {
    Eigen::VectorXd theta;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
    std::optional<Eigen::MatrixXd> hessian;  // of log posterior, internal scale
};

struct McmcOptions {
    long long iterations = 100000;
    long long burn_in = -1;      // default iterations / 5
    double initial_step = 0.5;
    int max_latent_dim = 200;
};

struct McmcSummary {
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    double acceptance_rate = 0.0;
    long long iterations = 0;
};

struct CcdPoint {
    Eigen::VectorXd theta;
    double weight = 0.0;
};

// Empirical-Bayes Laplace engine. One instance per model; instances hold
// reusable factorization workspaces and a warm-start mode, so they are not
// safe to share across threads. The model itself is read-only.
class InferenceEngine {
  public:
    explicit InferenceEngine(std::shared_ptr<const LatentModel> model);

    // Newton ascent on the latent field at fixed theta. Converges when the
    // gradient max-norm drops below grad_tol; throws on non-convergence.
    GaussianApprox find_mode(const Eigen::VectorXd& theta, int max_iterations = 50,
                             double grad_tol = 1e-6);

    // Laplace approximation of log p(theta | y) up to a constant, with the
    // constraint-corrected determinant terms. Returns -inf outside the
    // domain; propagates mode-finding failures.
    double log_posterior_hyper(const Eigen::VectorXd& theta,
                               GaussianApprox* approx_out = nullptr);

    // Derivative-free ascent (Nelder-Mead) on log_posterior_hyper.
    OptimResult optimize_hyper(const Eigen::VectorXd& theta0, const OptimOptions& opts = {});

    // N draws from the Gaussian approximation, each corrected by
    // conditioning-by-kriging so every draw satisfies Ax = e.
    PosteriorDraws sample_latent(const GaussianApprox& approx, int n, std::uint64_t seed);

    // Random-walk Metropolis oracle at fixed theta with constraint
    // projection; for validating the Laplace approximation on small models.
    McmcSummary mcmc_reference(const Eigen::VectorXd& theta, const McmcOptions& opts,
                               std::uint64_t seed);

    // Central-composite design over the hyperparameter posterior (center +
    // axial points in the standardized metric); weights sum to one.
    std::vector<CcdPoint> ccd_design(const Eigen::VectorXd& theta_hat,
                                     const Eigen::MatrixXd& hessian, double radius_scale = 1.2);

    // Draws allocated across CCD points proportionally to the reweighted
    // design (mixture over conditional Gaussian approximations).
    PosteriorDraws sample_latent_ccd(const std::vector<CcdPoint>& design, int n,
                                     std::uint64_t seed);

    const LatentModel& model() const { return *model_; }
    // Fill of the posterior factor under the fixed elimination ordering.
    long long posterior_factor_nonzeros() const;

    double objective(const Eigen::VectorXd& theta, const Eigen::VectorXd& x) const;

  private:
    void assemble_posterior();
    double likelihood_pass(const Eigen::VectorXd& x, double d, bool value_only);
    void build_prior(const Eigen::VectorXd& theta);
    Eigen::VectorXd krige(const Eigen::VectorXd& x) const;

    std::shared_ptr<const LatentModel> model_;
    int dim_ = 0;

    SpMat pattern_;        // union sparsity of prior + B' W B
    SpMat prior_pattern_;  // prior-only sparsity
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> post_solver_;
    Eigen::SimplicialLDLT<SpMat, Eigen::Lower> prior_solver_;
    bool post_analyzed_ = false;
    SpMat q_prior_;  // values for the current theta
    SpMat q_post_;

    // dense scatter buffers (dim <= kDenseLimit)
    static constexpr int kDenseLimit = 2048;
    Eigen::MatrixXd scatter_;

    std::vector<double> obs_eta_;
    std::vector<double> obs_d1_;
    std::vector<double> obs_w_;

    Eigen::VectorXd warm_mode_;
    bool have_warm_ = false;
};

} // namespace u5apc
