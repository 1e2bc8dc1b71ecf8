#include "precision.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace u5apc {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense_eigen(const SpMat& q,
                                                           bool vectors) {
    Eigen::MatrixXd dense(q);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.compute(dense, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed");
    }
    return solver;
}

double null_cut(const Eigen::VectorXd& evals, double tol) {
    const double max_ev = evals.size() ? evals.maxCoeff() : 0.0;
    return tol * std::max(max_ev, 1.0e-300);
}

} // namespace

int count_null_eigenvalues(const SpMat& q, double tol) {
    const auto solver = dense_eigen(q, false);
    const double cut = null_cut(solver.eigenvalues(), tol);
    int count = 0;
    for (int i = 0; i < solver.eigenvalues().size(); ++i) {
        if (solver.eigenvalues()[i] < cut) ++count;
    }
    return count;
}

Eigen::MatrixXd null_space_rows(const SpMat& q, int expected, double tol) {
    const auto solver = dense_eigen(q, true);
    const double cut = null_cut(solver.eigenvalues(), tol);
    int count = 0;
    for (int i = 0; i < solver.eigenvalues().size(); ++i) {
        if (solver.eigenvalues()[i] < cut) ++count;
    }
    if (expected >= 0 && count != expected) {
        throw std::runtime_error("null space dimension " + std::to_string(count) +
                                 " does not match declared deficiency " +
                                 std::to_string(expected));
    }
    Eigen::MatrixXd rows(count, q.rows());
    int r = 0;
    for (int i = 0; i < solver.eigenvalues().size(); ++i) {
        if (solver.eigenvalues()[i] < cut) {
            rows.row(r++) = solver.eigenvectors().col(i).transpose();
        }
    }
    return rows;
}

void check_rank_deficiency(const StructuredPrecision& q, double tol) {
    const int nulls = count_null_eigenvalues(q.matrix, tol);
    if (nulls != q.rank_deficiency) {
        throw std::runtime_error("declared rank deficiency " +
                                 std::to_string(q.rank_deficiency) +
                                 " but eigen-count gives " + std::to_string(nulls));
    }
}

StructuredPrecision scale_structure(const StructuredPrecision& q) {
    const Eigen::VectorXd marg = generalized_inverse_diag(q.matrix);
    double log_sum = 0.0;
    for (int i = 0; i < marg.size(); ++i) {
        if (marg[i] <= 0.0) {
            throw std::runtime_error("non-positive marginal variance while scaling structure");
        }
        log_sum += std::log(marg[i]);
    }
    const double geo_mean = std::exp(log_sum / static_cast<double>(marg.size()));
    StructuredPrecision scaled = q;
    scaled.matrix = SpMat(q.matrix * geo_mean);
    scaled.matrix.makeCompressed();
    return scaled;
}

Eigen::VectorXd generalized_inverse_diag(const SpMat& q, double tol) {
    const auto solver = dense_eigen(q, true);
    const double cut = null_cut(solver.eigenvalues(), tol);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(q.rows());
    for (int i = 0; i < solver.eigenvalues().size(); ++i) {
        const double ev = solver.eigenvalues()[i];
        if (ev >= cut) {
            diag += solver.eigenvectors().col(i).cwiseAbs2() / ev;
        }
    }
    return diag;
}

} // namespace u5apc
