#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace u5apc {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Relative eigenvalue threshold below which a mode counts as null.
constexpr double kNullEigenTol = 1e-8;

// A sparse symmetric non-negative-definite precision structure together with
// its declared rank deficiency and the linear constraints Ax = e that make
// the implied field proper.
struct StructuredPrecision {
    SpMat matrix;
    int rank_deficiency = 0;
    Eigen::MatrixXd constraints;        // k x n, possibly 0 x n
    Eigen::VectorXd constraint_values;  // k (zeros for intrinsic structures)

    int dim() const { return static_cast<int>(matrix.rows()); }
};

// Eigenvalue count below tol * max-eigenvalue. Dense symmetric solve; meant
// for structure construction and verification, not per-iteration work.
int count_null_eigenvalues(const SpMat& q, double tol = kNullEigenTol);

// Orthonormal rows spanning the numerical null space. Throws when the count
// differs from `expected` (expected < 0 skips the check).
Eigen::MatrixXd null_space_rows(const SpMat& q, int expected = -1,
                                double tol = kNullEigenTol);

// Verifies `declared rank_deficiency == dim - numerical rank`.
void check_rank_deficiency(const StructuredPrecision& q, double tol = kNullEigenTol);

// Diagonal of the constrained generalized inverse: sum over non-null
// eigenpairs of v v^T / lambda.
Eigen::VectorXd generalized_inverse_diag(const SpMat& q, double tol = kNullEigenTol);

// Multiplies the whole structure by the geometric mean of its constrained
// generalized-inverse marginal variances, giving unit generalized variance.
// For component-wise ICAR scaling use scale_icar (spatial module).
StructuredPrecision scale_structure(const StructuredPrecision& q);

} // namespace u5apc
