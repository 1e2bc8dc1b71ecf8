#pragma once

#include "precision.hpp"

namespace u5apc {

// Type IV space-period interaction block: precision is Q_period (x) Q_space
// with the space index running fastest, so entry (p, r) lives at p * S + r.
struct InteractionBlock {
    SpMat precision;          // (P*S) x (P*S)
    int periods = 0;          // P
    int regions = 0;          // S
    int declared_nullity = 0; // P*S - (P-2)*(S-c)
    Eigen::MatrixXd constraints;  // filled by null_space_constraints
};

// Builds the Kronecker-product precision. Expects an RW2 period factor
// (rank deficiency 2) and an ICAR space factor (deficiency = component
// count). `max_dim` guards against accidental huge products.
InteractionBlock kronecker_precision(const StructuredPrecision& q_period,
                                     const StructuredPrecision& q_space,
                                     int max_dim = 20000);

// Orthonormal eigenvectors of the zero eigenvalues, as constraint rows.
// Errors hard when the eigen-count disagrees with the declared nullity.
Eigen::MatrixXd null_space_constraints(const InteractionBlock& block,
                                       double tol = kNullEigenTol);

} // namespace u5apc
