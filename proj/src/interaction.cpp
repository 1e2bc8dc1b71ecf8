#include "interaction.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace u5apc {

InteractionBlock kronecker_precision(const StructuredPrecision& q_period,
                                     const StructuredPrecision& q_space, int max_dim) {
    const int p = q_period.dim();
    const int s = q_space.dim();
    if (static_cast<long long>(p) * s > max_dim) {
        throw std::invalid_argument("interaction dimension " + std::to_string(p) + "x" +
                                    std::to_string(s) + " exceeds the configured limit");
    }
    InteractionBlock block;
    block.periods = p;
    block.regions = s;
    const int space_components = q_space.rank_deficiency;
    block.declared_nullity = p * s - (p - q_period.rank_deficiency) * (s - space_components);

    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(q_period.matrix.nonZeros()) *
                  static_cast<std::size_t>(q_space.matrix.nonZeros()));
    for (int po = 0; po < q_period.matrix.outerSize(); ++po) {
        for (SpMat::InnerIterator pit(q_period.matrix, po); pit; ++pit) {
            for (int so = 0; so < q_space.matrix.outerSize(); ++so) {
                for (SpMat::InnerIterator sit(q_space.matrix, so); sit; ++sit) {
                    trips.emplace_back(static_cast<int>(pit.row()) * s + static_cast<int>(sit.row()),
                                       static_cast<int>(pit.col()) * s + static_cast<int>(sit.col()),
                                       pit.value() * sit.value());
                }
            }
        }
    }
    block.precision.resize(p * s, p * s);
    block.precision.setFromTriplets(trips.begin(), trips.end());
    return block;
}

Eigen::MatrixXd null_space_constraints(const InteractionBlock& block, double tol) {
    Eigen::MatrixXd rows;
    try {
        rows = null_space_rows(block.precision, block.declared_nullity, tol);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(std::string("interaction null space: ") + e.what());
    }
    return rows;
}

} // namespace u5apc
