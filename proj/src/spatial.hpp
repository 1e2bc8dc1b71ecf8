#pragma once

#include "precision.hpp"
#include "rng.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace u5apc {

// Region adjacency with symmetric neighbor lists and connected-component
// labels. Region order is fixed at construction and indexes every spatial
// structure built from the graph.
class AdjacencyGraph {
  public:
    AdjacencyGraph(std::vector<std::string> region_ids,
                   std::vector<std::vector<int>> neighbors);

    static AdjacencyGraph from_adjacency_file(const std::filesystem::path& path);
    // Polygon file: `region_id; x1 y1, x2 y2, ...` closed rings. Two regions
    // are adjacent when they share a polygon edge (an unordered vertex pair).
    static AdjacencyGraph from_polygon_file(const std::filesystem::path& path);

    void write_adjacency_file(const std::filesystem::path& path) const;

    int size() const { return static_cast<int>(region_ids_.size()); }
    const std::vector<std::string>& region_ids() const { return region_ids_; }
    const std::vector<int>& neighbors_of(int i) const { return neighbors_[i]; }
    int index_of(const std::string& region_id) const;  // -1 when unknown

    int component_count() const { return component_count_; }
    const std::vector<int>& component_labels() const { return components_; }

  private:
    std::vector<std::string> region_ids_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<int> components_;
    int component_count_ = 0;
};

// ICAR structure: Q_ii = degree(i), Q_ij = -1 for neighbors. Rank deficiency
// equals the number of connected components; constraints are per-component
// sum-to-zero rows.
StructuredPrecision icar_precision(const AdjacencyGraph& graph);

// Scales each connected component of an ICAR structure so its constrained
// generalized-inverse marginal variances have geometric mean one. Singleton
// components carry no structured variability and are skipped.
StructuredPrecision scale_icar(const StructuredPrecision& q);

// BYM2 augmented representation of S = (1/sqrt(tau)) (sqrt(1-phi) v + sqrt(phi) u*)
// over the joint vector (S, u*), with u* the scaled structured effect.
class Bym2Block {
  public:
    Bym2Block(StructuredPrecision scaled_icar);

    int regions() const { return scaled_.dim(); }
    int dim() const { return 2 * scaled_.dim(); }

    // Joint precision of (S, u*); requires tau > 0 and phi in [0, 1).
    SpMat joint_precision(double tau, double phi) const;

    // Constraints on the joint vector: sum-to-zero per component on the u* half.
    const Eigen::MatrixXd& constraints() const { return constraints_; }

    // Simulates S directly for any phi in [0, 1]; u* is drawn from the
    // constrained generalized inverse via its eigenpairs.
    Eigen::VectorXd simulate_total(double tau, double phi, Rng& rng) const;

    const StructuredPrecision& scaled_structure() const { return scaled_; }
    // Non-null eigenvalues of the scaled structure (for the PC mixing prior).
    const Eigen::VectorXd& structure_eigenvalues() const { return evals_pos_; }

  private:
    StructuredPrecision scaled_;
    Eigen::MatrixXd constraints_;     // k x 2R
    Eigen::VectorXd evals_pos_;       // positive eigenvalues of scaled structure
    Eigen::MatrixXd evecs_pos_;       // matching eigenvectors (columns)
};

} // namespace u5apc
