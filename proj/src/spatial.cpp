#include "spatial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace u5apc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

AdjacencyGraph::AdjacencyGraph(std::vector<std::string> region_ids,
                               std::vector<std::vector<int>> neighbors)
    : region_ids_(std::move(region_ids)), neighbors_(std::move(neighbors)) {
    const int n = size();
    if (neighbors_.size() != region_ids_.size()) {
        throw std::invalid_argument("neighbor lists and region ids differ in length");
    }
    for (int i = 0; i < n; ++i) {
        std::sort(neighbors_[i].begin(), neighbors_[i].end());
        neighbors_[i].erase(std::unique(neighbors_[i].begin(), neighbors_[i].end()),
                            neighbors_[i].end());
        for (int j : neighbors_[i]) {
            if (j < 0 || j >= n) throw std::invalid_argument("neighbor index out of range");
            if (j == i) throw std::invalid_argument("self-loop in adjacency");
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j : neighbors_[i]) {
            if (!std::binary_search(neighbors_[j].begin(), neighbors_[j].end(), i)) {
                throw std::invalid_argument("asymmetric adjacency: " + region_ids_[i] +
                                            " ~ " + region_ids_[j]);
            }
        }
    }
    // Connected components by BFS.
    components_.assign(n, -1);
    component_count_ = 0;
    for (int start = 0; start < n; ++start) {
        if (components_[start] >= 0) continue;
        std::vector<int> stack{start};
        components_[start] = component_count_;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : neighbors_[v]) {
                if (components_[w] < 0) {
                    components_[w] = component_count_;
                    stack.push_back(w);
                }
            }
        }
        ++component_count_;
    }
}

int AdjacencyGraph::index_of(const std::string& region_id) const {
    for (int i = 0; i < size(); ++i) {
        if (region_ids_[i] == region_id) return i;
    }
    return -1;
}

AdjacencyGraph AdjacencyGraph::from_adjacency_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open adjacency file '" + path.string() + "'");
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> neighbor_names;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw std::runtime_error("adjacency line missing ':' — " + line);
        }
        ids.push_back(trim(line.substr(0, colon)));
        std::vector<std::string> names;
        std::istringstream rest(line.substr(colon + 1));
        std::string tok;
        while (std::getline(rest, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) names.push_back(tok);
        }
        neighbor_names.push_back(std::move(names));
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!index.emplace(ids[i], static_cast<int>(i)).second) {
            throw std::runtime_error("duplicate region id '" + ids[i] + "'");
        }
    }
    std::vector<std::vector<int>> neighbors(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (const auto& name : neighbor_names[i]) {
            auto it = index.find(name);
            if (it == index.end()) {
                throw std::runtime_error("unknown neighbor id '" + name + "'");
            }
            neighbors[i].push_back(it->second);
        }
    }
    return AdjacencyGraph(std::move(ids), std::move(neighbors));
}

AdjacencyGraph AdjacencyGraph::from_polygon_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open polygon file '" + path.string() + "'");
    using Vertex = std::pair<long long, long long>;
    using Edge = std::pair<Vertex, Vertex>;
    const double scale = 1e7;  // exact comparison on fixed-point coordinates
    std::vector<std::string> ids;
    std::map<Edge, std::set<int>> edge_owners;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto semi = line.find(';');
        if (semi == std::string::npos) {
            throw std::runtime_error("polygon line missing ';' — " + line);
        }
        const int region = static_cast<int>(ids.size());
        ids.push_back(trim(line.substr(0, semi)));
        std::vector<Vertex> ring;
        std::istringstream rest(line.substr(semi + 1));
        std::string pair_tok;
        while (std::getline(rest, pair_tok, ',')) {
            std::istringstream ps(pair_tok);
            double x = 0.0;
            double y = 0.0;
            if (!(ps >> x >> y)) {
                throw std::runtime_error("polygon vertex not 'x y' — " + pair_tok);
            }
            ring.emplace_back(static_cast<long long>(std::llround(x * scale)),
                              static_cast<long long>(std::llround(y * scale)));
        }
        if (ring.size() < 3) {
            throw std::runtime_error("polygon for '" + ids.back() + "' has fewer than 3 vertices");
        }
        for (std::size_t i = 0; i < ring.size(); ++i) {
            Vertex a = ring[i];
            Vertex b = ring[(i + 1) % ring.size()];
            if (b < a) std::swap(a, b);
            edge_owners[{a, b}].insert(region);
        }
    }
    std::vector<std::set<int>> neighbor_sets(ids.size());
    for (const auto& [edge, owners] : edge_owners) {
        for (int a : owners) {
            for (int b : owners) {
                if (a != b) neighbor_sets[a].insert(b);
            }
        }
    }
    std::vector<std::vector<int>> neighbors(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        neighbors[i].assign(neighbor_sets[i].begin(), neighbor_sets[i].end());
    }
    return AdjacencyGraph(std::move(ids), std::move(neighbors));
}

void AdjacencyGraph::write_adjacency_file(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write adjacency file '" + path.string() + "'");
    for (int i = 0; i < size(); ++i) {
        out << region_ids_[i] << ":";
        for (std::size_t k = 0; k < neighbors_[i].size(); ++k) {
            out << (k ? "," : " ") << region_ids_[neighbors_[i][k]];
        }
        out << "\n";
    }
}

StructuredPrecision icar_precision(const AdjacencyGraph& graph) {
    const int n = graph.size();
    if (n == 0) throw std::invalid_argument("empty adjacency graph");
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(n) * 4);
    for (int i = 0; i < n; ++i) {
        const auto& nb = graph.neighbors_of(i);
        trips.emplace_back(i, i, static_cast<double>(nb.size()));
        for (int j : nb) trips.emplace_back(i, j, -1.0);
    }
    StructuredPrecision q;
    q.matrix.resize(n, n);
    q.matrix.setFromTriplets(trips.begin(), trips.end());
    q.rank_deficiency = graph.component_count();
    q.constraints = Eigen::MatrixXd::Zero(graph.component_count(), n);
    for (int i = 0; i < n; ++i) {
        q.constraints(graph.component_labels()[i], i) = 1.0;
    }
    q.constraint_values = Eigen::VectorXd::Zero(graph.component_count());
    return q;
}

StructuredPrecision scale_icar(const StructuredPrecision& q) {
    const int n = q.dim();
    // Component labels recovered from the constraint rows (one per component).
    std::vector<int> label(n, -1);
    for (int c = 0; c < q.constraints.rows(); ++c) {
        for (int i = 0; i < n; ++i) {
            if (q.constraints(c, i) != 0.0) label[i] = c;
        }
    }
    for (int i = 0; i < n; ++i) {
        if (label[i] < 0) throw std::invalid_argument("scale_icar requires ICAR constraints");
    }
    StructuredPrecision scaled = q;
    for (int c = 0; c < q.constraints.rows(); ++c) {
        std::vector<int> members;
        for (int i = 0; i < n; ++i) {
            if (label[i] == c) members.push_back(i);
        }
        if (members.size() < 2) continue;  // singleton: no structured variability
        SpMat sub(static_cast<int>(members.size()), static_cast<int>(members.size()));
        std::vector<Triplet> trips;
        std::vector<int> pos(n, -1);
        for (std::size_t k = 0; k < members.size(); ++k) pos[members[k]] = static_cast<int>(k);
        for (int i : members) {
            for (SpMat::InnerIterator it(q.matrix, i); it; ++it) {
                if (pos[it.row()] >= 0) {
                    trips.emplace_back(pos[it.row()], pos[i], it.value());
                }
            }
        }
        sub.setFromTriplets(trips.begin(), trips.end());
        const Eigen::VectorXd marg = generalized_inverse_diag(sub);
        const int expected_null = 1;
        if (count_null_eigenvalues(sub) != expected_null) {
            throw std::runtime_error("component is singular beyond its declared deficiency");
        }
        double log_sum = 0.0;
        for (int k = 0; k < marg.size(); ++k) {
            if (marg[k] <= 0.0) {
                throw std::runtime_error("non-positive marginal variance during ICAR scaling");
            }
            log_sum += std::log(marg[k]);
        }
        const double geo_mean = std::exp(log_sum / static_cast<double>(marg.size()));
        for (int i : members) {
            for (SpMat::InnerIterator it(scaled.matrix, i); it; ++it) {
                if (pos[it.row()] >= 0) it.valueRef() = it.value() * geo_mean;
            }
        }
    }
    scaled.matrix.makeCompressed();
    return scaled;
}

Bym2Block::Bym2Block(StructuredPrecision scaled_icar) : scaled_(std::move(scaled_icar)) {
    const int r = scaled_.dim();
    const int k = static_cast<int>(scaled_.constraints.rows());
    constraints_ = Eigen::MatrixXd::Zero(k, 2 * r);
    constraints_.rightCols(r) = scaled_.constraints;

    Eigen::MatrixXd dense(scaled_.matrix);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
    const double cut = kNullEigenTol * std::max(solver.eigenvalues().maxCoeff(), 1e-300);
    int positive = 0;
    for (int i = 0; i < r; ++i) {
        if (solver.eigenvalues()[i] >= cut) ++positive;
    }
    evals_pos_.resize(positive);
    evecs_pos_.resize(r, positive);
    int col = 0;
    for (int i = 0; i < r; ++i) {
        if (solver.eigenvalues()[i] >= cut) {
            evals_pos_[col] = solver.eigenvalues()[i];
            evecs_pos_.col(col) = solver.eigenvectors().col(i);
            ++col;
        }
    }
}

SpMat Bym2Block::joint_precision(double tau, double phi) const {
    if (tau <= 0.0) throw std::invalid_argument("BYM2 tau must be positive");
    if (phi < 0.0 || phi >= 1.0) {
        throw std::invalid_argument("BYM2 joint precision requires phi in [0, 1)");
    }
    const int r = regions();
    const double a = tau / (1.0 - phi);
    const double b = -std::sqrt(phi * tau) / (1.0 - phi);
    const double c = phi / (1.0 - phi);
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(scaled_.matrix.nonZeros()) + 4 * r);
    for (int i = 0; i < r; ++i) {
        trips.emplace_back(i, i, a);
        trips.emplace_back(i, r + i, b);
        trips.emplace_back(r + i, i, b);
        trips.emplace_back(r + i, r + i, c);
    }
    for (int o = 0; o < scaled_.matrix.outerSize(); ++o) {
        for (SpMat::InnerIterator it(scaled_.matrix, o); it; ++it) {
            trips.emplace_back(r + static_cast<int>(it.row()), r + static_cast<int>(it.col()),
                               it.value());
        }
    }
    SpMat joint(2 * r, 2 * r);
    joint.setFromTriplets(trips.begin(), trips.end());
    return joint;
}

Eigen::VectorXd Bym2Block::simulate_total(double tau, double phi, Rng& rng) const {
    if (tau <= 0.0) throw std::invalid_argument("BYM2 tau must be positive");
    if (phi < 0.0 || phi > 1.0) throw std::invalid_argument("BYM2 phi must lie in [0, 1]");
    const int r = regions();
    Eigen::VectorXd structured = Eigen::VectorXd::Zero(r);
    for (int k = 0; k < evals_pos_.size(); ++k) {
        structured += evecs_pos_.col(k) * (rng.normal() / std::sqrt(evals_pos_[k]));
    }
    Eigen::VectorXd total(r);
    for (int i = 0; i < r; ++i) {
        total[i] = (std::sqrt(1.0 - phi) * rng.normal() + std::sqrt(phi) * structured[i]) /
                   std::sqrt(tau);
    }
    return total;
}

} // namespace u5apc
