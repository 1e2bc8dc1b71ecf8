#include <doctest.h>

#include "oracles.hpp"
#include "rng.hpp"
#include "spatial.hpp"
#include "synth.hpp"

#include <filesystem>
#include <fstream>

using namespace u5apc;

namespace {

AdjacencyGraph path_graph(int n) {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> nb(n);
    for (int i = 0; i < n; ++i) {
        ids.push_back("p" + std::to_string(i));
        if (i > 0) nb[i].push_back(i - 1);
        if (i + 1 < n) nb[i].push_back(i + 1);
    }
    return AdjacencyGraph(std::move(ids), std::move(nb));
}

// Vertex-transitive ring with chords: every region sees the same structure,
// so the scaled marginal variances are exactly flat.
AdjacencyGraph circulant_graph(int n) {
    std::vector<std::string> ids;
    std::vector<std::vector<int>> nb(n);
    for (int i = 0; i < n; ++i) {
        ids.push_back("c" + std::to_string(i));
        nb[i] = {(i + 1) % n, (i + n - 1) % n, (i + 2) % n, (i + n - 2) % n};
    }
    return AdjacencyGraph(std::move(ids), std::move(nb));
}

} // namespace

TEST_CASE("ICAR on a path graph gives the degree-minus-adjacency matrix") {
    const auto q = icar_precision(path_graph(3));
    Eigen::MatrixXd expected(3, 3);
    expected << 1, -1, 0, -1, 2, -1, 0, -1, 1;
    CHECK((Eigen::MatrixXd(q.matrix) - expected).cwiseAbs().maxCoeff() == 0.0);
    CHECK(q.rank_deficiency == 1);
    CHECK(count_null_eigenvalues(q.matrix) == 1);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(3);
    CHECK((q.matrix * ones).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("two disconnected edges give deficiency two and per-component constraints") {
    std::vector<std::string> ids{"a", "b", "c", "d"};
    std::vector<std::vector<int>> nb{{1}, {0}, {3}, {2}};
    const auto q = icar_precision(AdjacencyGraph(std::move(ids), std::move(nb)));
    CHECK(q.rank_deficiency == 2);
    CHECK(count_null_eigenvalues(q.matrix) == 2);
    REQUIRE(q.constraints.rows() == 2);
    CHECK(q.constraints(0, 0) == 1.0);
    CHECK(q.constraints(0, 1) == 1.0);
    CHECK(q.constraints(0, 2) == 0.0);
    CHECK(q.constraints(1, 2) == 1.0);
    CHECK(q.constraints(1, 3) == 1.0);
}

TEST_CASE("a 47-region connected graph has deficiency one by eigen-count") {
    const auto graph = make_grid_graph(47);
    CHECK(graph.component_count() == 1);
    const auto q = icar_precision(graph);
    CHECK(count_null_eigenvalues(q.matrix) == 1);
}

TEST_CASE("asymmetric neighbor lists are rejected") {
    std::vector<std::string> ids{"a", "b"};
    std::vector<std::vector<int>> nb{{1}, {}};
    CHECK_THROWS_AS(AdjacencyGraph(std::move(ids), std::move(nb)), std::invalid_argument);
}

TEST_CASE("ICAR scaling matches the dense pseudo-inverse oracle and is idempotent") {
    const auto q = icar_precision(path_graph(3));
    const auto scaled = scale_icar(q);

    // Oracle: geometric mean of the diagonal of the constrained pseudo-inverse.
    const Eigen::MatrixXd pinv = oracle::pseudo_inverse(Eigen::MatrixXd(q.matrix));
    double log_gm = 0.0;
    for (int i = 0; i < 3; ++i) log_gm += std::log(pinv(i, i));
    const double factor = std::exp(log_gm / 3.0);
    CHECK((Eigen::MatrixXd(scaled.matrix) - factor * Eigen::MatrixXd(q.matrix))
              .cwiseAbs()
              .maxCoeff() < 1e-10);

    const auto twice = scale_icar(scaled);
    CHECK((Eigen::MatrixXd(twice.matrix) - Eigen::MatrixXd(scaled.matrix)).cwiseAbs().maxCoeff() <
          1e-10);

    // After scaling, the generalized-inverse diagonal has geometric mean one.
    const Eigen::VectorXd marg = generalized_inverse_diag(scaled.matrix);
    double check = 0.0;
    for (int i = 0; i < marg.size(); ++i) check += std::log(marg[i]);
    CHECK(std::abs(check) < 1e-10);
}

TEST_CASE("singleton components are skipped by scaling") {
    std::vector<std::string> ids{"a", "b", "island"};
    std::vector<std::vector<int>> nb{{1}, {0}, {}};
    const auto q = icar_precision(AdjacencyGraph(std::move(ids), std::move(nb)));
    CHECK(q.rank_deficiency == 2);
    const auto scaled = scale_icar(q);
    // the island row stays identically zero
    CHECK(Eigen::MatrixXd(scaled.matrix)(2, 2) == 0.0);
}

TEST_CASE("BYM2 with phi zero is marginally independent with variance one over tau") {
    const auto scaled = scale_icar(icar_precision(circulant_graph(12)));
    Bym2Block bym2(scaled);
    const double tau = 2.5;
    Rng rng(99);
    const int n = 20000;
    double mean_sq = 0.0;
    for (int s = 0; s < n; ++s) {
        const Eigen::VectorXd total = bym2.simulate_total(tau, 0.0, rng);
        mean_sq += total.cwiseAbs2().mean();
    }
    mean_sq /= n;
    CHECK(mean_sq == doctest::Approx(1.0 / tau).epsilon(0.03));

    // joint precision at phi=0 decouples S from u*
    const SpMat joint = bym2.joint_precision(tau, 0.0);
    CHECK(Eigen::MatrixXd(joint).block(0, 12, 12, 12).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("BYM2 with phi one is the scaled structured effect") {
    const auto scaled = scale_icar(icar_precision(circulant_graph(12)));
    Bym2Block bym2(scaled);
    const double tau = 4.0;
    Rng rng(123);
    const int n = 20000;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(12);
    for (int s = 0; s < n; ++s) {
        const Eigen::VectorXd total = bym2.simulate_total(tau, 1.0, rng);
        var += total.cwiseAbs2();
    }
    var /= n;
    // geometric mean of marginal variances equals 1/tau (unit generalized
    // variance by scaling)
    double log_gm = 0.0;
    for (int i = 0; i < 12; ++i) log_gm += std::log(var[i]);
    CHECK(std::exp(log_gm / 12.0) == doctest::Approx(1.0 / tau).epsilon(0.03));
}

TEST_CASE("BYM2 marginal generalized variance tracks one over tau at posterior scale") {
    // 47 regions, phi and tau at the magnitudes a real fit produces.
    const auto scaled = scale_icar(icar_precision(circulant_graph(47)));
    Bym2Block bym2(scaled);
    const double tau = 8.3;
    const double phi = 0.5;
    Rng rng(2024);
    const int n = 10000;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(47);
    for (int s = 0; s < n; ++s) {
        var += bym2.simulate_total(tau, phi, rng).cwiseAbs2();
    }
    var /= n;
    double log_gm = 0.0;
    for (int i = 0; i < 47; ++i) log_gm += std::log(var[i]);
    CHECK(std::exp(log_gm / 47.0) == doctest::Approx(1.0 / tau).epsilon(0.02));
}

TEST_CASE("BYM2 generalized variance is one over tau across the phi range") {
    const auto scaled = scale_icar(icar_precision(circulant_graph(16)));
    Bym2Block bym2(scaled);
    const double tau = 3.0;
    for (const double phi : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        Rng rng(static_cast<std::uint64_t>(1000 * phi) + 7);
        Eigen::VectorXd var = Eigen::VectorXd::Zero(16);
        const int n = 12000;
        for (int s = 0; s < n; ++s) var += bym2.simulate_total(tau, phi, rng).cwiseAbs2();
        var /= n;
        double log_gm = 0.0;
        for (int i = 0; i < 16; ++i) log_gm += std::log(var[i]);
        CHECK(std::exp(log_gm / 16.0) == doctest::Approx(1.0 / tau).epsilon(0.04));
    }
}

TEST_CASE("BYM2 rejects parameters outside their ranges") {
    const auto scaled = scale_icar(icar_precision(path_graph(4)));
    Bym2Block bym2(scaled);
    CHECK_THROWS_AS(bym2.joint_precision(-1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(bym2.joint_precision(1.0, 1.0), std::invalid_argument);
    Rng rng(1);
    CHECK_THROWS_AS(bym2.simulate_total(1.0, 1.5, rng), std::invalid_argument);
}

TEST_CASE("adjacency files round-trip and polygons derive shared-edge adjacency") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "u5apc_spatial_test";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "adjacency.txt");
        out << "A: B,C\n";
        out << "B: A\n";
        out << "C: A\n";
    }
    const auto graph = AdjacencyGraph::from_adjacency_file(dir / "adjacency.txt");
    CHECK(graph.size() == 3);
    CHECK(graph.neighbors_of(0).size() == 2);
    CHECK(graph.component_count() == 1);
    graph.write_adjacency_file(dir / "echo.txt");
    const auto echo = AdjacencyGraph::from_adjacency_file(dir / "echo.txt");
    CHECK(echo.size() == 3);
    CHECK(echo.neighbors_of(0) == graph.neighbors_of(0));

    {
        // two unit squares sharing an edge plus a detached square
        std::ofstream out(dir / "polygons.txt");
        out << "A; 0 0, 1 0, 1 1, 0 1\n";
        out << "B; 1 0, 2 0, 2 1, 1 1\n";
        out << "C; 5 5, 6 5, 6 6, 5 6\n";
    }
    const auto poly = AdjacencyGraph::from_polygon_file(dir / "polygons.txt");
    CHECK(poly.size() == 3);
    CHECK(poly.neighbors_of(0) == std::vector<int>{1});
    CHECK(poly.neighbors_of(2).empty());
    CHECK(poly.component_count() == 2);
    fs::remove_all(dir);
}
