#include <doctest.h>

#include "aggregate.hpp"
#include "rng.hpp"
#include "validate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace u5apc;

TEST_CASE("interval score hand values") {
    CHECK(interval_score(-3, -2, -2.5, 0.05) == doctest::Approx(1.0));
    CHECK(interval_score(-3, -2, -1.9, 0.05) == doctest::Approx(5.0));
    CHECK(interval_score(-3, -2, -3.2, 0.05) == doctest::Approx(9.0));
    CHECK_THROWS_AS(interval_score(-2, -3, -2.5, 0.05), std::invalid_argument);
    CHECK_THROWS_AS(interval_score(-3, -2, -2.5, 0.0), std::invalid_argument);
}

TEST_CASE("for a covered point the narrowest interval scores best") {
    const double y = 0.3;
    const double best = interval_score(y - 0.01, y + 0.01, y, 0.05);
    for (double pad_lo : {0.05, 0.2, 0.5}) {
        for (double pad_hi : {0.05, 0.2, 0.5}) {
            CHECK(interval_score(y - pad_lo, y + pad_hi, y, 0.05) >= best);
        }
    }
}

namespace {

CVPrediction constant_prediction(const std::string& region, double value, double target,
                                 int n = 400) {
    CVPrediction p;
    p.region = region;
    p.period = 2013;
    p.raw_draws = Eigen::VectorXd::Constant(n, value);
    p.noisy_draws = p.raw_draws;
    p.direct_logit = target;
    p.direct_variance = 0.0;
    return p;
}

} // namespace

TEST_CASE("perfect predictions score zero error and full coverage") {
    const auto scores = score_cv({constant_prediction("A", -2.5, -2.5)});
    CHECK(scores.mae == doctest::Approx(0.0));
    CHECK(scores.mse == doctest::Approx(0.0));
    CHECK(scores.coverage50 == doctest::Approx(1.0));
    CHECK(scores.coverage05 == doctest::Approx(1.0));
    CHECK_THROWS_AS(score_cv({}), std::invalid_argument);
}

TEST_CASE("symmetric draws give the folded-normal mean absolute error") {
    Rng rng(21);
    const double s = 0.4;
    const int n = 40000;
    CVPrediction p;
    p.region = "A";
    p.period = 2013;
    p.direct_logit = -2.0;
    p.raw_draws.resize(n);
    for (int i = 0; i < n; ++i) p.raw_draws[i] = -2.0 + s * rng.normal();
    p.noisy_draws = p.raw_draws;
    const auto scores = score_cv({p});
    CHECK(scores.mae == doctest::Approx(s * std::sqrt(2.0 / std::numbers::pi)).epsilon(0.02));
    CHECK(scores.mse == doctest::Approx(s * s).epsilon(0.03));
}

TEST_CASE("coverage at the wider level dominates and widths nest") {
    Rng rng(31);
    std::vector<CVPrediction> preds;
    for (int r = 0; r < 30; ++r) {
        CVPrediction p;
        p.region = "R" + std::to_string(r);
        p.period = 2013;
        p.direct_logit = -2.0 + 0.8 * rng.normal();
        p.raw_draws.resize(500);
        for (int i = 0; i < 500; ++i) p.raw_draws[i] = -2.0 + 0.5 * rng.normal();
        p.noisy_draws = p.raw_draws;
        preds.push_back(std::move(p));
    }
    const auto scores = score_cv(preds);
    CHECK(scores.coverage05 >= scores.coverage50);
    for (const auto& p : preds) {
        const double w50 = empirical_quantile(p.noisy_draws, 0.75) -
                           empirical_quantile(p.noisy_draws, 0.25);
        const double w05 = empirical_quantile(p.noisy_draws, 0.975) -
                           empirical_quantile(p.noisy_draws, 0.025);
        CHECK(w05 >= w50);
    }
}

TEST_CASE("scores do not depend on region order") {
    Rng rng(41);
    std::vector<CVPrediction> preds;
    for (int r = 0; r < 12; ++r) {
        CVPrediction p;
        p.region = "R" + std::to_string(r);
        p.period = 2013;
        p.direct_logit = -2.5 + 0.3 * rng.normal();
        p.raw_draws.resize(300);
        for (int i = 0; i < 300; ++i) p.raw_draws[i] = -2.5 + 0.4 * rng.normal();
        p.noisy_draws = p.raw_draws;
        preds.push_back(std::move(p));
    }
    auto shuffled = preds;
    std::reverse(shuffled.begin(), shuffled.end());
    const auto a = score_cv(preds);
    const auto b = score_cv(shuffled);
    CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-12));
    CHECK(a.mse == doctest::Approx(b.mse).epsilon(1e-12));
    CHECK(a.is50 == doctest::Approx(b.is50).epsilon(1e-12));
    CHECK(a.is05 == doctest::Approx(b.is05).epsilon(1e-12));
    CHECK(a.coverage50 == doctest::Approx(b.coverage50));
    CHECK(a.coverage05 == doctest::Approx(b.coverage05));
}
