#include <doctest.h>

#include "aggregate.hpp"
#include "direct.hpp"
#include "likelihood.hpp"
#include "oracles.hpp"
#include "rng.hpp"
#include "synth.hpp"

#include <cmath>

using namespace u5apc;

namespace {

BirthRecord record(const std::string& id, const std::string& cluster, int birth_month_idx,
                   int death_offset, double weight, const std::string& region = "r1",
                   bool urban = false) {
    BirthRecord rec;
    rec.child_id = id;
    rec.cluster_id = cluster;
    rec.region_id = region;
    rec.is_urban = urban;
    rec.weight = weight;
    rec.birth_month = birth_month_idx;
    rec.interview_month = make_month(2014, 6);
    if (death_offset >= 0) rec.death_month = rec.birth_month + death_offset;
    return rec;
}

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.regions = 4;
    cfg.first_period = 2009;
    cfg.last_period = 2013;
    cfg.eas_urban_min = 3;
    cfg.eas_urban_max = 5;
    cfg.eas_rural_min = 3;
    cfg.eas_rural_max = 6;
    cfg.ea_households_min = 30;
    cfg.ea_households_max = 60;
    cfg.births_per_household_year = 0.25;
    cfg.base_age_logit = {-3.0, -5.0, -6.0, -6.5, -6.5, -6.5};
    cfg.cluster_sd = 0.0;
    return cfg;
}

} // namespace

TEST_CASE("equal weights in a single cluster reduce to unweighted ratios") {
    AgeBandSchema schema;
    // births spread over five years so every band carries 2010 exposure
    const auto build = [&](double weight) {
        std::vector<BirthRecord> recs;
        for (int i = 0; i < 60; ++i) {
            recs.push_back(record("c" + std::to_string(i), "cl1", make_month(2005, 7) + i,
                                  i == 55 ? 2 : -1, weight));
        }
        return recs;
    };
    const WeightedTallies weighted(build(3.7), schema);
    const WeightedTallies unweighted(build(1.0), schema);
    const auto a = weighted.estimate("r1", 2010);
    const auto b = unweighted.estimate("r1", 2010);
    REQUIRE(a.defined);
    REQUIRE(b.defined);
    CHECK(a.logit_u5mr == doctest::Approx(b.logit_u5mr).epsilon(1e-13));
    CHECK(a.n_clusters == 1);
    const auto ha = weighted.band_hazards("r1", 2010);
    const auto hb = unweighted.band_hazards("r1", 2010);
    for (int band = 0; band < AgeBandSchema::kBands; ++band) {
        CHECK(ha[band] == doctest::Approx(hb[band]).epsilon(1e-13));
    }
}

TEST_CASE("two clusters with weights two and one give band hazard two thirtieths") {
    AgeBandSchema schema;
    std::vector<BirthRecord> recs;
    // cluster A (weight 2): 10 band-0 months with 1 death; cluster B
    // (weight 1): 10 band-0 months, none. Interviews one month after birth
    // keep each child to a single band-0 month.
    for (int i = 0; i < 10; ++i) {
        BirthRecord a = record("a" + std::to_string(i), "A", make_month(2013, 1),
                               i == 0 ? 0 : -1, 2.0);
        a.interview_month = make_month(2013, 2);
        recs.push_back(a);
        BirthRecord b = record("b" + std::to_string(i), "B", make_month(2013, 1), -1, 1.0);
        b.interview_month = make_month(2013, 2);
        recs.push_back(b);
    }
    const WeightedTallies tallies(recs, schema);
    const auto hazards = tallies.band_hazards("r1", 2013);
    CHECK(hazards[0] == doctest::Approx(2.0 / 30.0).epsilon(1e-14));
    CHECK(std::isnan(hazards[1]));
    // without exposure in every band the full estimate stays undefined
    const auto est = tallies.estimate("r1", 2013);
    CHECK_FALSE(est.defined);
    CHECK(est.reason == "no exposure in band 1");
}

TEST_CASE("rescaling all weights leaves the point estimate unchanged") {
    const SyntheticPopulation pop(small_config(), 42);
    SurveyDesign design;
    design.clusters_per_stratum = 3;
    design.households_per_cluster = 20;
    auto draw = draw_survey(pop, design, 7);
    AgeBandSchema schema;
    const WeightedTallies base(draw.records, schema);
    auto scaled_records = draw.records;
    for (auto& rec : scaled_records) rec.weight *= 13.7;
    const WeightedTallies scaled(scaled_records, schema);
    for (const auto& region : base.regions()) {
        for (int p = 2010; p <= 2013; ++p) {
            const auto a = base.estimate(region, p);
            const auto b = scaled.estimate(region, p);
            CHECK(a.defined == b.defined);
            if (a.defined) {
                CHECK(a.logit_u5mr == doctest::Approx(b.logit_u5mr).epsilon(1e-12));
                CHECK(a.variance == doctest::Approx(b.variance).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("census enumeration reproduces the finite-population value exactly") {
    const SyntheticPopulation pop(small_config(), 99);
    const auto census = pop.census_records();
    REQUIRE(census.size() > 100);
    AgeBandSchema schema;
    const WeightedTallies tallies(census, schema);

    // finite-population value computed independently from the same records
    for (int p = 2011; p <= 2013; ++p) {
        std::array<double, 6> deaths{};
        std::array<double, 6> exposure{};
        for (const auto& rec : census) {
            for (const auto& pm : expand_birth_history(rec, schema)) {
                if (pm.period != p) continue;
                deaths[pm.age_band] += pm.died;
                exposure[pm.age_band] += pm.months_at_risk;
            }
        }
        bool all_bands = true;
        double death_total = 0.0;
        std::array<double, 6> hazards{};
        for (int b = 0; b < 6; ++b) {
            if (exposure[b] <= 0) all_bands = false;
            else hazards[b] = deaths[b] / exposure[b];
            death_total += deaths[b];
        }
        const auto est = tallies.estimate("", p);
        if (!all_bands || death_total == 0) {
            CHECK_FALSE(est.defined);
            continue;
        }
        const double truth = logit(u5mr_from_hazards(hazards, schema));
        REQUIRE(est.defined);
        CHECK(est.logit_u5mr == doctest::Approx(truth).epsilon(1e-13));
    }
}

TEST_CASE("jackknife variance is non-negative and zero for identical clusters") {
    AgeBandSchema schema;
    std::vector<BirthRecord> recs;
    // four identical clusters covering all six bands in 2009: leave-one-out
    // replicates all coincide
    for (int cl = 0; cl < 4; ++cl) {
        for (int i = 0; i < 60; ++i) {
            recs.push_back(record("c" + std::to_string(cl) + "_" + std::to_string(i),
                                  "cl" + std::to_string(cl), make_month(2004, 7) + i,
                                  i == 55 ? 3 : -1, 1.0));
        }
    }
    const WeightedTallies tallies(recs, schema);
    const auto est = tallies.estimate("r1", 2009);
    REQUIRE(est.defined);
    CHECK(est.variance >= 0.0);
    CHECK(est.variance < 1e-18);
}

TEST_CASE("no deaths means no direct estimate") {
    AgeBandSchema schema;
    std::vector<BirthRecord> recs;
    for (int i = 0; i < 60; ++i) {
        recs.push_back(record("c" + std::to_string(i), "cl" + std::to_string(i % 3),
                              make_month(2005, 7) + i, -1, 1.0));
    }
    const WeightedTallies tallies(recs, schema);
    const auto est = tallies.estimate("r1", 2010);
    CHECK_FALSE(est.defined);
    CHECK(est.reason == "no deaths observed");
}

TEST_CASE("direct estimates are design-unbiased over replicate surveys") {
    // single-region SRS of clusters; the mean of the estimator over many
    // replicate surveys tracks the census value
    SynthConfig cfg = small_config();
    cfg.regions = 1;
    cfg.eas_urban_min = 40;
    cfg.eas_urban_max = 40;
    cfg.eas_rural_min = 40;
    cfg.eas_rural_max = 40;
    cfg.ea_households_min = 40;
    cfg.ea_households_max = 41;
    cfg.births_per_household_year = 0.3;
    cfg.base_age_logit = {-2.2, -4.2, -5.2, -5.8, -6.0, -6.2};
    const SyntheticPopulation pop(cfg, 7);
    AgeBandSchema schema;
    const WeightedTallies census(pop.census_records(), schema);
    const auto truth = census.estimate("", 2012);
    REQUIRE(truth.defined);

    SurveyDesign design;
    design.clusters_per_stratum = 12;
    design.households_per_cluster = 25;
    design.pps = false;  // SRS for the unbiasedness check
    const int replicates = 120;
    double mean = 0.0;
    double mean_sq = 0.0;
    int used = 0;
    for (int rep = 0; rep < replicates; ++rep) {
        const auto draw = draw_survey(pop, design, 1000 + rep);
        const WeightedTallies tallies(draw.records, schema);
        const auto est = tallies.estimate("", 2012);
        if (!est.defined) continue;
        mean += est.logit_u5mr;
        mean_sq += est.logit_u5mr * est.logit_u5mr;
        ++used;
    }
    REQUIRE(used > replicates * 9 / 10);
    mean /= used;
    const double sd = std::sqrt(std::max(mean_sq / used - mean * mean, 0.0));
    const double se = sd / std::sqrt(static_cast<double>(used));
    CHECK(std::abs(mean - truth.logit_u5mr) < 2.5 * se + 1e-12);
}

TEST_CASE("smoothing tracks the direct series when design variance vanishes") {
    std::vector<DirectEstimate> series;
    for (int p = 2006; p <= 2013; ++p) {
        DirectEstimate e;
        e.region = "";
        e.period = p;
        e.logit_u5mr = -3.0 + 0.05 * (p - 2006);
        e.variance = 1e-7;
        e.defined = true;
        e.n_clusters = 100;
        series.push_back(e);
    }
    const auto smoothed = fay_herriot_smooth(series, 0, 600, 5);
    REQUIRE(smoothed.size() == 8);
    for (std::size_t i = 0; i < smoothed.size(); ++i) {
        CHECK(smoothed[i].logit_median ==
              doctest::Approx(series[i].logit_u5mr).epsilon(2e-3));
    }
}

TEST_CASE("a constant direct series smooths to a constant") {
    std::vector<DirectEstimate> series;
    for (int p = 2006; p <= 2013; ++p) {
        DirectEstimate e;
        e.period = p;
        e.logit_u5mr = -2.8;
        e.variance = 0.02;
        e.defined = true;
        series.push_back(e);
    }
    const auto smoothed = fay_herriot_smooth(series, 0, 1200, 11);
    for (const auto& pt : smoothed) {
        CHECK(pt.logit_median == doctest::Approx(-2.8).epsilon(0.02));
    }
}

TEST_CASE("extrapolated intervals widen with the horizon") {
    std::vector<DirectEstimate> series;
    Rng rng(3);
    for (int p = 2006; p <= 2013; ++p) {
        DirectEstimate e;
        e.period = p;
        e.logit_u5mr = -3.0 - 0.08 * (p - 2006) + 0.05 * rng.normal();
        e.variance = 0.03;
        e.defined = true;
        series.push_back(e);
    }
    const auto smoothed = fay_herriot_smooth(series, 4, 3000, 13);
    REQUIRE(smoothed.size() == 12);
    double prev_width = 0.0;
    for (const auto& pt : smoothed) {
        if (!pt.extrapolated) continue;
        const double width = pt.logit_upper - pt.logit_lower;
        CHECK(width > prev_width);
        prev_width = width;
    }
}

TEST_CASE("smoothing requires at least three defined periods") {
    std::vector<DirectEstimate> series(2);
    series[0].defined = true;
    series[0].period = 2010;
    series[1].defined = true;
    series[1].period = 2011;
    CHECK_THROWS_AS(fay_herriot_smooth(series, 0, 100, 1), std::invalid_argument);
}
