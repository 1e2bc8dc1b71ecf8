#include "validate.hpp"

#include "aggregate.hpp"
#include "csv.hpp"
#include "inference.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <thread>

namespace u5apc {

double interval_score(double lower, double upper, double y, double alpha) {
    if (lower > upper) throw std::invalid_argument("interval score needs lower <= upper");
    if (!(alpha > 0.0) || !(alpha < 1.0)) {
        throw std::invalid_argument("interval score needs alpha in (0, 1)");
    }
    double score = upper - lower;
    if (y < lower) score += 2.0 / alpha * (lower - y);
    if (y > upper) score += 2.0 / alpha * (y - upper);
    return score;
}

CVScores score_cv(const std::vector<CVPrediction>& predictions) {
    if (predictions.empty()) throw std::invalid_argument("no CV predictions to score");
    CVScores s;
    s.regions = static_cast<int>(predictions.size());
    for (const auto& p : predictions) {
        const int n = static_cast<int>(p.noisy_draws.size());
        double abs_sum = 0.0;
        double sq_sum = 0.0;
        for (int m = 0; m < n; ++m) {
            const double err = p.noisy_draws[m] - p.direct_logit;
            abs_sum += std::abs(err);
            sq_sum += err * err;
        }
        s.mae += abs_sum / n;
        s.mse += sq_sum / n;
        for (const double alpha : {0.5, 0.05}) {
            const double lo = empirical_quantile(p.noisy_draws, alpha / 2.0);
            const double hi = empirical_quantile(p.noisy_draws, 1.0 - alpha / 2.0);
            const double is = interval_score(lo, hi, p.direct_logit, alpha);
            const bool covered = p.direct_logit >= lo && p.direct_logit <= hi;
            if (alpha == 0.5) {
                s.is50 += is;
                s.coverage50 += covered ? 1.0 : 0.0;
            } else {
                s.is05 += is;
                s.coverage05 += covered ? 1.0 : 0.0;
            }
        }
    }
    const double r = static_cast<double>(s.regions);
    s.mae /= r;
    s.mse /= r;
    s.is50 /= r;
    s.is05 /= r;
    s.coverage50 /= r;
    s.coverage05 /= r;
    return s;
}

LoroCvResult loro_cv(const std::vector<CountCell>& cells, const AdjacencyGraph& graph,
                     const AgeBandSchema& schema, Variant variant, const ModelPriors& priors,
                     const StratumProportions& props,
                     const std::vector<DirectEstimate>& benchmarks,
                     const Eigen::VectorXd& theta_full, const LoroCvOptions& opts) {
    std::map<std::string, const DirectEstimate*> bench;
    for (const auto& b : benchmarks) {
        if (b.period == opts.holdout_period && !b.region.empty()) bench[b.region] = &b;
    }
    bool holdout_present = false;
    for (const auto& cell : cells) {
        if (cell.period == opts.holdout_period) {
            holdout_present = true;
            break;
        }
    }
    if (!holdout_present) {
        throw std::invalid_argument("holdout period " + std::to_string(opts.holdout_period) +
                                    " not present in the data");
    }

    // Each region's refit is self-contained, so they can run on worker
    // threads; slots keep the output in region order.
    std::vector<std::optional<CVPrediction>> predictions(graph.size());
    std::vector<std::string> skipped(graph.size());
    const auto run_region = [&](int r) {
        const std::string& region = graph.region_ids()[r];
        auto it = bench.find(region);
        if (it == bench.end() || !it->second->defined) {
            skipped[r] = region + ": direct estimate undefined";
            return;
        }
        const DirectEstimate& direct = *it->second;

        std::vector<CountCell> training;
        training.reserve(cells.size());
        for (const auto& cell : cells) {
            if (cell.region_id == region && cell.period == opts.holdout_period) continue;
            training.push_back(cell);
        }
        try {
            SurveyModel sm = assemble_model(training, graph, schema, variant, priors, 0);
            InferenceEngine engine(sm.model);
            OptimOptions oopts;
            oopts.max_evals = opts.optimizer_budget;
            oopts.initial_step = opts.optimizer_step;
            oopts.f_tol = 0.05;
            const OptimResult opt = engine.optimize_hyper(theta_full, oopts);
            GaussianApprox approx;
            engine.log_posterior_hyper(opt.theta, &approx);
            const std::uint64_t seed = Rng::derive(opts.seed, static_cast<std::uint64_t>(r));
            const PosteriorDraws draws = engine.sample_latent(approx, opts.draws, seed);

            const double q = props.q(opts.holdout_period, region);
            const Eigen::VectorXd rural = stratum_u5mr_draws(sm, draws.draws,
                                                             opts.holdout_period, r, false,
                                                             opts.collapse);
            const Eigen::VectorXd urban = stratum_u5mr_draws(sm, draws.draws,
                                                             opts.holdout_period, r, true,
                                                             opts.collapse);
            const Eigen::VectorXd rate = strata_aggregate(rural, urban, q);

            CVPrediction pred;
            pred.region = region;
            pred.period = opts.holdout_period;
            pred.direct_logit = direct.logit_u5mr;
            pred.direct_variance = direct.variance;
            pred.raw_draws.resize(rate.size());
            pred.noisy_draws.resize(rate.size());
            Rng noise(Rng::derive(seed, 0x9d));
            const double sd = std::sqrt(std::max(direct.variance, 0.0));
            for (int m = 0; m < rate.size(); ++m) {
                const double y_hat = logit(std::min(std::max(rate[m], 1e-12), 1.0 - 1e-12));
                pred.raw_draws[m] = y_hat;
                pred.noisy_draws[m] = y_hat + sd * noise.normal();
            }
            predictions[r] = std::move(pred);
        } catch (const std::exception& e) {
            skipped[r] = region + ": " + e.what();
        }
    };

    const int n_threads = std::max(1, opts.threads);
    if (n_threads == 1) {
        for (int r = 0; r < graph.size(); ++r) run_region(r);
    } else {
        std::vector<std::thread> workers;
        for (int t = 0; t < n_threads; ++t) {
            workers.emplace_back([&, t] {
                for (int r = t; r < graph.size(); r += n_threads) run_region(r);
            });
        }
        for (auto& w : workers) w.join();
    }

    LoroCvResult result;
    for (int r = 0; r < graph.size(); ++r) {
        if (predictions[r]) result.predictions.push_back(std::move(*predictions[r]));
        if (!skipped[r].empty()) result.skipped.push_back(skipped[r]);
    }
    return result;
}

void write_scores_csv(const std::vector<std::pair<std::string, CVScores>>& model_scores,
                      const std::filesystem::path& path) {
    CsvWriter out(path);
    out.row({"model", "mae", "mse", "is_50", "coverage_50", "is_05", "coverage_05", "regions"});
    for (const auto& [name, s] : model_scores) {
        out.row({name, CsvWriter::num(s.mae), CsvWriter::num(s.mse), CsvWriter::num(s.is50),
                 CsvWriter::num(s.coverage50), CsvWriter::num(s.is05),
                 CsvWriter::num(s.coverage05), std::to_string(s.regions)});
    }
    out.close();
}

} // namespace u5apc
