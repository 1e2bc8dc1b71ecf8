#include "pipeline.hpp"

#include "csv.hpp"
#include "direct.hpp"
#include "likelihood.hpp"
#include "rng.hpp"
#include "synth.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace u5apc {

namespace fs = std::filesystem;

const char* version_string() { return "u5apc 1.0.0"; }

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot hash missing file '" + path.string() + "'");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP context allocation failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 15];
    while (in.good()) {
        in.read(buf, sizeof(buf));
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

ArtifactSet::ArtifactSet(fs::path out_dir) : dir_(std::move(out_dir)) {
    fs::create_directories(dir_);
}

fs::path ArtifactSet::path(const std::string& name) { return dir_ / name; }

void ArtifactSet::keep(const fs::path& written) { written_.push_back(written); }

void ArtifactSet::discard_all() {
    for (const auto& p : written_) {
        std::error_code ec;
        fs::remove(p, ec);
    }
    written_.clear();
}

void ArtifactSet::write_manifest(const std::string& command, const RunConfig& cfg,
                                 const std::map<std::string, std::string>& extra,
                                 double elapsed_seconds) {
    nlohmann::ordered_json manifest;
    manifest["command"] = command;
    manifest["version"] = version_string();
    manifest["seed"] = cfg.seed;
    nlohmann::ordered_json config;
    config["survey_csv"] = cfg.survey_csv;
    config["adjacency"] = cfg.adjacency;
    config["proportions"] = cfg.proportions;
    config["model_config"] = cfg.model_config;
    config["sim_config"] = cfg.sim_config;
    config["variant"] = cfg.variant;
    config["hyper"] = cfg.hyper;
    config["cohort_collapse"] = cfg.cohort_collapse;
    config["draws"] = cfg.draws;
    config["horizon"] = cfg.horizon;
    config["first_period"] = cfg.first_period;
    config["last_period"] = cfg.last_period;
    config["holdout_period"] = cfg.holdout_period;
    config["clusters_per_stratum"] = cfg.clusters_per_stratum;
    config["households_per_cluster"] = cfg.households_per_cluster;
    config["threads"] = cfg.threads;
    config["optimizer_budget"] = cfg.optimizer_budget;
    manifest["config"] = config;
    for (const auto& [key, value] : extra) manifest["run"][key] = value;
    manifest["elapsed_seconds"] = elapsed_seconds;
    manifest["outputs"] = nlohmann::ordered_json::array();
    for (const auto& p : written_) {
        nlohmann::ordered_json entry;
        entry["path"] = fs::relative(p, dir_).string();
        entry["bytes"] = fs::file_size(p);
        entry["sha256"] = sha256_file(p);
        manifest["outputs"].push_back(entry);
    }
    std::ofstream out(dir_ / "manifest.json");
    out << manifest.dump(2) << "\n";
}

namespace {

class Stopwatch {
  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

StratumProportions default_proportions(const std::vector<std::string>& regions, int first,
                                       int last) {
    StratumProportions props;
    for (int p = first; p <= last; ++p) {
        for (const auto& r : regions) {
            props.rural_share[{p, r}] = 0.5;
            props.national_weight[{p, r}] = 1.0 / static_cast<double>(regions.size());
        }
    }
    return props;
}

double q_with_fallback(const StratumProportions& props, int period, const std::string& region) {
    auto it = props.rural_share.find({period, region});
    if (it != props.rural_share.end()) return it->second;
    // carry the latest earlier period forward (prediction years)
    for (int p = period - 1; p >= period - 50; --p) {
        it = props.rural_share.find({p, region});
        if (it != props.rural_share.end()) return it->second;
    }
    throw std::out_of_range("no rural share available for region " + region);
}

double w_with_fallback(const StratumProportions& props, int period, const std::string& region) {
    auto it = props.national_weight.find({period, region});
    if (it != props.national_weight.end()) return it->second;
    for (int p = period - 1; p >= period - 50; --p) {
        it = props.national_weight.find({p, region});
        if (it != props.national_weight.end()) return it->second;
    }
    throw std::out_of_range("no national weight available for region " + region);
}

std::string natural_name(const std::string& internal_name) {
    if (internal_name.rfind("log_", 0) == 0) return internal_name.substr(4);
    if (internal_name.rfind("logit_", 0) == 0) return internal_name.substr(6);
    return internal_name;
}

double natural_value(const std::string& internal_name, double v) {
    if (internal_name.rfind("log_", 0) == 0) return std::exp(v);
    if (internal_name.rfind("logit_", 0) == 0) return expit(v);
    return v;
}

} // namespace

FitBundle run_fit_bundle(const RunConfig& cfg, const SurveyData& survey) {
    FitBundle bundle;
    bundle.rejections = survey.rejections;
    bundle.n_records = static_cast<long long>(survey.records.size());

    AgeBandSchema schema;
    std::vector<CountCell> cells = expand_and_aggregate(survey.records, schema);
    if (cfg.first_period > 0 || cfg.last_period > 0) {
        std::vector<CountCell> kept;
        for (auto& c : cells) {
            if (cfg.first_period > 0 && c.period < cfg.first_period) continue;
            if (cfg.last_period > 0 && c.period > cfg.last_period) continue;
            kept.push_back(std::move(c));
        }
        cells = std::move(kept);
    }
    if (cells.empty()) throw std::runtime_error("no cells left after the period filter");
    bundle.n_cells = static_cast<long long>(cells.size());
    int p_min = cells.front().period;
    int p_max = cells.front().period;
    for (const auto& c : cells) {
        p_min = std::min(p_min, c.period);
        p_max = std::max(p_max, c.period);
    }
    bundle.data_first_period = p_min;
    bundle.data_last_period = p_max;

    if (cfg.adjacency.empty()) throw std::invalid_argument("fit requires --adjacency");
    const AdjacencyGraph graph = AdjacencyGraph::from_adjacency_file(cfg.adjacency);

    ModelPriors priors;
    if (!cfg.model_config.empty()) {
        priors = ModelPriors::from_config(KeyValueConfig::parse_file(cfg.model_config));
    }
    const Variant variant = parse_variant(cfg.variant);
    bundle.sm = assemble_model(cells, graph, schema, variant, priors, cfg.horizon);

    if (!cfg.proportions.empty()) {
        bundle.props = StratumProportions::read_csv(cfg.proportions);
    } else {
        bundle.props = default_proportions(graph.region_ids(), p_min, p_max + cfg.horizon);
    }

    InferenceEngine engine(bundle.sm.model);
    OptimOptions opts;
    opts.max_evals = cfg.optimizer_budget;
    opts.f_tol = 1e-3;
    opts.compute_hessian = true;
    bundle.opt = engine.optimize_hyper(bundle.sm.model->initial_theta(), opts);
    engine.log_posterior_hyper(bundle.opt.theta, &bundle.approx);

    if (cfg.hyper == "ccd" && bundle.opt.hessian) {
        const auto design = engine.ccd_design(bundle.opt.theta, *bundle.opt.hessian);
        bundle.draws = engine.sample_latent_ccd(design, cfg.draws, Rng::derive(cfg.seed, 11));
    } else {
        bundle.draws = engine.sample_latent(bundle.approx, cfg.draws, Rng::derive(cfg.seed, 11));
    }

    // Constraint residuals across every draw.
    const auto& a = bundle.sm.model->constraint_matrix();
    if (a.rows() > 0) {
        const auto& e = bundle.sm.model->constraint_values();
        double worst = 0.0;
        for (int s = 0; s < bundle.draws.count(); ++s) {
            const Eigen::VectorXd resid = a * bundle.draws.draws.row(s).transpose() - e;
            worst = std::max(worst, resid.cwiseAbs().maxCoeff());
        }
        bundle.max_constraint_violation = worst;
    }

    // Region / national / stratum summaries across estimation + prediction
    // periods.
    const CohortCollapse collapse = parse_cohort_collapse(cfg.cohort_collapse);
    const auto& region_ids = bundle.sm.region_ids;
    for (double period_value : bundle.sm.layout.period_axis.values) {
        const int period = static_cast<int>(period_value);
        std::vector<Eigen::VectorXd> region_draws;
        std::vector<double> weights;
        for (std::size_t r = 0; r < region_ids.size(); ++r) {
            const Eigen::VectorXd rural = stratum_u5mr_draws(
                bundle.sm, bundle.draws.draws, period, static_cast<int>(r), false, collapse);
            const Eigen::VectorXd urban = stratum_u5mr_draws(
                bundle.sm, bundle.draws.draws, period, static_cast<int>(r), true, collapse);
            const double q = q_with_fallback(bundle.props, period, region_ids[r]);
            const Eigen::VectorXd mixed = strata_aggregate(rural, urban, q);

            U5MRSummary s_rural = summarize(rural);
            s_rural.level = "stratum";
            s_rural.period = period;
            s_rural.region = region_ids[r];
            s_rural.stratum = "rural";
            bundle.summaries.push_back(s_rural);
            U5MRSummary s_urban = summarize(urban);
            s_urban.level = "stratum";
            s_urban.period = period;
            s_urban.region = region_ids[r];
            s_urban.stratum = "urban";
            bundle.summaries.push_back(s_urban);
            U5MRSummary s_region = summarize(mixed);
            s_region.level = "region";
            s_region.period = period;
            s_region.region = region_ids[r];
            bundle.summaries.push_back(s_region);

            region_draws.push_back(mixed);
            weights.push_back(w_with_fallback(bundle.props, period, region_ids[r]));
        }
        U5MRSummary s_nat = summarize(national_aggregate(region_draws, weights));
        s_nat.level = "national";
        s_nat.period = period;
        bundle.summaries.push_back(s_nat);
    }
    return bundle;
}

void write_estimates_csv(const std::vector<U5MRSummary>& summaries, const fs::path& path) {
    CsvWriter out(path);
    out.row({"level", "region", "stratum", "period", "median", "lower", "upper", "n_draws"});
    for (const auto& s : summaries) {
        out.row({s.level, s.region.empty() ? "NATIONAL" : s.region, s.stratum,
                 std::to_string(s.period), CsvWriter::fixed(s.median, 6),
                 CsvWriter::fixed(s.lower, 6), CsvWriter::fixed(s.upper, 6),
                 std::to_string(s.draws)});
    }
    out.close();
}

namespace {

void write_fit_report(const FitBundle& bundle, ArtifactSet& artifacts) {
    {
        CsvWriter out(artifacts.path("fit_report.csv"));
        out.row({"name", "internal", "natural"});
        const auto& hypers = bundle.sm.model->hypers();
        for (std::size_t i = 0; i < hypers.size(); ++i) {
            out.row({natural_name(hypers[i].name), CsvWriter::num(bundle.opt.theta[i]),
                     CsvWriter::num(natural_value(hypers[i].name, bundle.opt.theta[i]))});
        }
        out.row({"log_posterior", CsvWriter::num(bundle.opt.value), ""});
        out.row({"evaluations", std::to_string(bundle.opt.evaluations), ""});
        out.row({"converged", bundle.opt.converged ? "1" : "0", ""});
        out.row({"mode_iterations", std::to_string(bundle.approx.iterations), ""});
        out.row({"max_constraint_violation",
                 CsvWriter::num(bundle.max_constraint_violation), ""});
        out.close();
        artifacts.keep(artifacts.path("fit_report.csv"));
    }
    if (bundle.opt.hessian) {
        CsvWriter out(artifacts.path("fit_hessian.csv"));
        const auto& hypers = bundle.sm.model->hypers();
        std::vector<std::string> header{"name"};
        for (const auto& h : hypers) header.push_back(h.name);
        out.row(header);
        for (std::size_t i = 0; i < hypers.size(); ++i) {
            std::vector<std::string> row{hypers[i].name};
            for (std::size_t j = 0; j < hypers.size(); ++j) {
                row.push_back(CsvWriter::num((*bundle.opt.hessian)(i, j)));
            }
            out.row(row);
        }
        out.close();
        artifacts.keep(artifacts.path("fit_hessian.csv"));
    }
}

void write_hazard_curves(const FitBundle& bundle, ArtifactSet& artifacts) {
    CsvWriter out(artifacts.path("hazards.csv"));
    out.row({"axis", "band", "year", "stratum", "logit_median", "logit_lower", "logit_upper"});
    const auto& sm = bundle.sm;
    const int regions = static_cast<int>(sm.region_ids.size());

    const auto emit = [&](const std::string& axis, int band, int year, int period, int cohort,
                          bool urban) {
        std::vector<double> weights(regions);
        for (int r = 0; r < regions; ++r) {
            weights[r] = w_with_fallback(bundle.props, period, sm.region_ids[r]);
        }
        const Eigen::VectorXd draws = national_hazard_logit_draws(
            sm, bundle.draws.draws, band, period, cohort, urban, weights);
        out.row({axis, std::to_string(band), std::to_string(year), urban ? "urban" : "rural",
                 CsvWriter::fixed(empirical_quantile(draws, 0.5), 6),
                 CsvWriter::fixed(empirical_quantile(draws, 0.025), 6),
                 CsvWriter::fixed(empirical_quantile(draws, 0.975), 6)});
    };

    // Period curves: dominant cohort per (band, period).
    for (double pv : sm.layout.period_axis.values) {
        const int period = static_cast<int>(pv);
        const auto mix = band_cohort_mix(period, sm.schema);
        for (int b = 0; b < AgeBandSchema::kBands; ++b) {
            for (const bool urban : {false, true}) {
                emit("period", b, period, period, mix[b].dominant_cohort, urban);
            }
        }
    }
    // Cohort curves: dominant period per (band, cohort).
    std::map<std::pair<int, int>, std::map<int, int>> cohort_period_months;
    for (double pv : sm.layout.period_axis.values) {
        const int period = static_cast<int>(pv);
        for (const auto& cell : year_cohort_cells(period, sm.schema)) {
            cohort_period_months[{cell.age_band, cell.cohort}][period] += cell.months;
        }
    }
    for (const auto& [key, period_months] : cohort_period_months) {
        const auto& [band, cohort] = key;
        int dominant_period = 0;
        int best = -1;
        for (const auto& [period, months] : period_months) {
            if (months >= best) {
                best = months;
                dominant_period = period;
            }
        }
        for (const bool urban : {false, true}) {
            emit("cohort", band, cohort, dominant_period, cohort, urban);
        }
    }
    out.close();
    artifacts.keep(artifacts.path("hazards.csv"));
}

} // namespace

void cmd_simulate(const RunConfig& cfg) {
    Stopwatch watch;
    ArtifactSet artifacts(cfg.out_dir);
    try {
        if (cfg.sim_config.empty()) throw std::invalid_argument("simulate requires --config");
        const SynthConfig synth_cfg =
            SynthConfig::from_config(KeyValueConfig::parse_file(cfg.sim_config));
        const SyntheticPopulation pop(synth_cfg, cfg.seed);
        SurveyDesign design;
        design.clusters_per_stratum = cfg.clusters_per_stratum;
        design.households_per_cluster = cfg.households_per_cluster;
        const SurveyDraw draw = draw_survey(pop, design, Rng::derive(cfg.seed, 1));

        {
            CsvWriter out(artifacts.path("survey.csv"));
            out.row({"child_id", "birth_month", "death_month", "interview_month", "cluster_id",
                     "region_id", "urban", "weight"});
            for (const auto& rec : draw.records) {
                out.row({rec.child_id, format_month(rec.birth_month),
                         rec.death_month ? format_month(*rec.death_month) : "",
                         format_month(rec.interview_month), rec.cluster_id, rec.region_id,
                         rec.is_urban ? "1" : "0", CsvWriter::num(rec.weight)});
            }
            out.close();
            artifacts.keep(artifacts.path("survey.csv"));
        }
        {
            CsvWriter out(artifacts.path("truth.csv"));
            out.row({"region", "period", "true_u5mr", "true_logit_u5mr"});
            const int last = synth_cfg.last_period + synth_cfg.truth_horizon;
            for (int r = 0; r < pop.graph().size(); ++r) {
                for (int p = synth_cfg.first_period; p <= last; ++p) {
                    const double rate = pop.true_u5mr(p, r);
                    out.row({pop.graph().region_ids()[r], std::to_string(p),
                             CsvWriter::num(rate), CsvWriter::num(logit(rate))});
                }
            }
            out.close();
            artifacts.keep(artifacts.path("truth.csv"));
        }
        {
            StratumProportions props;
            const int last = synth_cfg.last_period + synth_cfg.truth_horizon;
            for (int p = synth_cfg.first_period; p <= last; ++p) {
                for (int r = 0; r < pop.graph().size(); ++r) {
                    props.rural_share[{p, pop.graph().region_ids()[r]}] = pop.rural_share(r);
                    props.national_weight[{p, pop.graph().region_ids()[r]}] =
                        pop.national_weight(r);
                }
            }
            props.write_csv(artifacts.path("proportions.csv"));
            artifacts.keep(artifacts.path("proportions.csv"));
        }
        pop.graph().write_adjacency_file(artifacts.path("adjacency.txt"));
        artifacts.keep(artifacts.path("adjacency.txt"));
        {
            CsvWriter out(artifacts.path("clusters.csv"));
            out.row({"cluster_id", "region_id", "urban", "x_km", "y_km", "weight"});
            for (const auto& c : draw.clusters) {
                out.row({c.id, c.region_id, c.urban ? "1" : "0", CsvWriter::fixed(c.x_km, 4),
                         CsvWriter::fixed(c.y_km, 4), CsvWriter::num(c.weight)});
            }
            out.close();
            artifacts.keep(artifacts.path("clusters.csv"));
        }
        {
            const auto& truth = pop.realized_truth();
            std::ofstream out(artifacts.path("truth_params.txt"));
            out << "sigma_period = " << truth.sigma_period << "\n"
                << "sigma_cohort = " << truth.sigma_cohort << "\n"
                << "sigma_spatial = " << truth.sigma_spatial << "\n"
                << "phi_spatial = " << truth.phi_spatial << "\n"
                << "sigma_interaction = " << truth.sigma_interaction << "\n"
                << "cluster_sd = " << truth.cluster_sd << "\n"
                << "period_slope = " << truth.period_slope << "\n"
                << "cohort_slope = " << truth.cohort_slope << "\n"
                << "urban_effect = " << truth.urban_effect << "\n";
            artifacts.keep(artifacts.path("truth_params.txt"));
        }
        std::map<std::string, std::string> extra;
        extra["records"] = std::to_string(draw.records.size());
        extra["clusters"] = std::to_string(draw.clusters.size());
        artifacts.write_manifest("simulate", cfg, extra, watch.seconds());
    } catch (...) {
        artifacts.discard_all();
        throw;
    }
}

void cmd_expand(const RunConfig& cfg) {
    Stopwatch watch;
    ArtifactSet artifacts(cfg.out_dir);
    try {
        if (cfg.survey_csv.empty()) throw std::invalid_argument("expand requires --input");
        SurveyData survey = load_survey_csv(cfg.survey_csv);
        AgeBandSchema schema;
        std::vector<RejectedRow> expand_rejections;
        const std::vector<CountCell> cells =
            expand_and_aggregate(survey.records, schema, &expand_rejections);
        for (const auto& r : expand_rejections) survey.rejections.push_back(r);

        write_cells_csv(cells, artifacts.path("cells.csv"));
        artifacts.keep(artifacts.path("cells.csv"));
        write_rejections_csv(survey.rejections, artifacts.path("rejections.csv"));
        artifacts.keep(artifacts.path("rejections.csv"));

        std::map<std::string, std::string> extra;
        extra["records"] = std::to_string(survey.records.size());
        extra["rejections"] = std::to_string(survey.rejections.size());
        extra["cells"] = std::to_string(cells.size());
        artifacts.write_manifest("expand", cfg, extra, watch.seconds());
    } catch (...) {
        artifacts.discard_all();
        throw;
    }
}

namespace {

void run_fit_command(const RunConfig& cfg, const char* command, bool predictions_only) {
    Stopwatch watch;
    ArtifactSet artifacts(cfg.out_dir);
    try {
        if (cfg.survey_csv.empty()) throw std::invalid_argument("fit requires --input");
        if (predictions_only && cfg.horizon < 1) {
            throw std::invalid_argument("predict requires --horizon >= 1");
        }
        const SurveyData survey = load_survey_csv(cfg.survey_csv);
        const FitBundle bundle = run_fit_bundle(cfg, survey);

        if (predictions_only) {
            std::vector<U5MRSummary> predictions;
            for (const auto& s : bundle.summaries) {
                if (s.period >= bundle.sm.layout.first_prediction_period) {
                    predictions.push_back(s);
                }
            }
            write_estimates_csv(predictions, artifacts.path("predictions.csv"));
            artifacts.keep(artifacts.path("predictions.csv"));
        } else {
            write_estimates_csv(bundle.summaries, artifacts.path("estimates.csv"));
            artifacts.keep(artifacts.path("estimates.csv"));
            write_hazard_curves(bundle, artifacts);
        }
        write_fit_report(bundle, artifacts);
        write_rejections_csv(bundle.rejections, artifacts.path("rejections.csv"));
        artifacts.keep(artifacts.path("rejections.csv"));

        std::map<std::string, std::string> extra;
        extra["records"] = std::to_string(bundle.n_records);
        extra["cells"] = std::to_string(bundle.n_cells);
        extra["periods"] = std::to_string(bundle.data_first_period) + "-" +
                           std::to_string(bundle.data_last_period);
        extra["latent_dim"] = std::to_string(bundle.sm.model->dim());
        extra["log_posterior"] = CsvWriter::num(bundle.opt.value);
        artifacts.write_manifest(command, cfg, extra, watch.seconds());
    } catch (...) {
        artifacts.discard_all();
        throw;
    }
}

} // namespace

void cmd_fit(const RunConfig& cfg) { run_fit_command(cfg, "fit", false); }

void cmd_predict(const RunConfig& cfg) { run_fit_command(cfg, "predict", true); }

void cmd_direct(const RunConfig& cfg) {
    Stopwatch watch;
    ArtifactSet artifacts(cfg.out_dir);
    try {
        if (cfg.survey_csv.empty()) throw std::invalid_argument("direct requires --input");
        const SurveyData survey = load_survey_csv(cfg.survey_csv);
        AgeBandSchema schema;
        const WeightedTallies tallies(survey.records, schema);
        int first = cfg.first_period;
        int last = cfg.last_period;
        if (first == 0 || last == 0) {
            const auto periods = tallies.periods();
            if (periods.empty()) throw std::runtime_error("no exposure in the survey");
            if (first == 0) first = periods.front();
            if (last == 0) last = periods.back();
        }
        const std::vector<DirectEstimate> estimates =
            direct_estimates(survey.records, schema, first, last, true);
        write_direct_csv(estimates, artifacts.path("direct.csv"));
        artifacts.keep(artifacts.path("direct.csv"));

        // National Fay-Herriot smoothing, extrapolating over the horizon.
        std::vector<DirectEstimate> national;
        for (const auto& e : estimates) {
            if (e.region.empty()) national.push_back(e);
        }
        int defined = 0;
        for (const auto& e : national) defined += e.defined ? 1 : 0;
        if (defined >= 3) {
            const auto smoothed = fay_herriot_smooth(national, cfg.horizon, cfg.draws,
                                                     Rng::derive(cfg.seed, 21));
            CsvWriter out(artifacts.path("fh_national.csv"));
            out.row({"period", "logit_median", "logit_lower", "logit_upper", "median_per1000",
                     "lower_per1000", "upper_per1000", "extrapolated"});
            for (const auto& pt : smoothed) {
                out.row({std::to_string(pt.period), CsvWriter::fixed(pt.logit_median, 6),
                         CsvWriter::fixed(pt.logit_lower, 6),
                         CsvWriter::fixed(pt.logit_upper, 6),
                         CsvWriter::fixed(1000.0 * expit(pt.logit_median), 6),
                         CsvWriter::fixed(1000.0 * expit(pt.logit_lower), 6),
                         CsvWriter::fixed(1000.0 * expit(pt.logit_upper), 6),
                         pt.extrapolated ? "1" : "0"});
            }
            out.close();
            artifacts.keep(artifacts.path("fh_national.csv"));
        }

        std::map<std::string, std::string> extra;
        extra["records"] = std::to_string(survey.records.size());
        extra["estimates"] = std::to_string(estimates.size());
        artifacts.write_manifest("direct", cfg, extra, watch.seconds());
    } catch (...) {
        artifacts.discard_all();
        throw;
    }
}

void cmd_cv(const RunConfig& cfg) {
    Stopwatch watch;
    ArtifactSet artifacts(cfg.out_dir);
    try {
        if (cfg.survey_csv.empty()) throw std::invalid_argument("cv requires --input");
        if (cfg.adjacency.empty()) throw std::invalid_argument("cv requires --adjacency");
        const SurveyData survey = load_survey_csv(cfg.survey_csv);
        AgeBandSchema schema;
        std::vector<CountCell> cells = expand_and_aggregate(survey.records, schema);
        if (cfg.first_period > 0 || cfg.last_period > 0) {
            std::vector<CountCell> kept;
            for (auto& c : cells) {
                if (cfg.first_period > 0 && c.period < cfg.first_period) continue;
                if (cfg.last_period > 0 && c.period > cfg.last_period) continue;
                kept.push_back(std::move(c));
            }
            cells = std::move(kept);
        }
        int p_max = 0;
        int p_min = 1 << 30;
        for (const auto& c : cells) {
            p_max = std::max(p_max, c.period);
            p_min = std::min(p_min, c.period);
        }
        const int holdout = cfg.holdout_period > 0 ? cfg.holdout_period : p_max;

        const AdjacencyGraph graph = AdjacencyGraph::from_adjacency_file(cfg.adjacency);
        ModelPriors priors;
        if (!cfg.model_config.empty()) {
            priors = ModelPriors::from_config(KeyValueConfig::parse_file(cfg.model_config));
        }
        StratumProportions props;
        if (!cfg.proportions.empty()) {
            props = StratumProportions::read_csv(cfg.proportions);
        } else {
            props = default_proportions(graph.region_ids(), p_min, p_max);
        }
        const std::vector<DirectEstimate> benchmarks =
            direct_estimates(survey.records, schema, holdout, holdout, false);

        std::vector<std::string> variants;
        {
            std::istringstream in(cfg.variant);
            std::string tok;
            while (std::getline(in, tok, ',')) variants.push_back(tok);
        }

        std::vector<std::pair<std::string, CVScores>> scores;
        CsvWriter preds(artifacts.path("cv_predictions.csv"));
        preds.row({"model", "region", "period", "direct_logit", "direct_variance",
                   "pred_median", "pred_lower_95", "pred_upper_95"});
        CsvWriter skipped(artifacts.path("cv_skipped.csv"));
        skipped.row({"model", "detail"});
        for (const auto& variant_name : variants) {
            const Variant variant = parse_variant(variant_name);
            SurveyModel sm = assemble_model(cells, graph, schema, variant, priors, 0);
            InferenceEngine engine(sm.model);
            OptimOptions oopts;
            oopts.max_evals = cfg.optimizer_budget;
            oopts.f_tol = 1e-3;
            const OptimResult base = engine.optimize_hyper(sm.model->initial_theta(), oopts);

            LoroCvOptions lopts;
            lopts.holdout_period = holdout;
            lopts.draws = cfg.draws;
            lopts.seed = Rng::derive(cfg.seed, std::hash<std::string>{}(variant_name));
            lopts.optimizer_budget = cfg.cv_optimizer_budget;
            lopts.collapse = parse_cohort_collapse(cfg.cohort_collapse);
            lopts.threads = cfg.threads;
            const LoroCvResult result = loro_cv(cells, graph, schema, variant, priors, props,
                                                benchmarks, base.theta, lopts);
            if (result.predictions.empty()) {
                throw std::runtime_error("cross-validation produced no usable predictions");
            }
            scores.emplace_back(variant_name, score_cv(result.predictions));
            for (const auto& p : result.predictions) {
                preds.row({variant_name, p.region, std::to_string(p.period),
                           CsvWriter::num(p.direct_logit), CsvWriter::num(p.direct_variance),
                           CsvWriter::fixed(empirical_quantile(p.noisy_draws, 0.5), 6),
                           CsvWriter::fixed(empirical_quantile(p.noisy_draws, 0.025), 6),
                           CsvWriter::fixed(empirical_quantile(p.noisy_draws, 0.975), 6)});
            }
            for (const auto& s : result.skipped) skipped.row({variant_name, s});
        }
        preds.close();
        artifacts.keep(artifacts.path("cv_predictions.csv"));
        skipped.close();
        artifacts.keep(artifacts.path("cv_skipped.csv"));
        write_scores_csv(scores, artifacts.path("cv_scores.csv"));
        artifacts.keep(artifacts.path("cv_scores.csv"));

        std::map<std::string, std::string> extra;
        extra["holdout_period"] = std::to_string(holdout);
        artifacts.write_manifest("cv", cfg, extra, watch.seconds());
    } catch (...) {
        artifacts.discard_all();
        throw;
    }
}

void cmd_report(const RunConfig& cfg) {
    Stopwatch watch;
    ArtifactSet artifacts(cfg.out_dir);
    try {
        if (cfg.run_dir.empty()) throw std::invalid_argument("report requires --run-dir");
        const fs::path run_dir(cfg.run_dir);
        std::string method = "model";
        if (fs::exists(run_dir / "manifest.json")) {
            std::ifstream in(run_dir / "manifest.json");
            nlohmann::json manifest;
            in >> manifest;
            if (manifest.contains("config") && manifest["config"].contains("variant")) {
                method = manifest["config"]["variant"].get<std::string>();
            }
        }
        bool wrote_any = false;

        if (fs::exists(run_dir / "estimates.csv")) {
            const CsvTable est = read_csv(run_dir / "estimates.csv");
            const auto c_level = est.column("level");
            const auto c_region = est.column("region");
            const auto c_period = est.column("period");
            const auto c_median = est.column("median");
            const auto c_lower = est.column("lower");
            const auto c_upper = est.column("upper");

            CsvWriter national(artifacts.path("fig_national_trajectory.csv"));
            national.row({"period", "method", "median_per1000", "lower_per1000",
                          "upper_per1000"});
            for (const auto& row : est.rows) {
                if (row[c_level] != "national") continue;
                national.row({row[c_period], method, row[c_median], row[c_lower],
                              row[c_upper]});
            }
            if (fs::exists(run_dir / "direct.csv")) {
                for (const auto& e : read_direct_csv(run_dir / "direct.csv")) {
                    if (!e.region.empty() || !e.defined) continue;
                    const double sd = std::sqrt(std::max(e.variance, 0.0));
                    national.row({std::to_string(e.period), "direct",
                                  CsvWriter::fixed(1000.0 * expit(e.logit_u5mr), 6),
                                  CsvWriter::fixed(1000.0 * expit(e.logit_u5mr - 1.96 * sd), 6),
                                  CsvWriter::fixed(1000.0 * expit(e.logit_u5mr + 1.96 * sd), 6)});
                }
            }
            if (fs::exists(run_dir / "fh_national.csv")) {
                const CsvTable fh = read_csv(run_dir / "fh_national.csv");
                const auto f_period = fh.column("period");
                const auto f_median = fh.column("median_per1000");
                const auto f_lower = fh.column("lower_per1000");
                const auto f_upper = fh.column("upper_per1000");
                for (const auto& row : fh.rows) {
                    national.row({row[f_period], "fay-herriot", row[f_median], row[f_lower],
                                  row[f_upper]});
                }
            }
            national.close();
            artifacts.keep(artifacts.path("fig_national_trajectory.csv"));

            CsvWriter map_out(artifacts.path("fig_region_map.csv"));
            map_out.row({"region", "period", "median_per1000", "ci_width_per1000"});
            CsvWriter traj(artifacts.path("fig_region_trajectories.csv"));
            traj.row({"region", "period", "median_per1000", "lower_per1000", "upper_per1000"});
            for (const auto& row : est.rows) {
                if (row[c_level] != "region") continue;
                const double width = std::stod(row[c_upper]) - std::stod(row[c_lower]);
                map_out.row(
                    {row[c_region], row[c_period], row[c_median], CsvWriter::fixed(width, 6)});
                traj.row({row[c_region], row[c_period], row[c_median], row[c_lower],
                          row[c_upper]});
            }
            map_out.close();
            artifacts.keep(artifacts.path("fig_region_map.csv"));
            traj.close();
            artifacts.keep(artifacts.path("fig_region_trajectories.csv"));
            wrote_any = true;
        }
        if (fs::exists(run_dir / "hazards.csv")) {
            const CsvTable hz = read_csv(run_dir / "hazards.csv");
            CsvWriter out(artifacts.path("fig_age_specific_curves.csv"));
            out.row(hz.header);
            for (const auto& row : hz.rows) out.row(row);
            out.close();
            artifacts.keep(artifacts.path("fig_age_specific_curves.csv"));
            wrote_any = true;
        }
        if (fs::exists(run_dir / "cv_scores.csv")) {
            const CsvTable sc = read_csv(run_dir / "cv_scores.csv");
            CsvWriter out(artifacts.path("table_scores.csv"));
            out.row(sc.header);
            for (const auto& row : sc.rows) out.row(row);
            out.close();
            artifacts.keep(artifacts.path("table_scores.csv"));
            wrote_any = true;
        }
        if (!wrote_any) {
            throw std::runtime_error("nothing to report in '" + cfg.run_dir + "'");
        }
        artifacts.write_manifest("report", cfg, {}, watch.seconds());
    } catch (...) {
        artifacts.discard_all();
        throw;
    }
}

} // namespace u5apc
