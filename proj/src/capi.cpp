#include "u5apc.h"

#include "data.hpp"
#include "likelihood.hpp"
#include "pipeline.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

namespace {

thread_local std::string g_last_error;

int set_error(int code, const std::string& message) {
    g_last_error = message;
    return code;
}

int classify(const std::exception& e) {
    if (dynamic_cast<const std::invalid_argument*>(&e)) return U5APC_ERR_INVALID;
    if (dynamic_cast<const std::out_of_range*>(&e)) return U5APC_ERR_INVALID;
    return U5APC_ERR_NUMERIC;
}

u5apc::RunConfig to_config(const u5apc_options& o) {
    u5apc::RunConfig cfg;
    const auto str = [](const char* s) { return s ? std::string(s) : std::string(); };
    cfg.survey_csv = str(o.survey_csv);
    cfg.adjacency = str(o.adjacency);
    cfg.proportions = str(o.proportions);
    cfg.model_config = str(o.model_config);
    cfg.sim_config = str(o.sim_config);
    cfg.run_dir = str(o.run_dir);
    cfg.out_dir = str(o.out_dir);
    if (o.variant) cfg.variant = o.variant;
    if (o.hyper) cfg.hyper = o.hyper;
    if (o.cohort_collapse) cfg.cohort_collapse = o.cohort_collapse;
    cfg.draws = o.draws;
    cfg.horizon = o.horizon;
    cfg.first_period = o.first_period;
    cfg.last_period = o.last_period;
    cfg.holdout_period = o.holdout_period;
    cfg.clusters_per_stratum = o.clusters_per_stratum;
    cfg.households_per_cluster = o.households_per_cluster;
    cfg.threads = o.threads;
    cfg.optimizer_budget = o.optimizer_budget;
    cfg.cv_optimizer_budget = o.cv_optimizer_budget;
    cfg.seed = o.seed;
    return cfg;
}

template <typename Fn>
int run_command(const u5apc_options* opts, Fn&& fn) {
    if (!opts) return set_error(U5APC_ERR_INVALID, "null options");
    if (!opts->out_dir || !*opts->out_dir) {
        return set_error(U5APC_ERR_INVALID, "out_dir is required");
    }
    try {
        fn(to_config(*opts));
        g_last_error.clear();
        return U5APC_OK;
    } catch (const std::exception& e) {
        return set_error(classify(e), e.what());
    } catch (...) {
        return set_error(U5APC_ERR_INTERNAL, "unknown failure");
    }
}

} // namespace

struct u5apc_survey {
    u5apc::SurveyData data;
};

struct u5apc_fit {
    u5apc::FitBundle bundle;
};

extern "C" {

const char* u5apc_version(void) { return u5apc::version_string(); }

const char* u5apc_last_error(void) { return g_last_error.c_str(); }

void u5apc_options_init(u5apc_options* opts) {
    if (!opts) return;
    std::memset(opts, 0, sizeof(*opts));
    opts->variant = "APC";
    opts->hyper = "eb";
    opts->cohort_collapse = "dominant";
    opts->draws = 1000;
    opts->clusters_per_stratum = 17;
    opts->households_per_cluster = 25;
    opts->threads = 1;
    opts->optimizer_budget = 300;
    opts->cv_optimizer_budget = 48;
}

int u5apc_run_simulate(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_simulate(cfg); });
}

int u5apc_run_expand(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_expand(cfg); });
}

int u5apc_run_fit(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_fit(cfg); });
}

int u5apc_run_predict(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_predict(cfg); });
}

int u5apc_run_direct(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_direct(cfg); });
}

int u5apc_run_cv(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_cv(cfg); });
}

int u5apc_run_report(const u5apc_options* opts) {
    return run_command(opts, [](const u5apc::RunConfig& cfg) { u5apc::cmd_report(cfg); });
}

int u5apc_survey_open(const char* csv_path, u5apc_survey** out) {
    if (!csv_path || !out) return set_error(U5APC_ERR_INVALID, "null argument");
    try {
        auto handle = new u5apc_survey{u5apc::load_survey_csv(csv_path)};
        *out = handle;
        g_last_error.clear();
        return U5APC_OK;
    } catch (const std::exception& e) {
        return set_error(U5APC_ERR_IO, e.what());
    }
}

int u5apc_survey_counts(const u5apc_survey* survey, int64_t* records, int64_t* rejections) {
    if (!survey) return set_error(U5APC_ERR_INVALID, "null survey");
    if (records) *records = static_cast<int64_t>(survey->data.records.size());
    if (rejections) *rejections = static_cast<int64_t>(survey->data.rejections.size());
    return U5APC_OK;
}

int u5apc_survey_write_rejections(const u5apc_survey* survey, const char* csv_path) {
    if (!survey || !csv_path) return set_error(U5APC_ERR_INVALID, "null argument");
    try {
        u5apc::write_rejections_csv(survey->data.rejections, csv_path);
        return U5APC_OK;
    } catch (const std::exception& e) {
        return set_error(U5APC_ERR_IO, e.what());
    }
}

void u5apc_survey_close(u5apc_survey* survey) { delete survey; }

int u5apc_fit_run(const u5apc_survey* survey, const u5apc_options* opts, u5apc_fit** out) {
    if (!survey || !opts || !out) return set_error(U5APC_ERR_INVALID, "null argument");
    try {
        auto handle = new u5apc_fit{u5apc::run_fit_bundle(to_config(*opts), survey->data)};
        *out = handle;
        g_last_error.clear();
        return U5APC_OK;
    } catch (const std::exception& e) {
        return set_error(classify(e), e.what());
    }
}

int u5apc_fit_hyper_count(const u5apc_fit* fit, int32_t* count) {
    if (!fit || !count) return set_error(U5APC_ERR_INVALID, "null argument");
    *count = fit->bundle.sm.model->hyper_count();
    return U5APC_OK;
}

int u5apc_fit_hyper_name(const u5apc_fit* fit, int32_t index, char* buf, int32_t bufsize) {
    if (!fit || !buf || bufsize <= 0) return set_error(U5APC_ERR_INVALID, "null argument");
    const auto& hypers = fit->bundle.sm.model->hypers();
    if (index < 0 || index >= static_cast<int32_t>(hypers.size())) {
        return set_error(U5APC_ERR_INVALID, "hyper index out of range");
    }
    std::snprintf(buf, static_cast<std::size_t>(bufsize), "%s", hypers[index].name.c_str());
    return U5APC_OK;
}

int u5apc_fit_hyper_value(const u5apc_fit* fit, int32_t index, double* internal_scale,
                          double* natural_scale) {
    if (!fit) return set_error(U5APC_ERR_INVALID, "null fit");
    const auto& hypers = fit->bundle.sm.model->hypers();
    if (index < 0 || index >= static_cast<int32_t>(hypers.size())) {
        return set_error(U5APC_ERR_INVALID, "hyper index out of range");
    }
    const double v = fit->bundle.opt.theta[index];
    if (internal_scale) *internal_scale = v;
    if (natural_scale) {
        const std::string& name = hypers[index].name;
        if (name.rfind("log_", 0) == 0) {
            *natural_scale = std::exp(v);
        } else if (name.rfind("logit_", 0) == 0) {
            *natural_scale = u5apc::expit(v);
        } else {
            *natural_scale = v;
        }
    }
    return U5APC_OK;
}

int u5apc_fit_constraint_violation(const u5apc_fit* fit, double* value) {
    if (!fit || !value) return set_error(U5APC_ERR_INVALID, "null argument");
    *value = fit->bundle.max_constraint_violation;
    return U5APC_OK;
}

int u5apc_fit_write_estimates(const u5apc_fit* fit, const char* csv_path) {
    if (!fit || !csv_path) return set_error(U5APC_ERR_INVALID, "null argument");
    try {
        u5apc::write_estimates_csv(fit->bundle.summaries, csv_path);
        return U5APC_OK;
    } catch (const std::exception& e) {
        return set_error(U5APC_ERR_IO, e.what());
    }
}

void u5apc_fit_close(u5apc_fit* fit) { delete fit; }

} // extern "C"
