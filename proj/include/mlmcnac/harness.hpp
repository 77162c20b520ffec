#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mlmcnac/actor_critic.hpp"
#include "mlmcnac/errors.hpp"
#include "mlmcnac/mdp.hpp"
#include "mlmcnac/mdp_io.hpp"
#include "mlmcnac/mlmc.hpp"
#include "mlmcnac/oracle.hpp"
#include "mlmcnac/policy.hpp"

namespace mlmcnac {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct GenerateParams {
    int states = 0;
    int actions = 0;
    double self_loop_min = 0.1;
    std::uint64_t seed = 0;
};

struct ExperimentConfig {
    // Exactly one of file / generate.
    std::optional<std::string> mdp_file;
    std::optional<GenerateParams> mdp_generate;

    std::string policy_class = "tabular_reduced_softmax";
    std::optional<std::vector<double>> theta0; // default: zeros
    int psi_dim = 0;                           // feature_softmax only
    std::uint64_t psi_seed = 1;

    std::string features = "reduced_one_hot";

    // Exactly one of t_budget / (k_outer, h_inner).
    std::optional<long> t_budget;
    std::optional<int> k_outer;
    std::optional<int> h_inner;

    HyperOverrides overrides;
    std::vector<std::uint64_t> seeds;
    int probe_cadence = 1;
    bool warm_start = false;
    std::string out_dir = ".";
};

namespace detail {

template <typename T>
std::optional<T> opt_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    if (!j.contains("mdp")) throw ConfigError("config: missing 'mdp'");
    const auto& jm = j["mdp"];
    if (jm.contains("file") == jm.contains("generate"))
        throw ConfigError("config: 'mdp' needs exactly one of 'file' / 'generate'");
    if (jm.contains("file")) {
        cfg.mdp_file = jm["file"].get<std::string>();
    } else {
        const auto& jg = jm["generate"];
        GenerateParams gp;
        gp.states = jg.at("states").get<int>();
        gp.actions = jg.at("actions").get<int>();
        gp.self_loop_min = jg.value("self_loop_min", 0.1);
        gp.seed = jg.at("seed").get<std::uint64_t>();
        cfg.mdp_generate = gp;
    }

    if (j.contains("policy")) {
        const auto& jp = j["policy"];
        cfg.policy_class = jp.value("class", std::string("tabular_reduced_softmax"));
        if (jp.contains("theta0") && !jp["theta0"].is_string())
            cfg.theta0 = jp["theta0"].get<std::vector<double>>();
        cfg.psi_dim = jp.value("psi_dim", 0);
        cfg.psi_seed = jp.value("psi_seed", std::uint64_t{1});
    }
    if (cfg.policy_class != "tabular_reduced_softmax" && cfg.policy_class != "feature_softmax")
        throw ConfigError("config: unknown policy class '" + cfg.policy_class + "'");

    cfg.features = j.value("features", std::string("reduced_one_hot"));
    if (cfg.features != "reduced_one_hot")
        throw ConfigError("config: unknown feature map '" + cfg.features + "'");

    cfg.t_budget = detail::opt_field<long>(j, "t_budget");
    cfg.k_outer = detail::opt_field<int>(j, "k_outer");
    cfg.h_inner = detail::opt_field<int>(j, "h_inner");
    const bool has_explicit = cfg.k_outer.has_value() || cfg.h_inner.has_value();
    if (cfg.t_budget.has_value() == has_explicit)
        throw ConfigError("config: need exactly one of 't_budget' / ('k_outer' and 'h_inner')");
    if (has_explicit && (!cfg.k_outer || !cfg.h_inner))
        throw ConfigError("config: 'k_outer' and 'h_inner' must be given together");

    if (j.contains("overrides")) {
        const auto& jo = j["overrides"];
        cfg.overrides.alpha = detail::opt_field<double>(jo, "alpha");
        cfg.overrides.beta = detail::opt_field<double>(jo, "beta");
        cfg.overrides.gamma = detail::opt_field<double>(jo, "gamma");
        cfg.overrides.c_beta = detail::opt_field<double>(jo, "c_beta");
        cfg.overrides.t_max = detail::opt_field<long>(jo, "t_max");
        cfg.overrides.lambda = detail::opt_field<double>(jo, "lambda");
        cfg.overrides.mu = detail::opt_field<double>(jo, "mu");
        cfg.overrides.g1 = detail::opt_field<double>(jo, "g1");
        cfg.overrides.smoothness = detail::opt_field<double>(jo, "smoothness");
    }

    if (!j.contains("seeds")) throw ConfigError("config: missing 'seeds'");
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("config: 'seeds' must be non-empty");

    cfg.probe_cadence = j.value("probe_cadence", 1);
    if (cfg.probe_cadence < 1) throw ConfigError("config: 'probe_cadence' must be >= 1");
    cfg.warm_start = j.value("warm_start", false);
    cfg.out_dir = j.value("out_dir", std::string("."));
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed config JSON in " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

inline int replica_thread_cap() {
    if (const char* env = std::getenv("RL_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_trace_csv(const RunTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "k,cum_T,J_theta,gap,xi_err,omega_err,epoch_transitions,wall_ms\n";
    for (const EpochRecord& r : trace.epochs) {
        out << r.k << ',' << r.cum_transitions << ',' << format_double(r.j_theta) << ','
            << format_double(r.gap) << ',' << format_double(r.xi_err) << ','
            << format_double(r.omega_err) << ',' << r.epoch_transitions << ','
            << format_double(r.wall_ms) << '\n';
    }
}

inline void write_theta_snapshots(const RunTrace& trace, const std::string& path) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [k, theta] : trace.theta_snapshots) {
        nlohmann::json entry;
        entry["k"] = k;
        nlohmann::json t = nlohmann::json::array();
        for (Eigen::Index i = 0; i < theta.size(); ++i) t.push_back(theta[i]);
        entry["theta"] = std::move(t);
        arr.push_back(std::move(entry));
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << arr.dump(2) << "\n";
}

inline double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace detail

struct ExperimentSummary {
    AssumptionReport report;
    HyperParams hp;
    double j_star = 0.0;
    double initial_gap = 0.0;
    std::vector<double> final_gaps;      // per seed, NaN when unprobed/aborted
    std::vector<double> mean_gaps;       // per seed, mean over probed epochs
    double median_final_gap = 0.0;
    double median_mean_gap = 0.0;
    std::vector<std::string> csv_paths;
    bool any_aborted = false;
};

inline TabularMdp materialize_mdp(const ExperimentConfig& cfg) {
    if (cfg.mdp_file) return load_mdp(*cfg.mdp_file);
    const GenerateParams& g = *cfg.mdp_generate;
    return generate_random_ergodic(g.states, g.actions, g.self_loop_min, g.seed);
}

inline PolicyClass materialize_policy_class(const ExperimentConfig& cfg, const TabularMdp& mdp) {
    if (cfg.policy_class == "tabular_reduced_softmax")
        return PolicyClass::tabular_reduced_softmax(mdp.n_states(), mdp.n_actions());
    if (cfg.psi_dim < 1) throw ConfigError("config: feature_softmax requires 'psi_dim' >= 1");
    RngStream rng(cfg.psi_seed);
    Eigen::MatrixXd psi(mdp.n_states() * mdp.n_actions(), cfg.psi_dim);
    for (Eigen::Index r = 0; r < psi.rows(); ++r) {
        for (int c = 0; c < cfg.psi_dim; ++c) psi(r, c) = rng.next_gaussian();
        const double norm = psi.row(r).norm();
        if (norm > 0.0) psi.row(r) /= norm;
    }
    return PolicyClass::feature_softmax(mdp.n_states(), mdp.n_actions(), std::move(psi));
}

// Builds the instance, derives hyperparameters from the oracle report, runs
// one seeded replica per seed (parallel up to RL_THREADS), and writes one
// trace CSV plus theta snapshots per seed and a summary JSON.
inline ExperimentSummary run_experiment(const ExperimentConfig& cfg,
                                        const nlohmann::json& config_echo = {}) {
    const TabularMdp mdp = materialize_mdp(cfg);
    const PolicyClass cls = materialize_policy_class(cfg, mdp);
    // A single-state instance has no value features to fit; only the
    // average-reward component of the critic remains.
    const FeatureMap features = mdp.n_states() > 1
                                    ? reduced_one_hot_features(mdp.n_states())
                                    : FeatureMap(Eigen::MatrixXd(1, 0), true);

    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(cls.param_dim());
    if (cfg.theta0) {
        if (static_cast<int>(cfg.theta0->size()) != cls.param_dim())
            throw ConfigError("config: theta0 has dimension " +
                              std::to_string(cfg.theta0->size()) + ", policy class needs " +
                              std::to_string(cls.param_dim()));
        theta0 = Eigen::Map<const Eigen::VectorXd>(cfg.theta0->data(),
                                                   static_cast<Eigen::Index>(cfg.theta0->size()));
    }

    ExperimentSummary summary;
    summary.report = assumption_report(mdp, cls, theta0, features, 1.0);

    HyperOverrides overrides = cfg.overrides;
    if (!overrides.alpha && !overrides.smoothness) {
        RngStream probe_rng(0xa11ce);
        overrides.smoothness =
            std::max(1e-6, estimate_smoothness(mdp, cls, theta0, 1.0, 100, probe_rng));
    }
    if (cfg.k_outer) overrides.k_outer = cfg.k_outer;
    if (cfg.h_inner) overrides.h_inner = cfg.h_inner;
    summary.hp = derive_hyperparameters(cfg.t_budget.value_or(0), summary.report, overrides);

    summary.j_star = optimal_gain(mdp);
    summary.initial_gap =
        summary.j_star - evaluate_policy(mdp, cls.policy_table(theta0)).gain;

    std::filesystem::create_directories(cfg.out_dir);
    const ProbeFn probe = make_oracle_probe(mdp, cls, features, summary.hp.c_beta, summary.j_star);

    struct SeedOutcome {
        double final_gap = std::numeric_limits<double>::quiet_NaN();
        double mean_gap = std::numeric_limits<double>::quiet_NaN();
        bool aborted = false;
    };
    const int n_seeds = static_cast<int>(cfg.seeds.size());
    std::vector<SeedOutcome> outcomes(static_cast<size_t>(n_seeds));
    summary.csv_paths.resize(static_cast<size_t>(n_seeds));

    auto run_seed = [&](int i) {
        const std::uint64_t seed = cfg.seeds[static_cast<size_t>(i)];
        RngStream rng(seed);
        const RunTrace trace = mlmc_nac(mdp, cls, theta0, features, summary.hp, rng, probe,
                                        cfg.probe_cadence, cfg.warm_start);
        const std::string stem = cfg.out_dir + "/trace_seed" + std::to_string(seed);
        detail::write_trace_csv(trace, stem + ".csv");
        detail::write_theta_snapshots(trace, stem + "_theta.json");
        summary.csv_paths[static_cast<size_t>(i)] = stem + ".csv";

        SeedOutcome out;
        out.aborted = trace.aborted;
        double gap_sum = 0.0;
        int gap_count = 0;
        for (const EpochRecord& r : trace.epochs) {
            if (!std::isnan(r.gap)) {
                gap_sum += r.gap;
                ++gap_count;
                out.final_gap = r.gap;
            }
        }
        if (gap_count > 0) out.mean_gap = gap_sum / gap_count;
        outcomes[static_cast<size_t>(i)] = out;
    };

    const int cap = std::min(replica_thread_cap(), n_seeds);
    std::vector<std::future<void>> pending;
    int next = 0;
    while (next < n_seeds || !pending.empty()) {
        while (next < n_seeds && static_cast<int>(pending.size()) < cap) {
            pending.push_back(std::async(std::launch::async, run_seed, next));
            ++next;
        }
        pending.front().get();
        pending.erase(pending.begin());
    }

    for (const SeedOutcome& out : outcomes) {
        summary.final_gaps.push_back(out.final_gap);
        summary.mean_gaps.push_back(out.mean_gap);
        summary.any_aborted = summary.any_aborted || out.aborted;
    }
    summary.median_final_gap = detail::median(summary.final_gaps);
    summary.median_mean_gap = detail::median(summary.mean_gaps);

    nlohmann::json js;
    js["j_star"] = summary.j_star;
    js["initial_gap"] = summary.initial_gap;
    js["median_final_gap"] = summary.median_final_gap;
    js["median_mean_gap"] = summary.median_mean_gap;
    js["final_gaps"] = summary.final_gaps;
    js["mean_gaps"] = summary.mean_gaps;
    js["any_aborted"] = summary.any_aborted;
    js["oracle"] = {{"lambda_min", summary.report.lambda_min},
                    {"mu_min", summary.report.mu_min},
                    {"eps_app", summary.report.eps_app},
                    {"t_mix", summary.report.t_mix},
                    {"g1_bound", summary.report.g1_bound},
                    {"c_beta_threshold", summary.report.c_beta_threshold}};
    // The tabular reduced softmax class is complete, so its expressivity gap
    // is zero; for restricted classes the gap is not computable here.
    if (cfg.policy_class == "tabular_reduced_softmax")
        js["eps_bias"] = 0.0;
    else
        js["eps_bias"] = nullptr;
    js["hyperparameters"] = {{"alpha", summary.hp.alpha},   {"beta", summary.hp.beta},
                             {"gamma", summary.hp.gamma},   {"c_beta", summary.hp.c_beta},
                             {"t_max", summary.hp.t_max},   {"h_inner", summary.hp.h_inner},
                             {"k_outer", summary.hp.k_outer}};
    if (!config_echo.is_null()) js["config"] = config_echo;
    std::ofstream out(cfg.out_dir + "/summary.json");
    if (!out) throw DataError("cannot open for writing: " + cfg.out_dir + "/summary.json");
    out << js.dump(2) << "\n";
    return summary;
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::vector<std::pair<double, double>> points; // (ln x, ln y)
};

/// Ordinary least squares on (ln x, ln(y - floor)).
inline RateFit rate_fit(const std::vector<double>& xs, const std::vector<double>& ys,
                        std::optional<double> floor_subtract = std::nullopt) {
    if (xs.size() != ys.size()) throw DataError("rate_fit: x/y length mismatch");
    if (xs.size() < 3) throw DataError("rate_fit: need at least 3 points");
    RateFit fit;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double y = ys[i] - floor_subtract.value_or(0.0);
        if (!(xs[i] > 0.0) || !(y > 0.0))
            throw DataError("rate_fit: non-positive value at point " + std::to_string(i));
        fit.points.emplace_back(std::log(xs[i]), std::log(y));
    }
    const double n = static_cast<double>(fit.points.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [lx, ly] : fit.points) {
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) throw DataError("rate_fit: degenerate x values");
    fit.slope = (n * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / n;

    double ss_res = 0, ss_tot = 0;
    const double mean_y = sy / n;
    for (const auto& [lx, ly] : fit.points) {
        const double pred = fit.intercept + fit.slope * lx;
        ss_res += (ly - pred) * (ly - pred);
        ss_tot += (ly - mean_y) * (ly - mean_y);
    }
    fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
    return fit;
}

/// Pools (x, y) pairs from trace CSVs by column name; skips non-finite rows.
inline RateFit rate_fit_csv(const std::vector<std::string>& paths, const std::string& x_col,
                            const std::string& y_col,
                            std::optional<double> floor_subtract = std::nullopt) {
    std::vector<double> xs, ys;
    for (const std::string& path : paths) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open: " + path);
        std::string line;
        if (!std::getline(in, line)) throw DataError(path + ": empty file");
        std::vector<std::string> header;
        {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) header.push_back(cell);
        }
        const auto x_it = std::find(header.begin(), header.end(), x_col);
        const auto y_it = std::find(header.begin(), header.end(), y_col);
        if (x_it == header.end()) throw DataError(path + ": no column '" + x_col + "'");
        if (y_it == header.end()) throw DataError(path + ": no column '" + y_col + "'");
        const size_t xi = static_cast<size_t>(x_it - header.begin());
        const size_t yi = static_cast<size_t>(y_it - header.begin());
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            if (cells.size() <= std::max(xi, yi)) throw DataError(path + ": short row");
            const double x = std::strtod(cells[xi].c_str(), nullptr);
            const double y = std::strtod(cells[yi].c_str(), nullptr);
            if (std::isfinite(x) && std::isfinite(y)) {
                xs.push_back(x);
                ys.push_back(y);
            }
        }
    }
    return rate_fit(xs, ys, floor_subtract);
}

} // namespace mlmcnac
