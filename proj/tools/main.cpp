// Command-line front end: instance generation, the exact oracle, experiment
// runs, estimator/recursion validation, and log-log rate fitting.
//
// Exit codes: 0 success, 1 validation failure, 2 usage error.

#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlmcnac/mlmcnac.hpp"

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json arr = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        arr.push_back(std::move(row));
    }
    return arr;
}

int cmd_gen_mdp(int states, int actions, std::uint64_t seed, double self_loop_min,
                const std::string& out) {
    const mlmcnac::TabularMdp mdp =
        mlmcnac::generate_random_ergodic(states, actions, self_loop_min, seed);
    mlmcnac::save_mdp(mdp, out);
    std::cout << "wrote " << out << " (" << states << " states, " << actions << " actions)\n";
    return 0;
}

int cmd_oracle(const std::string& mdp_path, const std::string& theta_path,
               const std::string& policy_class, int psi_dim, std::uint64_t psi_seed,
               double c_beta) {
    const mlmcnac::TabularMdp mdp = mlmcnac::load_mdp(mdp_path);
    mlmcnac::ExperimentConfig cfg;
    cfg.policy_class = policy_class;
    cfg.psi_dim = psi_dim;
    cfg.psi_seed = psi_seed;
    const mlmcnac::PolicyClass cls = mlmcnac::materialize_policy_class(cfg, mdp);

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(cls.param_dim());
    if (!theta_path.empty()) {
        theta = mlmcnac::load_vector(theta_path);
        if (theta.size() != cls.param_dim())
            throw mlmcnac::ConfigError("theta has dimension " + std::to_string(theta.size()) +
                                       ", policy class needs " +
                                       std::to_string(cls.param_dim()));
    }

    const mlmcnac::FeatureMap features = mlmcnac::reduced_one_hot_features(mdp.n_states());
    const mlmcnac::AssumptionReport rep =
        mlmcnac::assumption_report(mdp, cls, theta, features, c_beta);
    const mlmcnac::PolicyEvaluation ev = mlmcnac::evaluate_policy(mdp, cls.policy_table(theta));

    json out;
    out["assumptions"] = {{"lambda_min", rep.lambda_min},
                          {"mu_min", rep.mu_min},
                          {"eps_app", rep.eps_app},
                          {"t_mix", rep.t_mix},
                          {"g1_bound", rep.g1_bound},
                          {"c_beta_threshold", rep.c_beta_threshold}};
    out["evaluation"] = {{"gain", ev.gain},
                         {"stationary", vector_to_json(ev.stationary)},
                         {"v", vector_to_json(ev.v)},
                         {"q", matrix_to_json(ev.q)},
                         {"advantage", matrix_to_json(ev.advantage)},
                         {"occupancy", matrix_to_json(ev.occupancy)}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_run(const std::string& config_path) {
    std::ifstream in(config_path);
    if (!in) throw mlmcnac::ConfigError("cannot open config: " + config_path);
    json raw = json::parse(in);
    const mlmcnac::ExperimentConfig cfg = mlmcnac::parse_experiment_config(raw);
    const mlmcnac::ExperimentSummary summary = mlmcnac::run_experiment(cfg, raw);
    std::cout << "seeds: " << cfg.seeds.size() << ", median final gap: "
              << summary.median_final_gap << ", median mean gap: " << summary.median_mean_gap
              << "\nsummary: " << cfg.out_dir << "/summary.json\n";
    return summary.any_aborted ? 1 : 0;
}

int cmd_validate_mlmc(long t_max, long reps, std::uint64_t seed) {
    const auto results = mlmcnac::mlmc_validation_suite(t_max, reps, seed);
    return mlmcnac::print_check_results(results, std::cout) ? 0 : 1;
}

int cmd_validate_linrec(int reps, std::uint64_t seed) {
    const auto results = mlmcnac::linrec_validation_suite(reps, seed);
    return mlmcnac::print_check_results(results, std::cout) ? 0 : 1;
}

int cmd_rate_fit(const std::vector<std::string>& csvs, const std::string& x_col,
                 const std::string& y_col, std::optional<double> floor) {
    const mlmcnac::RateFit fit = mlmcnac::rate_fit_csv(csvs, x_col, y_col, floor);
    json out = {{"slope", fit.slope},
                {"intercept", fit.intercept},
                {"r_squared", fit.r_squared},
                {"n_points", fit.points.size()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Average-reward natural actor-critic with MLMC gradient estimation"};
    app.require_subcommand(1);
    std::function<int()> action;

    // gen-mdp
    {
        auto* sub = app.add_subcommand("gen-mdp", "Generate a random ergodic MDP file");
        auto states = std::make_shared<int>(4);
        auto actions = std::make_shared<int>(2);
        auto seed = std::make_shared<std::uint64_t>(1);
        auto floor = std::make_shared<double>(0.1);
        auto out = std::make_shared<std::string>();
        sub->add_option("--states", *states, "Number of states")->required();
        sub->add_option("--actions", *actions, "Number of actions")->required();
        sub->add_option("--seed", *seed, "Generator seed")->required();
        sub->add_option("--self-loop-min", *floor, "Self-loop mass floor (default 0.1)");
        sub->add_option("--out", *out, "Output path")->required();
        sub->callback([=, &action] {
            action = [=] { return cmd_gen_mdp(*states, *actions, *seed, *floor, *out); };
        });
    }

    // oracle
    {
        auto* sub = app.add_subcommand("oracle", "Exact evaluation and instance constants");
        auto mdp = std::make_shared<std::string>();
        auto theta = std::make_shared<std::string>();
        auto cls = std::make_shared<std::string>("tabular_reduced_softmax");
        auto psi_dim = std::make_shared<int>(0);
        auto psi_seed = std::make_shared<std::uint64_t>(1);
        auto c_beta = std::make_shared<double>(1.0);
        sub->add_option("--mdp", *mdp, "MDP JSON file")->required();
        sub->add_option("--theta", *theta, "Policy parameter JSON array (default zeros)");
        sub->add_option("--policy-class", *cls, "tabular_reduced_softmax | feature_softmax");
        sub->add_option("--psi-dim", *psi_dim, "Action-feature dimension (feature_softmax)");
        sub->add_option("--psi-seed", *psi_seed, "Action-feature seed (feature_softmax)");
        sub->add_option("--c-beta", *c_beta, "Average-reward coupling constant");
        sub->callback([=, &action] {
            action = [=] { return cmd_oracle(*mdp, *theta, *cls, *psi_dim, *psi_seed, *c_beta); };
        });
    }

    // run
    {
        auto* sub = app.add_subcommand("run", "Run a configured experiment");
        auto config = std::make_shared<std::string>();
        sub->add_option("--config", *config, "Experiment config JSON")->required();
        sub->callback([=, &action] { action = [=] { return cmd_run(*config); }; });
    }

    // validate-mlmc
    {
        auto* sub = app.add_subcommand("validate-mlmc", "MLMC estimator validation suite");
        auto t_max = std::make_shared<long>(16);
        auto reps = std::make_shared<long>(200000);
        auto seed = std::make_shared<std::uint64_t>(1);
        sub->add_option("--tmax", *t_max, "Truncation horizon (power of 2)");
        sub->add_option("--reps", *reps, "Replications");
        sub->add_option("--seed", *seed, "Base seed");
        sub->callback([=, &action] {
            action = [=] { return cmd_validate_mlmc(*t_max, *reps, *seed); };
        });
    }

    // validate-linrec
    {
        auto* sub = app.add_subcommand("validate-linrec", "Linear-recursion validation suite");
        auto reps = std::make_shared<int>(200);
        auto seed = std::make_shared<std::uint64_t>(1);
        sub->add_option("--reps", *reps, "Replicas per grid point");
        sub->add_option("--seed", *seed, "Base seed");
        sub->callback([=, &action] {
            action = [=] { return cmd_validate_linrec(*reps, *seed); };
        });
    }

    // rate-fit
    {
        auto* sub = app.add_subcommand("rate-fit", "Log-log OLS over trace CSV columns");
        auto x_col = std::make_shared<std::string>();
        auto y_col = std::make_shared<std::string>();
        auto floor = std::make_shared<double>(std::numeric_limits<double>::quiet_NaN());
        auto csvs = std::make_shared<std::vector<std::string>>();
        sub->add_option("--x", *x_col, "X column name")->required();
        sub->add_option("--y", *y_col, "Y column name")->required();
        sub->add_option("--floor", *floor, "Constant subtracted from y before the log");
        sub->add_option("csvs", *csvs, "Trace CSV files")->required();
        sub->callback([=, &action] {
            action = [=] {
                std::optional<double> f;
                if (!std::isnan(*floor)) f = *floor;
                return cmd_rate_fit(*csvs, *x_col, *y_col, f);
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return action();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
