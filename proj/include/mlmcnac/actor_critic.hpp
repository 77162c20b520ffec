#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlmcnac/critic_state.hpp"
#include "mlmcnac/errors.hpp"
#include "mlmcnac/linrec.hpp"
#include "mlmcnac/mdp.hpp"
#include "mlmcnac/mlmc.hpp"
#include "mlmcnac/oracle.hpp"
#include "mlmcnac/policy.hpp"

namespace mlmcnac {

struct HyperParams {
    double alpha = 0.0;  // actor step
    double beta = 0.0;   // critic step
    double gamma = 0.0;  // NPG step
    double c_beta = 0.0; // average-reward coupling constant
    long t_max = 0;      // MLMC truncation horizon, power of 2
    int h_inner = 0;     // inner iterations per subroutine
    int k_outer = 0;     // policy-update epochs
};

struct SubroutineResult {
    Eigen::VectorXd iterate;
    int final_state = 0;
    long transitions = 0;
};

namespace detail {

// Shared driver: H linear-recursion steps where every step assembles one
// fresh MLMC estimate on a sub-trajectory chained through final_state.
inline SubroutineResult run_mlmc_recursion(
    const TabularMdp& mdp, const PolicyClass& cls, const Eigen::VectorXd& theta,
    const std::function<StatPair(const Transition&)>& stat_fn, const Eigen::VectorXd& x0,
    double step, int h_steps, long t_max, int s0, RngStream& rng) {
    SubroutineResult result;
    result.final_state = s0;

    RecursionSpec spec;
    spec.dim = static_cast<int>(x0.size());
    spec.h_steps = h_steps;
    spec.step_size = step;
    spec.x0 = x0;
    spec.source = [&](int, Eigen::MatrixXd& p_hat, Eigen::VectorXd& q_hat) {
        MlmcEstimate est =
            mlmc_assemble(stat_fn, mdp, cls, theta, result.final_state, t_max, rng);
        result.final_state = est.final_state;
        result.transitions += est.transitions_used;
        p_hat = std::move(est.a_hat);
        q_hat = std::move(est.b_hat);
    };
    result.iterate = run_recursion(spec).final;
    return result;
}

} // namespace detail

/// H steps of xi <- xi - beta * (A_hat xi - b_hat) with MLMC estimates.
inline SubroutineResult critic_subroutine(const TabularMdp& mdp, const PolicyClass& cls,
                                          const Eigen::VectorXd& theta,
                                          const CriticState& xi_init, const FeatureMap& features,
                                          const HyperParams& hp, int s0, RngStream& rng) {
    const double c_beta = hp.c_beta;
    auto stat = [c_beta, &features](const Transition& z) {
        return critic_stat(z, c_beta, features);
    };
    return detail::run_mlmc_recursion(mdp, cls, theta, stat, xi_init.stacked(), hp.beta,
                                      hp.h_inner, hp.t_max, s0, rng);
}

/// H steps of omega <- omega - gamma * (A_hat omega - b_hat); the critic
/// state xi is held fixed throughout.
inline SubroutineResult npg_subroutine(const TabularMdp& mdp, const PolicyClass& cls,
                                       const Eigen::VectorXd& theta, const CriticState& xi,
                                       const Eigen::VectorXd& omega_init,
                                       const FeatureMap& features, const HyperParams& hp, int s0,
                                       RngStream& rng) {
    auto stat = [&cls, &theta, &xi, &features](const Transition& z) {
        return npg_stat(cls, theta, xi, z, features);
    };
    return detail::run_mlmc_recursion(mdp, cls, theta, stat, omega_init, hp.gamma, hp.h_inner,
                                      hp.t_max, s0, rng);
}

/// Any field left unset falls back to the value derived from the step-size
/// schedule and the measured instance constants.
struct HyperOverrides {
    std::optional<double> alpha, beta, gamma, c_beta;
    std::optional<long> t_max;
    std::optional<int> h_inner, k_outer;
    std::optional<double> lambda, mu, g1, smoothness;
};

inline long next_power_of_two(long v) {
    long p = 1;
    while (p < v) p *= 2;
    return p;
}

// Hyperparameters from the transition budget T:
//   K = round(sqrt(T)),  H = next power of 2 >= sqrt(T)/ln(T),  t_max = H^2,
//   beta = 4 ln(H)/(lambda H),  gamma = 2 ln(H)/(mu H),
//   alpha = mu^2 / (4 G1^2 L),  c_beta = max(override, threshold(lambda)).
// Explicit overrides always win.
inline HyperParams derive_hyperparameters(long t_budget, const AssumptionReport& report,
                                          const HyperOverrides& overrides = {}) {
    HyperParams hp;
    const bool budgeted = t_budget > 0;
    if (!budgeted && (!overrides.k_outer || !overrides.h_inner))
        throw ConfigError("derive_hyperparameters: need t_budget or explicit k_outer and h_inner");

    const double sqrt_t = budgeted ? std::sqrt(static_cast<double>(t_budget)) : 0.0;
    hp.k_outer = overrides.k_outer
                     ? *overrides.k_outer
                     : static_cast<int>(std::llround(sqrt_t));
    if (hp.k_outer < 0) throw ConfigError("derive_hyperparameters: k_outer must be >= 0");

    hp.h_inner = overrides.h_inner
                     ? *overrides.h_inner
                     : static_cast<int>(next_power_of_two(static_cast<long>(
                           std::ceil(sqrt_t / std::log(static_cast<double>(t_budget))))));
    if (hp.h_inner < 2) throw ConfigError("derive_hyperparameters: h_inner must be >= 2");

    hp.t_max = overrides.t_max ? *overrides.t_max
                               : next_power_of_two(static_cast<long>(hp.h_inner) * hp.h_inner);
    if (!is_power_of_two(hp.t_max) || hp.t_max < 2)
        throw ConfigError("derive_hyperparameters: t_max must be a power of 2, >= 2");

    const double lambda = overrides.lambda ? *overrides.lambda : report.lambda_min;
    const double mu = overrides.mu ? *overrides.mu : report.mu_min;
    const double log_h = std::log(static_cast<double>(hp.h_inner));

    if (overrides.beta) {
        hp.beta = *overrides.beta;
    } else {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw ConfigError("derive_hyperparameters: lambda (critic drift floor) unavailable; "
                              "supply an override");
        hp.beta = 4.0 * log_h / (lambda * hp.h_inner);
    }

    if (overrides.gamma) {
        hp.gamma = *overrides.gamma;
    } else {
        if (!(mu > 0.0) || !std::isfinite(mu))
            throw ConfigError("derive_hyperparameters: mu (Fisher floor) unavailable; "
                              "supply an override");
        hp.gamma = 2.0 * log_h / (mu * hp.h_inner);
    }

    const double threshold =
        (lambda > 0.0 && std::isfinite(lambda)) ? c_beta_threshold(lambda) : 0.0;
    hp.c_beta = std::max(overrides.c_beta.value_or(0.0), threshold);
    if (!(hp.c_beta > 0.0))
        throw ConfigError("derive_hyperparameters: c_beta unavailable; supply an override");

    if (overrides.alpha) {
        hp.alpha = *overrides.alpha;
    } else {
        if (!(mu > 0.0) || !std::isfinite(mu))
            throw ConfigError("derive_hyperparameters: mu (Fisher floor) unavailable; "
                              "supply an override");
        const double g1 = overrides.g1 ? *overrides.g1 : report.g1_bound;
        if (!(g1 > 0.0)) throw ConfigError("derive_hyperparameters: g1 bound unavailable");
        if (!overrides.smoothness || !(*overrides.smoothness > 0.0))
            throw ConfigError("derive_hyperparameters: smoothness constant unavailable; "
                              "supply an override or run the smoothness probe");
        hp.alpha = mu * mu / (4.0 * g1 * g1 * *overrides.smoothness);
    }
    return hp;
}

/// Finite-difference smoothness probe: max of ||grad J(t1) - grad J(t2)|| /
/// ||t1 - t2|| over random parameter pairs in a ball around theta0.
inline double estimate_smoothness(const TabularMdp& mdp, const PolicyClass& cls,
                                  const Eigen::VectorXd& theta0, double radius, int pairs,
                                  RngStream& rng) {
    if (pairs < 1) throw std::invalid_argument("estimate_smoothness: need pairs >= 1");
    const int d = cls.param_dim();
    auto point_in_ball = [&]() {
        Eigen::VectorXd u(d);
        for (int i = 0; i < d; ++i) u[i] = rng.next_gaussian();
        const double norm = u.norm();
        if (norm == 0.0) return theta0;
        const double r = radius * std::pow(rng.next_double(), 1.0 / std::max(d, 1));
        return Eigen::VectorXd(theta0 + (r / norm) * u);
    };
    double worst = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const Eigen::VectorXd t1 = point_in_ball();
        const Eigen::VectorXd t2 = point_in_ball();
        const double dist = (t1 - t2).norm();
        if (dist < 1e-9) continue;
        const double ratio =
            (exact_policy_gradient(mdp, cls, t1) - exact_policy_gradient(mdp, cls, t2)).norm() /
            dist;
        worst = std::max(worst, ratio);
    }
    return worst;
}

/// Per-epoch oracle measurements; NaN where a probe was skipped.
struct EpochRecord {
    int k = 0;
    long cum_transitions = 0;
    double j_theta = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    double xi_err = std::numeric_limits<double>::quiet_NaN();
    double omega_err = std::numeric_limits<double>::quiet_NaN();
    long epoch_transitions = 0;
    double wall_ms = 0.0;
};

struct RunTrace {
    std::vector<EpochRecord> epochs;
    std::vector<std::pair<int, Eigen::VectorXd>> theta_snapshots;
    Eigen::VectorXd theta_final;
    bool aborted = false;
    std::string abort_reason;
};

struct EpochProbe {
    double j_theta = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::quiet_NaN();
    double xi_err = std::numeric_limits<double>::quiet_NaN();
    double omega_err = std::numeric_limits<double>::quiet_NaN();
};

using ProbeFn = std::function<EpochProbe(int k, const Eigen::VectorXd& theta,
                                         const CriticState& xi, const Eigen::VectorXd& omega)>;

/// Standard probe: gain and gap from the exact oracle, critic error against
/// the TD fixed point, NPG error against the exact natural gradient.
inline ProbeFn make_oracle_probe(const TabularMdp& mdp, const PolicyClass& cls,
                                 const FeatureMap& features, double c_beta, double j_star) {
    return [&mdp, &cls, &features, c_beta, j_star](int, const Eigen::VectorXd& theta,
                                                   const CriticState& xi,
                                                   const Eigen::VectorXd& omega) {
        EpochProbe probe;
        probe.j_theta = evaluate_policy(mdp, cls.policy_table(theta)).gain;
        probe.gap = j_star - probe.j_theta;
        probe.xi_err =
            (xi.stacked() - td_fixed_point(mdp, cls, theta, features, c_beta).xi.stacked())
                .norm();
        probe.omega_err = (omega - exact_npg(mdp, cls, theta)).norm();
        return probe;
    };
}

// The full loop: K epochs of critic estimation, NPG estimation, and the
// policy step theta <- theta + alpha omega, with a single continuing
// environment trajectory threaded through every MLMC sub-trajectory. The
// critic and NPG iterates restart from zero each epoch unless warm_start.
// Divergence aborts with the partial trace.
inline RunTrace mlmc_nac(const TabularMdp& mdp, const PolicyClass& cls,
                         const Eigen::VectorXd& theta0, const FeatureMap& features,
                         const HyperParams& hp, RngStream& rng, const ProbeFn& probe = nullptr,
                         int probe_cadence = 1, bool warm_start = false) {
    if (probe_cadence < 1) throw std::invalid_argument("mlmc_nac: probe_cadence must be >= 1");
    RunTrace trace;
    Eigen::VectorXd theta = theta0;
    CriticState xi = CriticState::zero(features.dim());
    Eigen::VectorXd omega = Eigen::VectorXd::Zero(cls.param_dim());
    int s = sample_initial_state(mdp, rng);
    long cum_transitions = 0;

    for (int k = 0; k < hp.k_outer; ++k) {
        const auto t_start = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.k = k;
        try {
            if (!warm_start) xi = CriticState::zero(features.dim());
            SubroutineResult critic =
                critic_subroutine(mdp, cls, theta, xi, features, hp, s, rng);
            xi = CriticState::from_stacked(critic.iterate);
            s = critic.final_state;

            if (!warm_start) omega.setZero();
            SubroutineResult npg =
                npg_subroutine(mdp, cls, theta, xi, omega, features, hp, s, rng);
            omega = npg.iterate;
            s = npg.final_state;

            rec.epoch_transitions = critic.transitions + npg.transitions;
        } catch (const DivergenceError& e) {
            trace.aborted = true;
            trace.abort_reason = std::string(e.what()) + " (epoch " + std::to_string(k) + ")";
            break;
        }
        cum_transitions += rec.epoch_transitions;
        rec.cum_transitions = cum_transitions;
        // Sampling and update work only; oracle probes are not timed.
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();

        if (probe && k % probe_cadence == 0) {
            const EpochProbe p = probe(k, theta, xi, omega);
            rec.j_theta = p.j_theta;
            rec.gap = p.gap;
            rec.xi_err = p.xi_err;
            rec.omega_err = p.omega_err;
            trace.theta_snapshots.emplace_back(k, theta);
        }

        theta = actor_update(theta, omega, hp.alpha);
        trace.epochs.push_back(std::move(rec));
    }
    trace.theta_final = theta;
    return trace;
}

} // namespace mlmcnac
