#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "mlmcnac/actor_critic.hpp"
#include "mlmcnac/harness.hpp"
#include "mlmcnac/linrec.hpp"
#include "mlmcnac/mdp.hpp"
#include "mlmcnac/mlmc.hpp"
#include "mlmcnac/policy.hpp"

namespace mlmcnac {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline bool print_check_results(const std::vector<CheckResult>& results, std::ostream& out) {
    bool all = true;
    for (const CheckResult& r : results) {
        out << (r.pass ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << "\n";
        all = all && r.pass;
    }
    return all;
}

namespace detail {

/// Fixed 3-state reference instance for estimator validation.
inline TabularMdp reference_3state_mdp() { return generate_random_ergodic(3, 2, 0.05, 42); }

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct RunningMoments {
    std::vector<double> sum, sum_sq;
    long n = 0;
    void init(size_t dim) {
        sum.assign(dim, 0.0);
        sum_sq.assign(dim, 0.0);
    }
    void add(const Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            sum[static_cast<size_t>(i)] += v[i];
            sum_sq[static_cast<size_t>(i)] += v[i] * v[i];
        }
        ++n;
    }
    double mean(size_t i) const { return sum[i] / n; }
    double variance(size_t i) const {
        const double m = mean(i);
        return std::max(0.0, sum_sq[i] / n - m * m);
    }
};

} // namespace detail

// The randomized-level estimator must match the mean of a plain full-batch
// average of t_max samples (its whole point: batch-level bias at log cost).
// Both sides start from the same state; verdict is a per-component 3-sigma
// two-sample test on the vector part of the critic statistic.
inline CheckResult mlmc_telescoping_check(long t_max, long reps, std::uint64_t seed) {
    const TabularMdp mdp = detail::reference_3state_mdp();
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    Eigen::VectorXd theta(3);
    theta << 0.3, -0.2, 0.1;
    const double c_beta = 2.0;
    const int s0 = 0;
    auto stat = [&](const Transition& z) { return critic_stat(z, c_beta, features); };

    RngStream master(seed);
    detail::RunningMoments mlmc_m, batch_m;
    mlmc_m.init(3);
    batch_m.init(3);

    for (long r = 0; r < reps; ++r) {
        RngStream rng = master.derive(static_cast<std::uint64_t>(r));
        mlmc_m.add(mlmc_assemble(stat, mdp, cls, theta, s0, t_max, rng).b_hat);
    }
    RngStream master2(seed ^ 0x5eedf00dull);
    for (long r = 0; r < reps; ++r) {
        RngStream rng = master2.derive(static_cast<std::uint64_t>(r));
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
        int s = s0;
        for (long t = 0; t < t_max; ++t) {
            const int a = cls.sample_action(theta, s, rng);
            const Transition z = sample_transition(mdp, s, a, rng);
            s = z.s_next;
            sum += stat(z).b;
        }
        batch_m.add(sum / static_cast<double>(t_max));
    }

    double worst_z = 0.0;
    for (size_t i = 0; i < 3; ++i) {
        const double se =
            std::sqrt(mlmc_m.variance(i) / reps + batch_m.variance(i) / reps);
        const double z = std::abs(mlmc_m.mean(i) - batch_m.mean(i)) / se;
        worst_z = std::max(worst_z, z);
    }
    CheckResult res;
    res.name = "mlmc telescoping (t_max=" + std::to_string(t_max) + ")";
    res.pass = worst_z <= 3.0;
    res.detail = "worst |z| = " + detail::fmt(worst_z) + " over " + std::to_string(reps) +
                 " replicas (limit 3)";
    return res;
}

/// Mean transitions per assembly must match floor(log2 t_max) + 2^-floor(log2 t_max).
inline CheckResult mlmc_sample_cost_check(long t_max, long draws, std::uint64_t seed) {
    RngStream rng(seed);
    double total = 0.0;
    for (long i = 0; i < draws; ++i) total += static_cast<double>(draw_level(rng, t_max).planned_len);
    const double measured = total / static_cast<double>(draws);
    const int log_t = static_cast<int>(std::llround(std::log2(static_cast<double>(t_max))));
    const double expected = log_t + std::pow(2.0, -log_t);
    const double rel = std::abs(measured - expected) / expected;
    CheckResult res;
    res.name = "mlmc expected sample cost (t_max=" + std::to_string(t_max) + ")";
    res.pass = rel <= 0.02;
    res.detail = "measured " + detail::fmt(measured) + " vs expected " + detail::fmt(expected) +
                 " (rel err " + detail::fmt(rel) + ", limit 0.02)";
    return res;
}

/// A constant per-transition statistic collapses the telescoping sum: the
/// average-reward component must equal c_beta * r for every draw.
inline CheckResult mlmc_constant_stat_check(long t_max, long reps, std::uint64_t seed) {
    const int S = 3, A = 2;
    const double r_const = 0.7;
    Eigen::MatrixXd reward = Eigen::MatrixXd::Constant(S, A, r_const);
    std::vector<Eigen::MatrixXd> transition;
    const TabularMdp base = detail::reference_3state_mdp();
    for (int a = 0; a < A; ++a) transition.push_back(base.transition(a));
    const TabularMdp mdp(reward, transition, base.initial_dist());

    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(S, A);
    const FeatureMap features = reduced_one_hot_features(S);
    const double c_beta = 2.0;
    auto stat = [&](const Transition& z) { return critic_stat(z, c_beta, features); };

    RngStream master(seed);
    double acc = 0.0;
    double worst_single = 0.0;
    for (long r = 0; r < reps; ++r) {
        RngStream rng = master.derive(static_cast<std::uint64_t>(r));
        const Eigen::VectorXd b =
            mlmc_assemble(stat, mdp, cls, Eigen::VectorXd::Zero(3), 0, t_max, rng).b_hat;
        acc += b[0];
        worst_single = std::max(worst_single, std::abs(b[0] - c_beta * r_const));
    }
    const double err = std::abs(acc / reps - c_beta * r_const);
    CheckResult res;
    res.name = "mlmc constant statistic (t_max=" + std::to_string(t_max) + ")";
    res.pass = err <= 1e-9 && worst_single <= 1e-9;
    res.detail = "mean abs err " + detail::fmt(err) + ", worst single draw err " +
                 detail::fmt(worst_single);
    return res;
}

inline std::vector<CheckResult> mlmc_validation_suite(long t_max, long reps, std::uint64_t seed) {
    return {mlmc_telescoping_check(t_max, reps, seed),
            mlmc_sample_cost_check(t_max, 1000000, seed ^ 0xc0ffee),
            mlmc_constant_stat_check(t_max, std::min(reps, 20000L), seed ^ 0xbeef)};
}

// ---------------------------------------------------------------------------
// Linear-recursion validation
// ---------------------------------------------------------------------------

namespace detail {

struct SyntheticSystem {
    RecursionReference ref;
    double lambda_p = 0.0;
};

/// Deterministic 4x4 symmetric system with smallest eigenvalue pinned to 0.5.
inline SyntheticSystem synthetic_pd_system() {
    RngStream rng(2024);
    Eigen::MatrixXd b(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) b(i, j) = rng.next_double();
    Eigen::MatrixXd sym = 0.5 * (b + b.transpose());
    const double eig_min =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff();
    SyntheticSystem sys;
    sys.lambda_p = 0.5;
    sys.ref.p = sym + (sys.lambda_p - eig_min) * Eigen::MatrixXd::Identity(4, 4);
    sys.ref.q = Eigen::VectorXd(4);
    for (int i = 0; i < 4; ++i) sys.ref.q[i] = rng.next_double();
    return sys;
}

inline RecursionSpec noisy_spec(const SyntheticSystem& sys, int h_steps, double noise_sigma,
                                const Eigen::VectorXd& q_bias, std::uint64_t seed) {
    RecursionSpec spec;
    spec.dim = 4;
    spec.h_steps = h_steps;
    spec.step_size = recursion_step_size(h_steps, sys.lambda_p);
    spec.x0 = Eigen::VectorXd::Zero(4);
    const Eigen::MatrixXd p = sys.ref.p;
    const Eigen::VectorXd q = sys.ref.q + q_bias;
    spec.source = [p, q, noise_sigma, rng = RngStream(seed)](
                      int, Eigen::MatrixXd& p_hat, Eigen::VectorXd& q_hat) mutable {
        p_hat = p;
        q_hat = q;
        if (noise_sigma > 0.0) {
            for (Eigen::Index i = 0; i < p_hat.rows(); ++i)
                for (Eigen::Index j = 0; j < p_hat.cols(); ++j)
                    p_hat(i, j) += noise_sigma * rng.next_gaussian();
            for (Eigen::Index i = 0; i < q_hat.size(); ++i)
                q_hat[i] += noise_sigma * rng.next_gaussian();
        }
    };
    return spec;
}

} // namespace detail

/// Noise-free scalar recursion follows the geometric closed form exactly.
inline CheckResult linrec_noiseless_check() {
    RecursionSpec spec;
    spec.dim = 1;
    spec.h_steps = 20;
    spec.step_size = 0.25;
    spec.x0 = Eigen::VectorXd::Zero(1);
    spec.source = [](int, Eigen::MatrixXd& p, Eigen::VectorXd& q) {
        p = Eigen::MatrixXd::Constant(1, 1, 2.0);
        q = Eigen::VectorXd::Constant(1, 4.0);
    };
    RecursionReference ref;
    ref.p = Eigen::MatrixXd::Constant(1, 1, 2.0);
    ref.q = Eigen::VectorXd::Constant(1, 4.0);
    const RecursionDiagnostics diag = run_recursion(spec, &ref);
    double worst = 0.0;
    for (int h = 0; h <= spec.h_steps; ++h) {
        const double expected = 4.0 * std::pow(0.25, h); // (x_h - 2)^2 = 4 * 0.25^h
        worst = std::max(worst, std::abs(diag.error_sq[static_cast<size_t>(h)] - expected));
    }
    CheckResult res;
    res.name = "linrec noiseless contraction";
    res.pass = worst <= 1e-12;
    res.detail = "worst per-step deviation from closed form " + detail::fmt(worst);
    return res;
}

/// Second moment under unbiased i.i.d. noise decays ~1/H up to logs:
/// log-log slope over a dyadic grid must be <= -0.8.
inline CheckResult linrec_noise_slope_check(int replicas, std::uint64_t seed) {
    const detail::SyntheticSystem sys = detail::synthetic_pd_system();
    std::vector<double> hs, errs;
    RngStream master(seed);
    for (int exp = 6; exp <= 12; ++exp) {
        const int h = 1 << exp;
        double acc = 0.0;
        for (int r = 0; r < replicas; ++r) {
            const RecursionSpec spec = detail::noisy_spec(
                sys, h, 0.1, Eigen::VectorXd::Zero(4), master.next_u64());
            const RecursionDiagnostics diag = run_recursion(spec, &sys.ref);
            acc += diag.error_sq.back();
        }
        hs.push_back(static_cast<double>(h));
        errs.push_back(acc / replicas);
    }
    const RateFit fit = rate_fit(hs, errs);
    CheckResult res;
    res.name = "linrec unbiased-noise second-moment slope";
    res.pass = fit.slope <= -0.8;
    res.detail = "slope " + detail::fmt(fit.slope) + " (limit -0.8), R^2 " +
                 detail::fmt(fit.r_squared);
    return res;
}

/// Constant bias injected into q_hat drives the mean iterate to
/// P^{-1}(q + delta): the measured floor must sit within 10% of ||P^{-1} delta||^2.
inline CheckResult linrec_bias_floor_check(int replicas, std::uint64_t seed) {
    const detail::SyntheticSystem sys = detail::synthetic_pd_system();
    const Eigen::VectorXd delta = Eigen::VectorXd::Constant(4, 0.1);
    const double expected = sys.ref.p.colPivHouseholderQr().solve(delta).squaredNorm();
    const int h = 1 << 10;
    RngStream master(seed);
    std::vector<std::uint64_t> salts;
    for (int r = 0; r < replicas; ++r) salts.push_back(master.next_u64());
    const double measured = bias_floor_probe(
        [&](int r) {
            return detail::noisy_spec(sys, h, 0.1, delta, salts[static_cast<size_t>(r)]);
        },
        sys.ref, replicas);
    const double rel = std::abs(measured - expected) / expected;
    CheckResult res;
    res.name = "linrec constant-bias floor";
    res.pass = rel <= 0.10;
    res.detail = "measured " + detail::fmt(measured) + " vs ||P^-1 delta||^2 = " +
                 detail::fmt(expected) + " (rel err " + detail::fmt(rel) + ", limit 0.10)";
    return res;
}

inline std::vector<CheckResult> linrec_validation_suite(int replicas, std::uint64_t seed) {
    return {linrec_noiseless_check(), linrec_noise_slope_check(replicas, seed),
            linrec_bias_floor_check(replicas, seed ^ 0xfeedull)};
}

} // namespace mlmcnac
