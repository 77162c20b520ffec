#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlmcnac/critic_state.hpp"
#include "mlmcnac/errors.hpp"
#include "mlmcnac/mdp.hpp"
#include "mlmcnac/policy.hpp"

namespace mlmcnac {

// Everything the sampling side estimates, computed exactly by dense solves.
// All of this is O(S^3) on purpose; it only has to be right, not fast.

struct PolicyEvaluation {
    Eigen::VectorXd stationary; // d(s)
    double gain = 0.0;          // J
    Eigen::VectorXd v;          // differential value, normalized d.v = 0
    Eigen::MatrixXd q;          // S x A
    Eigen::MatrixXd advantage;  // q - v
    Eigen::MatrixXd occupancy;  // nu(s,a) = d(s) pi(a|s)
};

struct AssumptionReport {
    double lambda_min = 0.0;       // critic drift-matrix eigenvalue floor
    double mu_min = 0.0;           // smallest Fisher eigenvalue
    double eps_app = 0.0;          // critic approximation error at the TD fixed point
    long t_mix = 0;                // total-variation 1/4 mixing time
    double g1_bound = 0.0;         // max score norm over (s,a)
    double c_beta_threshold = 0.0; // smallest c_beta certified to keep the critic matrix PD
};

namespace detail {

inline void check_row_stochastic(const Eigen::MatrixXd& chain) {
    if (chain.rows() != chain.cols()) throw std::invalid_argument("chain must be square");
    if ((chain.array() < 0.0).any()) throw std::invalid_argument("chain has negative entries");
    for (Eigen::Index s = 0; s < chain.rows(); ++s)
        if (std::abs(chain.row(s).sum() - 1.0) > 1e-10)
            throw std::invalid_argument("chain row " + std::to_string(s) + " does not sum to 1");
}

// Solves d^T P = d^T, sum d = 1. Uniqueness requires rank(P^T - I) = S - 1;
// positivity is checked separately by callers that require irreducibility.
inline Eigen::VectorXd stationary_solve(const Eigen::MatrixXd& chain) {
    check_row_stochastic(chain);
    const Eigen::Index S = chain.rows();
    Eigen::MatrixXd m = chain.transpose() - Eigen::MatrixXd::Identity(S, S);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_qr(m);
    rank_qr.setThreshold(1e-10);
    if (rank_qr.rank() < S - 1)
        throw ErgodicityError("chain has multiple recurrent classes (stationary solution not unique)");

    Eigen::MatrixXd sys(S + 1, S);
    sys.topRows(S) = m;
    sys.bottomRows(1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S + 1);
    rhs[S] = 1.0;
    Eigen::VectorXd d = sys.colPivHouseholderQr().solve(rhs);

    if ((d.transpose() * chain - d.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw ErgodicityError("stationary solve residual too large");
    return d;
}

} // namespace detail

/// Unique stationary distribution of an irreducible chain; all entries > 0.
inline Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& chain) {
    Eigen::VectorXd d = detail::stationary_solve(chain);
    if (d.minCoeff() <= 1e-13)
        throw ErgodicityError("chain is not irreducible (stationary mass vanishes on some state)");
    return d;
}

// Gain and differential values under a fixed policy. V solves the singular
// system (I - P^pi) V = rbar - J 1 with the normalization d.V = 0 appended,
// which matches the series limit for aperiodic ergodic chains.
inline PolicyEvaluation evaluate_policy(const TabularMdp& mdp, const Eigen::MatrixXd& policy) {
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    for (int s = 0; s < S; ++s)
        if (std::abs(policy.row(s).sum() - 1.0) > 1e-10 || (policy.row(s).array() < 0.0).any())
            throw std::invalid_argument("policy row " + std::to_string(s) + " is not a distribution");

    PolicyEvaluation ev;
    const Eigen::MatrixXd chain = mdp.induced_chain(policy);
    ev.stationary = stationary_distribution(chain);
    const Eigen::VectorXd rbar = mdp.mean_reward(policy);
    ev.gain = ev.stationary.dot(rbar);

    Eigen::MatrixXd sys(S + 1, S);
    sys.topRows(S) = Eigen::MatrixXd::Identity(S, S) - chain;
    sys.bottomRows(1) = ev.stationary.transpose();
    Eigen::VectorXd rhs(S + 1);
    rhs.head(S) = rbar.array() - ev.gain;
    rhs[S] = 0.0;
    ev.v = sys.colPivHouseholderQr().solve(rhs);

    ev.q.resize(S, A);
    for (int a = 0; a < A; ++a)
        ev.q.col(a) = mdp.reward_table().col(a).array() - ev.gain +
                      (mdp.transition(a) * ev.v).array();
    ev.advantage = ev.q.colwise() - ev.v;
    ev.occupancy = ev.stationary.asDiagonal() * policy;
    return ev;
}

/// Occupancy-weighted score outer products.
inline Eigen::MatrixXd fisher_matrix(const TabularMdp& mdp, const PolicyClass& cls,
                                     const Eigen::VectorXd& theta) {
    const PolicyEvaluation ev = evaluate_policy(mdp, cls.policy_table(theta));
    const int d = cls.param_dim();
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a) {
            const Eigen::VectorXd g = cls.score(theta, s, a);
            f += ev.occupancy(s, a) * (g * g.transpose());
        }
    return 0.5 * (f + f.transpose());
}

/// grad J = E_nu[ A(s,a) * score(s,a) ].
inline Eigen::VectorXd exact_policy_gradient(const TabularMdp& mdp, const PolicyClass& cls,
                                             const Eigen::VectorXd& theta) {
    const PolicyEvaluation ev = evaluate_policy(mdp, cls.policy_table(theta));
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(cls.param_dim());
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            grad += ev.occupancy(s, a) * ev.advantage(s, a) * cls.score(theta, s, a);
    return grad;
}

namespace detail {

/// Moore-Penrose pseudoinverse apply with an absolute singular-value cutoff.
inline Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                                  double cutoff) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::VectorXd inv_sigma = svd.singularValues();
    for (Eigen::Index i = 0; i < inv_sigma.size(); ++i)
        inv_sigma[i] = inv_sigma[i] > cutoff ? 1.0 / inv_sigma[i] : 0.0;
    return svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose() * b;
}

} // namespace detail

/// Natural gradient direction F(theta)^+ grad J(theta).
inline Eigen::VectorXd exact_npg(const TabularMdp& mdp, const PolicyClass& cls,
                                 const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd f = fisher_matrix(mdp, cls, theta);
    const Eigen::VectorXd grad = exact_policy_gradient(mdp, cls, theta);
    return detail::pinv_solve(f, grad, 1e-10);
}

struct TdFixedPoint {
    CriticState xi;      // solves a_v * xi = b_v
    Eigen::MatrixXd a_v; // (m+1) x (m+1) exact drift matrix
    Eigen::VectorXd b_v; // (m+1) exact offset
};

namespace detail {

/// Occupancy expectations of the per-transition critic statistic.
inline void critic_moments(const TabularMdp& mdp, const Eigen::MatrixXd& policy,
                           const PolicyEvaluation& ev, const FeatureMap& features, double c_beta,
                           Eigen::MatrixXd& a_v, Eigen::VectorXd& b_v) {
    const int m = features.dim();
    const Eigen::MatrixXd& phi = features.table(); // S x m
    a_v = Eigen::MatrixXd::Zero(m + 1, m + 1);
    b_v = Eigen::VectorXd::Zero(m + 1);
    a_v(0, 0) = c_beta;

    const Eigen::VectorXd rbar = mdp.mean_reward(policy);
    b_v[0] = c_beta * ev.stationary.dot(rbar);
    if (m > 0) {
        const Eigen::MatrixXd chain = mdp.induced_chain(policy);
        const Eigen::MatrixXd weighted_phi = ev.stationary.asDiagonal() * phi; // d(s) phi(s)
        a_v.block(1, 0, m, 1) = weighted_phi.colwise().sum().transpose();
        a_v.block(1, 1, m, m) = weighted_phi.transpose() * (phi - chain * phi);
        b_v.tail(m) = weighted_phi.transpose() * rbar;
    }
}

} // namespace detail

// Exact critic moments: a_v and b_v are the occupancy expectations of the
// per-transition critic statistic, and xi* = a_v^{-1} b_v. Its first
// component always equals the gain.
inline TdFixedPoint td_fixed_point(const TabularMdp& mdp, const PolicyClass& cls,
                                   const Eigen::VectorXd& theta, const FeatureMap& features,
                                   double c_beta) {
    if (!(c_beta > 0.0)) throw std::invalid_argument("td_fixed_point: c_beta must be positive");
    if (features.n_states() != mdp.n_states())
        throw std::invalid_argument("td_fixed_point: feature map state count mismatch");

    const Eigen::MatrixXd policy = cls.policy_table(theta);
    const PolicyEvaluation ev = evaluate_policy(mdp, policy);

    TdFixedPoint out;
    detail::critic_moments(mdp, policy, ev, features, c_beta, out.a_v, out.b_v);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.a_v);
    const double smallest = svd.singularValues()[svd.singularValues().size() - 1];
    if (smallest < 1e-10)
        throw SingularityError("critic drift matrix is numerically singular", smallest);

    out.xi = CriticState::from_stacked(out.a_v.colPivHouseholderQr().solve(out.b_v));
    return out;
}

/// Stationary-weighted squared gap between the true V and the fixed-point
/// critic. Uses the pseudoinverse fixed point, so rank-deficient feature maps
/// (e.g. all-zero columns) are still well defined.
inline double critic_approx_error(const TabularMdp& mdp, const PolicyClass& cls,
                                  const Eigen::VectorXd& theta, const FeatureMap& features,
                                  double c_beta) {
    if (!(c_beta > 0.0))
        throw std::invalid_argument("critic_approx_error: c_beta must be positive");
    const Eigen::MatrixXd policy = cls.policy_table(theta);
    const PolicyEvaluation ev = evaluate_policy(mdp, policy);
    Eigen::MatrixXd a_v;
    Eigen::VectorXd b_v;
    detail::critic_moments(mdp, policy, ev, features, c_beta, a_v, b_v);
    const CriticState xi = CriticState::from_stacked(detail::pinv_solve(a_v, b_v, 1e-10));
    const Eigen::VectorXd fitted = features.table() * xi.weights;
    return 0.5 * (ev.stationary.array() * (ev.v - fitted).array().square()).sum();
}

namespace detail {

inline double worst_start_tv(const Eigen::MatrixXd& power, const Eigen::VectorXd& d) {
    double worst = 0.0;
    for (Eigen::Index s = 0; s < power.rows(); ++s)
        worst = std::max(worst, 0.5 * (power.row(s).transpose() - d).cwiseAbs().sum());
    return worst;
}

} // namespace detail

// Smallest t with max_s TV(P^t(s,.), d) <= 1/4. Worst-start TV is
// non-increasing in t, so dyadic powering followed by binary search is exact.
inline long mixing_time(const Eigen::MatrixXd& chain) {
    const Eigen::VectorXd d = stationary_distribution(chain);
    constexpr double kTvThreshold = 0.25;
    constexpr long kMaxSteps = 1000000;

    if (detail::worst_start_tv(chain, d) <= kTvThreshold) return 1;

    std::vector<Eigen::MatrixXd> squarings{chain}; // squarings[i] = P^(2^i)
    long reach = 1;
    while (true) {
        if (reach * 2 > kMaxSteps)
            throw NonMixingError("chain TV distance above 1/4 after 10^6 steps");
        squarings.push_back(squarings.back() * squarings.back());
        reach *= 2;
        if (detail::worst_start_tv(squarings.back(), d) <= kTvThreshold) break;
    }

    auto power_at = [&](long t) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Identity(chain.rows(), chain.cols());
        for (size_t i = 0; i < squarings.size(); ++i)
            if (t & (1L << i)) p = p * squarings[i];
        return p;
    };

    long lo = reach / 2; // TV(lo) > threshold
    long hi = reach;     // TV(hi) <= threshold
    while (hi - lo > 1) {
        const long mid = lo + (hi - lo) / 2;
        if (detail::worst_start_tv(power_at(mid), d) <= kTvThreshold)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

/// Gain of the best policy, by enumerating deterministic policies (valid for
/// unichain instances; every instance this library generates qualifies).
inline double optimal_gain(const TabularMdp& mdp) {
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    double combos = std::pow(static_cast<double>(A), S);
    if (combos > static_cast<double>(1 << 20))
        throw std::invalid_argument("optimal_gain: instance too large for policy enumeration");

    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> choice(static_cast<size_t>(S), 0);
    const long total = static_cast<long>(combos);
    for (long idx = 0; idx < total; ++idx) {
        long rest = idx;
        for (int s = 0; s < S; ++s) {
            choice[static_cast<size_t>(s)] = static_cast<int>(rest % A);
            rest /= A;
        }
        Eigen::MatrixXd policy = Eigen::MatrixXd::Zero(S, A);
        for (int s = 0; s < S; ++s) policy(s, choice[static_cast<size_t>(s)]) = 1.0;
        // Gain of a unichain policy is d.rbar even if some states are transient.
        const Eigen::VectorXd d = detail::stationary_solve(mdp.induced_chain(policy));
        best = std::max(best, d.dot(mdp.mean_reward(policy)));
    }
    return best;
}

/// c_beta large enough to certify the critic drift matrix PD given the
/// Assumption-3 eigenvalue floor lambda.
inline double c_beta_threshold(double lambda) {
    if (!(lambda > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    if (lambda > 1.0) return lambda;
    return lambda + std::sqrt(1.0 / (lambda * lambda) - 1.0);
}

// Numerically checks the constants the convergence guarantees consume:
// lambda (critic drift floor), mu (Fisher floor), eps_app, the mixing time,
// and the score-norm bound, all at the supplied theta.
inline AssumptionReport assumption_report(const TabularMdp& mdp, const PolicyClass& cls,
                                          const Eigen::VectorXd& theta,
                                          const FeatureMap& features, double c_beta) {
    AssumptionReport rep;
    const Eigen::MatrixXd policy = cls.policy_table(theta);
    const Eigen::MatrixXd chain = mdp.induced_chain(policy);
    const Eigen::VectorXd d = stationary_distribution(chain);

    const int m = features.dim();
    if (m > 0) {
        const Eigen::MatrixXd& phi = features.table();
        const Eigen::MatrixXd drift =
            (d.asDiagonal() * phi).transpose() * (phi - chain * phi);
        const Eigen::MatrixXd sym = 0.5 * (drift + drift.transpose());
        rep.lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym)
                             .eigenvalues()
                             .minCoeff();
    } else {
        rep.lambda_min = 1.0; // vacuous for an empty critic block
    }

    const Eigen::MatrixXd f = fisher_matrix(mdp, cls, theta);
    rep.mu_min = f.size() > 0
                     ? Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(f).eigenvalues().minCoeff()
                     : 0.0;

    rep.eps_app = critic_approx_error(mdp, cls, theta, features, c_beta);
    rep.t_mix = mixing_time(chain);

    rep.g1_bound = 0.0;
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            rep.g1_bound = std::max(rep.g1_bound, cls.score(theta, s, a).norm());

    rep.c_beta_threshold = c_beta_threshold(rep.lambda_min);
    return rep;
}

} // namespace mlmcnac
