#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlmcnac/critic_state.hpp"
#include "mlmcnac/mdp.hpp"
#include "mlmcnac/policy.hpp"
#include "mlmcnac/rng.hpp"

namespace mlmcnac {

// Geometric level draw for the randomized telescoping estimator. P(level = j)
// = 2^-j for j >= 1. A draw whose 2^level exceeds t_max is truncated to a
// single transition: the base statistic must always be defined even when the
// telescoping correction is dropped.
struct LevelDraw {
    int level = 1;
    bool truncated = false;
    long planned_len = 1;
};

inline bool is_power_of_two(long v) { return v > 0 && (v & (v - 1)) == 0; }

inline LevelDraw draw_level(RngStream& rng, long t_max) {
    if (t_max < 2 || !is_power_of_two(t_max))
        throw std::invalid_argument("draw_level: t_max must be a power of 2, >= 2");
    const double u = rng.next_double();
    int level = 1 + static_cast<int>(std::floor(-std::log2(1.0 - u)));
    if (level > 62) level = 62;
    LevelDraw draw;
    draw.level = level;
    draw.truncated = (1L << level) > t_max;
    draw.planned_len = draw.truncated ? 1 : (1L << level);
    return draw;
}

/// Markovian rollout of exactly `len` transitions from s0 under the policy.
/// The returned final state feeds the next call: one continuing trajectory.
inline std::pair<std::vector<Transition>, int> collect_trajectory(
    const TabularMdp& mdp, const PolicyClass& cls, const Eigen::VectorXd& theta, int s0, long len,
    RngStream& rng) {
    if (len < 1) throw std::invalid_argument("collect_trajectory: len must be >= 1");
    std::vector<Transition> out;
    out.reserve(static_cast<size_t>(len));
    int s = s0;
    for (long t = 0; t < len; ++t) {
        const int a = cls.sample_action(theta, s, rng);
        out.push_back(sample_transition(mdp, s, a, rng));
        s = out.back().s_next;
    }
    return {std::move(out), s};
}

/// Matrix/vector statistic of one transition; the crude update direction of
/// the associated recursion is a * x - b.
struct StatPair {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
};

/// Temporal-difference error r - eta + zeta.(phi(s') - phi(s)).
inline double td_error(const CriticState& xi, const Transition& z, const FeatureMap& features) {
    return z.reward - xi.avg_reward +
           xi.weights.dot(features.feature(z.s_next) - features.feature(z.s));
}

// Per-transition statistic for the natural-gradient recursion: the score
// outer product estimates the Fisher matrix and the TD-error-weighted score
// estimates the policy gradient.
inline StatPair npg_stat(const PolicyClass& cls, const Eigen::VectorXd& theta,
                         const CriticState& xi, const Transition& z, const FeatureMap& features) {
    const Eigen::VectorXd score = cls.score(theta, z.s, z.a);
    StatPair stat;
    stat.a = score * score.transpose();
    stat.b = td_error(xi, z, features) * score;
    return stat;
}

// Per-transition statistic for the stacked average-reward/critic recursion.
inline StatPair critic_stat(const Transition& z, double c_beta, const FeatureMap& features) {
    const int m = features.dim();
    const Eigen::VectorXd phi_s = features.feature(z.s);
    StatPair stat;
    stat.a = Eigen::MatrixXd::Zero(m + 1, m + 1);
    stat.b = Eigen::VectorXd::Zero(m + 1);
    stat.a(0, 0) = c_beta;
    stat.b[0] = c_beta * z.reward;
    if (m > 0) {
        stat.a.block(1, 0, m, 1) = phi_s;
        stat.a.block(1, 1, m, m) =
            phi_s * (phi_s - features.feature(z.s_next)).transpose();
        stat.b.tail(m) = z.reward * phi_s;
    }
    return stat;
}

/// One MLMC assembly: the estimated pair plus the level drawn, the number of
/// environment transitions consumed, and the state to continue from.
struct MlmcEstimate {
    Eigen::MatrixXd a_hat;
    Eigen::VectorXd b_hat;
    LevelDraw level;
    long transitions_used = 0;
    int final_state = 0;
};

// Draws a level, walks one contiguous sub-trajectory of planned_len steps,
// and returns  Y0 + 2^q (Yq - Y(q-1))  where Yj averages the statistic over
// the first 2^j transitions (just Y0 when the draw is truncated). The levels
// are coupled: Y(q-1) uses exactly the first half of Yq's samples.
// Transitions are streamed; nothing is stored.
inline MlmcEstimate mlmc_assemble(const std::function<StatPair(const Transition&)>& stat_fn,
                                  const TabularMdp& mdp, const PolicyClass& cls,
                                  const Eigen::VectorXd& theta, int s0, long t_max,
                                  RngStream& rng) {
    MlmcEstimate est;
    est.level = draw_level(rng, t_max);

    int s = s0;
    Eigen::MatrixXd sum_a;
    Eigen::VectorXd sum_b;
    Eigen::MatrixXd first_a, half_a;
    Eigen::VectorXd first_b, half_b;
    const long n = est.level.planned_len;
    for (long t = 0; t < n; ++t) {
        const int a = cls.sample_action(theta, s, rng);
        const Transition z = sample_transition(mdp, s, a, rng);
        s = z.s_next;
        const StatPair stat = stat_fn(z);
        if (t == 0) {
            sum_a = stat.a;
            sum_b = stat.b;
            first_a = stat.a;
            first_b = stat.b;
        } else {
            sum_a += stat.a;
            sum_b += stat.b;
        }
        if (t + 1 == n / 2) {
            half_a = sum_a;
            half_b = sum_b;
        }
    }

    if (est.level.truncated) {
        est.a_hat = first_a;
        est.b_hat = first_b;
    } else {
        const double scale = static_cast<double>(n); // 2^q
        est.a_hat = first_a + scale * (sum_a / scale - half_a / (scale / 2));
        est.b_hat = first_b + scale * (sum_b / scale - half_b / (scale / 2));
    }
    est.transitions_used = n;
    est.final_state = s;
    return est;
}

} // namespace mlmcnac
