#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mlmcnac/errors.hpp"
#include "mlmcnac/rng.hpp"

namespace mlmcnac {

inline constexpr double kStochasticTol = 1e-12;

/// One environment step (s, a, s', r).
struct Transition {
    int s;
    int a;
    int s_next;
    double reward;
};

// Finite MDP with table rewards in [0,1] and a dense transition tensor.
// Immutable after construction; all invariants checked up front.
class TabularMdp {
public:
    // `transition[a]` is the S x S matrix with row s = P(. | s, a).
    TabularMdp(Eigen::MatrixXd reward, std::vector<Eigen::MatrixXd> transition,
               Eigen::VectorXd initial_dist)
        : reward_(std::move(reward)),
          transition_(std::move(transition)),
          initial_dist_(std::move(initial_dist)) {
        validate();
    }

    int n_states() const { return static_cast<int>(reward_.rows()); }
    int n_actions() const { return static_cast<int>(reward_.cols()); }

    double reward(int s, int a) const { return reward_(s, a); }
    const Eigen::MatrixXd& reward_table() const { return reward_; }
    const Eigen::MatrixXd& transition(int a) const { return transition_[static_cast<size_t>(a)]; }
    const Eigen::VectorXd& initial_dist() const { return initial_dist_; }

    /// Row P(. | s, a) of the transition tensor.
    Eigen::VectorXd transition_row(int s, int a) const {
        return transition_[static_cast<size_t>(a)].row(s).transpose();
    }

    /// Chain induced by a stochastic policy table: P(s,s') = sum_a P(s'|s,a) pi(a|s).
    Eigen::MatrixXd induced_chain(const Eigen::MatrixXd& policy) const {
        check_policy_shape(policy);
        const int S = n_states();
        Eigen::MatrixXd chain = Eigen::MatrixXd::Zero(S, S);
        for (int a = 0; a < n_actions(); ++a)
            chain += policy.col(a).asDiagonal() * transition_[static_cast<size_t>(a)];
        return chain;
    }

    /// Per-state mean reward under a policy: r(s) = sum_a pi(a|s) r(s,a).
    Eigen::VectorXd mean_reward(const Eigen::MatrixXd& policy) const {
        check_policy_shape(policy);
        return (reward_.array() * policy.array()).rowwise().sum();
    }

private:
    void validate() const {
        const int S = n_states();
        const int A = n_actions();
        if (S < 1 || A < 1) throw ValidationError("state/action counts must be positive");
        if (static_cast<int>(transition_.size()) != A)
            throw ValidationError("transition tensor action count");
        if ((reward_.array() < 0.0).any() || (reward_.array() > 1.0).any())
            throw ValidationError("reward range: entries must lie in [0,1]");
        for (int a = 0; a < A; ++a) {
            const Eigen::MatrixXd& t = transition_[static_cast<size_t>(a)];
            if (t.rows() != S || t.cols() != S)
                throw ValidationError("transition tensor shape");
            if ((t.array() < 0.0).any())
                throw ValidationError("transition entry sign: probabilities must be >= 0");
            for (int s = 0; s < S; ++s) {
                if (std::abs(t.row(s).sum() - 1.0) > kStochasticTol)
                    throw ValidationError("transition row sum: row (s=" + std::to_string(s) +
                                          ", a=" + std::to_string(a) + ") does not sum to 1");
            }
        }
        if (initial_dist_.size() != S) throw ValidationError("initial_dist length");
        if ((initial_dist_.array() < 0.0).any())
            throw ValidationError("initial_dist entry sign");
        if (std::abs(initial_dist_.sum() - 1.0) > kStochasticTol)
            throw ValidationError("initial_dist sum: does not sum to 1");
    }

    void check_policy_shape(const Eigen::MatrixXd& policy) const {
        if (policy.rows() != n_states() || policy.cols() != n_actions())
            throw std::invalid_argument("policy table shape mismatch");
    }

    Eigen::MatrixXd reward_;                  // S x A
    std::vector<Eigen::MatrixXd> transition_; // A matrices of S x S
    Eigen::VectorXd initial_dist_;            // S
};

// State feature map phi: S -> R^m with ||phi(s)|| <= 1. When constructed as
// assumption-3 compliant, the all-ones vector must lie outside the feature
// span (checked by a rank test), which is what keeps the critic recursion
// non-singular.
class FeatureMap {
public:
    FeatureMap(Eigen::MatrixXd table, bool assumption3_compliant)
        : table_(std::move(table)), compliant_(assumption3_compliant) {
        for (int s = 0; s < table_.rows(); ++s) {
            if (table_.row(s).norm() > 1.0 + 1e-12)
                throw ValidationError("feature row norm: ||phi(s)|| must be <= 1");
        }
        if (compliant_ && !ones_excluded())
            throw ValidationError("feature span: all-ones vector lies in the feature span");
    }

    int dim() const { return static_cast<int>(table_.cols()); }
    int n_states() const { return static_cast<int>(table_.rows()); }
    const Eigen::MatrixXd& table() const { return table_; }
    bool assumption3_compliant() const { return compliant_; }

    Eigen::VectorXd feature(int s) const { return table_.row(s).transpose(); }

private:
    bool ones_excluded() const {
        const int S = static_cast<int>(table_.rows());
        const Eigen::Index m = table_.cols();
        if (m == 0) return true; // the span is {0}
        Eigen::MatrixXd augmented(S, m + 1);
        augmented.leftCols(m) = table_;
        augmented.col(m) = Eigen::VectorXd::Ones(S);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_base(table_);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_aug(augmented);
        return qr_aug.rank() == qr_base.rank() + 1;
    }

    Eigen::MatrixXd table_; // S x m
    bool compliant_;
};

/// Draw one step from (s, a); the reward is the deterministic table entry.
inline Transition sample_transition(const TabularMdp& mdp, int s, int a, RngStream& rng) {
    if (s < 0 || s >= mdp.n_states()) throw std::out_of_range("state index out of range");
    if (a < 0 || a >= mdp.n_actions()) throw std::out_of_range("action index out of range");
    const Eigen::VectorXd row = mdp.transition_row(s, a);
    const int s_next = sample_categorical(row, rng);
    return Transition{s, a, s_next, mdp.reward(s, a)};
}

/// Draw an initial state from rho.
inline int sample_initial_state(const TabularMdp& mdp, RngStream& rng) {
    return sample_categorical(mdp.initial_dist(), rng);
}

// Random instance with a self-loop floor on every row and strictly positive
// mass everywhere, so the chain induced by any policy is irreducible and
// aperiodic. Deterministic in the seed.
inline TabularMdp generate_random_ergodic(int n_states, int n_actions, double self_loop_min,
                                          std::uint64_t seed) {
    if (n_states < 2) throw std::invalid_argument("generate_random_ergodic: need n_states >= 2");
    if (n_actions < 1) throw std::invalid_argument("generate_random_ergodic: need n_actions >= 1");
    if (!(self_loop_min > 0.0 && self_loop_min < 1.0))
        throw std::invalid_argument("generate_random_ergodic: need self_loop_min in (0,1)");

    RngStream rng(seed);
    Eigen::MatrixXd reward(n_states, n_actions);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) reward(s, a) = rng.next_double();

    std::vector<Eigen::MatrixXd> transition(static_cast<size_t>(n_actions));
    for (int a = 0; a < n_actions; ++a) {
        Eigen::MatrixXd t(n_states, n_states);
        for (int s = 0; s < n_states; ++s) {
            Eigen::VectorXd w(n_states);
            // The 0.05 offset keeps every entry strictly positive after scaling.
            for (int j = 0; j < n_states; ++j) w[j] = 0.05 + rng.next_double();
            w *= (1.0 - self_loop_min) / w.sum();
            w[s] += self_loop_min;
            t.row(s) = w.transpose() / w.sum();
        }
        transition[static_cast<size_t>(a)] = t;
    }

    Eigen::VectorXd rho = Eigen::VectorXd::Constant(n_states, 1.0 / n_states);
    return TabularMdp(std::move(reward), std::move(transition), std::move(rho));
}

// Drops the last state's indicator: phi(s) = e_s for s < S-1 and phi(S-1) = 0.
// Full one-hot features would put the all-ones vector in the span.
inline FeatureMap reduced_one_hot_features(int n_states) {
    if (n_states < 2) throw std::invalid_argument("reduced_one_hot_features: need n_states >= 2");
    Eigen::MatrixXd table = Eigen::MatrixXd::Zero(n_states, n_states - 1);
    table.topLeftCorner(n_states - 1, n_states - 1).setIdentity();
    return FeatureMap(std::move(table), /*assumption3_compliant=*/true);
}

} // namespace mlmcnac
