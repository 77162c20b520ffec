#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

#include "mlmcnac/rng.hpp"

namespace mlmcnac {

enum class PolicyKind {
    TabularReducedSoftmax, // one free logit per (state, action) pair except the last action
    FeatureSoftmax,        // log-linear in action features psi(s,a)
};

// Differentiable softmax policy family. The tabular form pins the last
// action's logit to 0; the full tabular softmax has a singular Fisher matrix
// along per-state constant logit shifts, and the reduced form removes that
// null space. The feature form gives d << S*A for the general case.
class PolicyClass {
public:
    static PolicyClass tabular_reduced_softmax(int n_states, int n_actions) {
        if (n_states < 1 || n_actions < 1)
            throw std::invalid_argument("tabular_reduced_softmax: bad sizes");
        PolicyClass c;
        c.kind_ = PolicyKind::TabularReducedSoftmax;
        c.n_states_ = n_states;
        c.n_actions_ = n_actions;
        c.dim_ = n_states * (n_actions - 1);
        return c;
    }

    // `psi` holds action features row-major by (s, a): row s * A + a, each with norm <= 1.
    static PolicyClass feature_softmax(int n_states, int n_actions, Eigen::MatrixXd psi) {
        if (n_states < 1 || n_actions < 1)
            throw std::invalid_argument("feature_softmax: bad sizes");
        if (psi.rows() != static_cast<Eigen::Index>(n_states) * n_actions)
            throw std::invalid_argument("feature_softmax: psi must have S*A rows");
        for (Eigen::Index r = 0; r < psi.rows(); ++r)
            if (psi.row(r).norm() > 1.0 + 1e-12)
                throw std::invalid_argument("feature_softmax: ||psi(s,a)|| must be <= 1");
        PolicyClass c;
        c.kind_ = PolicyKind::FeatureSoftmax;
        c.n_states_ = n_states;
        c.n_actions_ = n_actions;
        c.dim_ = static_cast<int>(psi.cols());
        c.psi_ = std::move(psi);
        return c;
    }

    PolicyKind kind() const { return kind_; }
    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    int param_dim() const { return dim_; }

    Eigen::VectorXd action_probs(const Eigen::VectorXd& theta, int s) const {
        check_theta(theta);
        check_state(s);
        Eigen::VectorXd logits = logits_at(theta, s);
        logits.array() -= logits.maxCoeff();
        Eigen::VectorXd probs = logits.array().exp();
        probs /= probs.sum();
        return probs;
    }

    /// Gradient of log pi(a|s) with respect to theta.
    Eigen::VectorXd score(const Eigen::VectorXd& theta, int s, int a) const {
        check_theta(theta);
        check_state(s);
        check_action(a);
        const Eigen::VectorXd probs = action_probs(theta, s);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
        if (kind_ == PolicyKind::TabularReducedSoftmax) {
            const int base = s * (n_actions_ - 1);
            for (int j = 0; j < n_actions_ - 1; ++j)
                g[base + j] = (a == j ? 1.0 : 0.0) - probs[j];
        } else {
            g = psi_.row(row_index(s, a)).transpose();
            for (int b = 0; b < n_actions_; ++b)
                g -= probs[b] * psi_.row(row_index(s, b)).transpose();
        }
        return g;
    }

    int sample_action(const Eigen::VectorXd& theta, int s, RngStream& rng) const {
        return sample_categorical(action_probs(theta, s), rng);
    }

    /// Dense S x A policy table, for the exact-oracle side.
    Eigen::MatrixXd policy_table(const Eigen::VectorXd& theta) const {
        Eigen::MatrixXd table(n_states_, n_actions_);
        for (int s = 0; s < n_states_; ++s) table.row(s) = action_probs(theta, s).transpose();
        return table;
    }

private:
    PolicyClass() = default;

    Eigen::VectorXd logits_at(const Eigen::VectorXd& theta, int s) const {
        Eigen::VectorXd logits(n_actions_);
        if (kind_ == PolicyKind::TabularReducedSoftmax) {
            const int base = s * (n_actions_ - 1);
            for (int a = 0; a < n_actions_ - 1; ++a) logits[a] = theta[base + a];
            logits[n_actions_ - 1] = 0.0;
        } else {
            for (int a = 0; a < n_actions_; ++a)
                logits[a] = psi_.row(row_index(s, a)).dot(theta);
        }
        return logits;
    }

    int row_index(int s, int a) const { return s * n_actions_ + a; }

    void check_theta(const Eigen::VectorXd& theta) const {
        if (theta.size() != dim_) throw std::invalid_argument("theta dimension mismatch");
        if (!theta.allFinite()) throw std::invalid_argument("theta has non-finite entries");
    }
    void check_state(int s) const {
        if (s < 0 || s >= n_states_) throw std::out_of_range("state index out of range");
    }
    void check_action(int a) const {
        if (a < 0 || a >= n_actions_) throw std::out_of_range("action index out of range");
    }

    PolicyKind kind_ = PolicyKind::TabularReducedSoftmax;
    int n_states_ = 0;
    int n_actions_ = 0;
    int dim_ = 0;
    Eigen::MatrixXd psi_; // (S*A) x d, feature softmax only
};

/// theta <- theta + alpha * omega.
inline Eigen::VectorXd actor_update(const Eigen::VectorXd& theta, const Eigen::VectorXd& omega,
                                    double alpha) {
    if (theta.size() != omega.size())
        throw std::invalid_argument("actor_update: dimension mismatch");
    if (!(alpha > 0.0)) throw std::invalid_argument("actor_update: alpha must be positive");
    return theta + alpha * omega;
}

} // namespace mlmcnac
