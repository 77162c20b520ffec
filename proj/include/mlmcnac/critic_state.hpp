#pragma once

#include <Eigen/Dense>

namespace mlmcnac {

// Stacked critic iterate: an average-reward scalar plus linear value weights.
struct CriticState {
    double avg_reward = 0.0;
    Eigen::VectorXd weights; // m entries

    CriticState() = default;
    CriticState(double avg_reward, Eigen::VectorXd weights)
        : avg_reward(avg_reward), weights(std::move(weights)) {}

    static CriticState zero(int m) { return CriticState(0.0, Eigen::VectorXd::Zero(m)); }

    static CriticState from_stacked(const Eigen::VectorXd& x) {
        return CriticState(x[0], x.tail(x.size() - 1));
    }

    Eigen::VectorXd stacked() const {
        Eigen::VectorXd x(weights.size() + 1);
        x[0] = avg_reward;
        x.tail(weights.size()) = weights;
        return x;
    }

    int dim() const { return static_cast<int>(weights.size()) + 1; }
};

} // namespace mlmcnac
