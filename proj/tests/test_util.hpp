#pragma once

#include <Eigen/Dense>

#include "mlmcnac/mdp.hpp"
#include "mlmcnac/rng.hpp"

namespace testutil {

/// Random stochastic S x A table with strictly positive entries.
inline Eigen::MatrixXd random_policy_table(int n_states, int n_actions, mlmcnac::RngStream& rng) {
    Eigen::MatrixXd table(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < n_actions; ++a) {
            table(s, a) = 0.05 + rng.next_double();
            sum += table(s, a);
        }
        table.row(s) /= sum;
    }
    return table;
}

inline Eigen::VectorXd random_theta(int dim, double scale, mlmcnac::RngStream& rng) {
    Eigen::VectorXd theta(dim);
    for (int i = 0; i < dim; ++i) theta[i] = scale * (2.0 * rng.next_double() - 1.0);
    return theta;
}

/// Independent stationary-distribution oracle: repeated left-multiplication.
inline Eigen::VectorXd power_iteration_stationary(const Eigen::MatrixXd& chain,
                                                  const Eigen::VectorXd& start, int iters) {
    Eigen::RowVectorXd d = start.transpose();
    for (int i = 0; i < iters; ++i) d = d * chain;
    return d.transpose();
}

} // namespace testutil
