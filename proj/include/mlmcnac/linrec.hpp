#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mlmcnac/errors.hpp"

namespace mlmcnac {

// Generic biased stochastic linear recursion
//     x_{h+1} = x_h - step * (P_hat_h x_h - q_hat_h)
// driven by an estimator source. Both the critic update and the
// natural-gradient update are thin adapters over this solver.

struct RecursionSpec {
    int dim = 0;
    int h_steps = 0;
    double step_size = 0.0;
    Eigen::VectorXd x0;
    // Fills the estimate pair for step h. Must produce dim x dim / dim shapes.
    std::function<void(int h, Eigen::MatrixXd& p_hat, Eigen::VectorXd& q_hat)> source;
};

struct RecursionReference {
    Eigen::MatrixXd p;
    Eigen::VectorXd q;

    Eigen::VectorXd solution() const { return p.colPivHouseholderQr().solve(q); }
};

struct RecursionDiagnostics {
    Eigen::VectorXd final;
    // Populated only when a reference is supplied:
    std::vector<double> error_sq; // ||x_h - x*||^2 for h = 0..H
    double sigma_p_sq = 0.0;      // mean ||P_hat - P||_F^2
    double sigma_q_sq = 0.0;      // mean ||q_hat - q||^2
    double delta_p_sq = 0.0;      // ||mean(P_hat) - P||_F^2
    double delta_q_sq = 0.0;      // ||mean(q_hat) - q||^2
    bool has_reference = false;
};

/// Step size 2 ln(H) / (lambda_p H): contracts the deterministic part of the
/// recursion down to a 1/H^2 factor over H steps. Natural log throughout.
inline double recursion_step_size(int h_steps, double lambda_p) {
    if (h_steps < 2) throw std::invalid_argument("recursion_step_size: need h_steps >= 2");
    if (!(lambda_p > 0.0)) throw std::invalid_argument("recursion_step_size: need lambda_p > 0");
    return 2.0 * std::log(static_cast<double>(h_steps)) / (lambda_p * h_steps);
}

inline constexpr double kDivergenceNorm = 1e12;

inline RecursionDiagnostics run_recursion(const RecursionSpec& spec,
                                          const RecursionReference* reference = nullptr) {
    if (spec.dim < 1) throw std::invalid_argument("run_recursion: dim must be positive");
    if (spec.h_steps < 0) throw std::invalid_argument("run_recursion: h_steps must be >= 0");
    if (!(spec.step_size >= 0.0)) throw std::invalid_argument("run_recursion: bad step size");
    if (spec.x0.size() != spec.dim) throw std::invalid_argument("run_recursion: x0 shape");
    if (!spec.source) throw std::invalid_argument("run_recursion: missing estimator source");

    RecursionDiagnostics diag;
    Eigen::VectorXd x = spec.x0;
    Eigen::VectorXd x_star;
    Eigen::MatrixXd mean_p;
    Eigen::VectorXd mean_q;
    if (reference != nullptr) {
        diag.has_reference = true;
        x_star = reference->solution();
        diag.error_sq.reserve(static_cast<size_t>(spec.h_steps) + 1);
        diag.error_sq.push_back((x - x_star).squaredNorm());
        mean_p = Eigen::MatrixXd::Zero(spec.dim, spec.dim);
        mean_q = Eigen::VectorXd::Zero(spec.dim);
    }

    Eigen::MatrixXd p_hat(spec.dim, spec.dim);
    Eigen::VectorXd q_hat(spec.dim);
    for (int h = 0; h < spec.h_steps; ++h) {
        spec.source(h, p_hat, q_hat);
        x -= spec.step_size * (p_hat * x - q_hat);
        if (!x.allFinite() || x.norm() > kDivergenceNorm)
            throw DivergenceError("recursion iterate diverged at step " + std::to_string(h), h);
        if (reference != nullptr) {
            diag.error_sq.push_back((x - x_star).squaredNorm());
            diag.sigma_p_sq += (p_hat - reference->p).squaredNorm();
            diag.sigma_q_sq += (q_hat - reference->q).squaredNorm();
            mean_p += p_hat;
            mean_q += q_hat;
        }
    }

    if (reference != nullptr && spec.h_steps > 0) {
        const double inv_h = 1.0 / spec.h_steps;
        diag.sigma_p_sq *= inv_h;
        diag.sigma_q_sq *= inv_h;
        diag.delta_p_sq = (mean_p * inv_h - reference->p).squaredNorm();
        diag.delta_q_sq = (mean_q * inv_h - reference->q).squaredNorm();
    }
    diag.final = std::move(x);
    return diag;
}

/// Runs independent replicas of a recursion, averages the final iterates and
/// reports ||mean(x_H) - x*||^2. With a constant bias delta injected into
/// q_hat and no P noise, the analytic limit is ||P^{-1} delta||^2.
inline double bias_floor_probe(const std::function<RecursionSpec(int replica)>& spec_for_replica,
                               const RecursionReference& reference, int replicas) {
    if (replicas < 1) throw std::invalid_argument("bias_floor_probe: need replicas >= 1");
    Eigen::VectorXd mean;
    for (int r = 0; r < replicas; ++r) {
        const RecursionDiagnostics diag = run_recursion(spec_for_replica(r), &reference);
        if (r == 0)
            mean = diag.final;
        else
            mean += diag.final;
    }
    mean /= static_cast<double>(replicas);
    return (mean - reference.solution()).squaredNorm();
}

} // namespace mlmcnac
