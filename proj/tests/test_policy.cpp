#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mlmcnac/policy.hpp"
#include "test_util.hpp"

using namespace mlmcnac;

namespace {

/// Central finite differences of log pi(a|s) in theta.
Eigen::VectorXd fd_score(const PolicyClass& cls, const Eigen::VectorXd& theta, int s, int a,
                         double step) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd hi = theta, lo = theta;
        hi[i] += step;
        lo[i] -= step;
        g[i] = (std::log(cls.action_probs(hi, s)[a]) - std::log(cls.action_probs(lo, s)[a])) /
               (2.0 * step);
    }
    return g;
}

PolicyClass random_feature_softmax(int S, int A, int d, std::uint64_t seed) {
    RngStream rng(seed);
    Eigen::MatrixXd psi(S * A, d);
    for (Eigen::Index r = 0; r < psi.rows(); ++r) {
        for (int c = 0; c < d; ++c) psi(r, c) = rng.next_gaussian();
        psi.row(r) /= std::max(1.0, psi.row(r).norm());
    }
    return PolicyClass::feature_softmax(S, A, psi);
}

} // namespace

TEST_CASE("zero parameters give the uniform policy") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(2, 4);
    const Eigen::VectorXd probs = cls.action_probs(Eigen::VectorXd::Zero(6), 1);
    for (int a = 0; a < 4; ++a) REQUIRE(probs[a] == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("reduced softmax evaluates logits against the pinned last action") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 2);
    Eigen::VectorXd theta(1);
    theta << 3.0;
    const Eigen::VectorXd probs = cls.action_probs(theta, 0);
    const double expected = std::exp(3.0) / (std::exp(3.0) + 1.0);
    REQUIRE(probs[0] == Catch::Approx(expected).epsilon(1e-12));
    REQUIRE(probs.sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(probs.minCoeff() > 0.0);
}

TEST_CASE("reduced softmax has no shift invariance in the free logits") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 3);
    Eigen::VectorXd theta(2), shifted(2);
    theta << 1.0, 2.0;
    shifted << 2.0, 3.0;
    const Eigen::VectorXd p1 = cls.action_probs(theta, 0);
    const Eigen::VectorXd p2 = cls.action_probs(shifted, 0);
    REQUIRE((p1 - p2).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("action_probs rejects non-finite parameters") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 2);
    Eigen::VectorXd theta(1);
    theta << std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(cls.action_probs(theta, 0), std::invalid_argument);
}

TEST_CASE("score closed form for the one-state two-action class at zero") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 2);
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
    REQUIRE(cls.score(theta, 0, 0)[0] == Catch::Approx(0.5).margin(1e-15));
    REQUIRE(cls.score(theta, 0, 1)[0] == Catch::Approx(-0.5).margin(1e-15));
}

TEST_CASE("expected score under the policy is zero") {
    RngStream rng(8);
    const PolicyClass tab = PolicyClass::tabular_reduced_softmax(3, 3);
    const PolicyClass feat = random_feature_softmax(3, 3, 4, 21);
    for (const PolicyClass& cls : {tab, feat}) {
        for (int trial = 0; trial < 5; ++trial) {
            const Eigen::VectorXd theta = testutil::random_theta(cls.param_dim(), 2.0, rng);
            for (int s = 0; s < 3; ++s) {
                const Eigen::VectorXd probs = cls.action_probs(theta, s);
                Eigen::VectorXd mean = Eigen::VectorXd::Zero(cls.param_dim());
                for (int a = 0; a < 3; ++a) mean += probs[a] * cls.score(theta, s, a);
                REQUIRE(mean.cwiseAbs().maxCoeff() < 1e-12);
            }
        }
    }
}

TEST_CASE("score matches finite differences of log probabilities") {
    RngStream rng(99);
    const PolicyClass tab = PolicyClass::tabular_reduced_softmax(2, 3);
    const PolicyClass feat = random_feature_softmax(2, 3, 5, 13);
    for (const PolicyClass& cls : {tab, feat}) {
        for (int trial = 0; trial < 25; ++trial) {
            const Eigen::VectorXd theta = testutil::random_theta(cls.param_dim(), 1.5, rng);
            const int s = static_cast<int>(rng.next_u64() % 2);
            const int a = static_cast<int>(rng.next_u64() % 3);
            const Eigen::VectorXd exact = cls.score(theta, s, a);
            const Eigen::VectorXd approx = fd_score(cls, theta, s, a, 1e-6);
            REQUIRE((exact - approx).norm() <= 1e-5 * std::max(1.0, exact.norm()));
        }
    }
}

TEST_CASE("tabular reduced softmax score norm is bounded by sqrt(2)") {
    RngStream rng(5);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(4, 3);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::VectorXd theta = testutil::random_theta(cls.param_dim(), 3.0, rng);
        const int s = static_cast<int>(rng.next_u64() % 4);
        const int a = static_cast<int>(rng.next_u64() % 3);
        REQUIRE(cls.score(theta, s, a).norm() <= std::sqrt(2.0) + 1e-12);
    }
}

TEST_CASE("sample_action frequencies are uniform at zero parameters") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 4);
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
    RngStream rng(77);
    const int n = 100000;
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i) ++counts[cls.sample_action(theta, 0, rng)];
    for (int a = 0; a < 4; ++a)
        REQUIRE(std::abs(static_cast<double>(counts[a]) / n - 0.25) < 0.02);
}

TEST_CASE("sample_action saturates under a dominant logit") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 2);
    Eigen::VectorXd theta(1);
    theta << 8.0;
    RngStream rng(2);
    const int n = 10000;
    int hits = 0;
    for (int i = 0; i < n; ++i)
        if (cls.sample_action(theta, 0, rng) == 0) ++hits;
    REQUIRE(static_cast<double>(hits) / n >= 0.99);
}

TEST_CASE("sample_action is deterministic in the stream") {
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 3);
    RngStream theta_rng(4);
    const Eigen::VectorXd theta = testutil::random_theta(2, 1.0, theta_rng);
    RngStream r1(123), r2(123);
    for (int i = 0; i < 200; ++i)
        REQUIRE(cls.sample_action(theta, 0, r1) == cls.sample_action(theta, 0, r2));
}

TEST_CASE("actor_update arithmetic and validation") {
    Eigen::VectorXd theta(2), omega(2);
    theta << 1.0, 2.0;
    omega << 2.0, -2.0;
    REQUIRE(actor_update(theta, Eigen::VectorXd::Zero(2), 0.3) == theta);
    REQUIRE(actor_update(theta, -theta, 1.0) == Eigen::VectorXd::Zero(2));
    REQUIRE(actor_update(theta, omega, 0.5) == Eigen::Vector2d(2.0, 1.0));
    REQUIRE_THROWS_AS(actor_update(theta, Eigen::VectorXd::Zero(3), 0.5),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(actor_update(theta, omega, 0.0), std::invalid_argument);
}

TEST_CASE("feature softmax rejects oversized feature rows") {
    Eigen::MatrixXd psi = Eigen::MatrixXd::Constant(4, 2, 1.0); // norm sqrt(2) > 1
    REQUIRE_THROWS_AS(PolicyClass::feature_softmax(2, 2, psi), std::invalid_argument);
}
