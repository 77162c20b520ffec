#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mlmcnac/actor_critic.hpp"
#include "test_util.hpp"

using namespace mlmcnac;

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

TabularMdp bandit_mdp() {
    Eigen::MatrixXd reward(1, 2);
    reward << 1.0, 0.0;
    Eigen::MatrixXd t = Eigen::MatrixXd::Ones(1, 1);
    return TabularMdp(reward, {t, t}, Eigen::VectorXd::Ones(1));
}

AssumptionReport unit_report() {
    AssumptionReport rep;
    rep.lambda_min = 1.0;
    rep.mu_min = 1.0;
    rep.g1_bound = 1.0;
    rep.eps_app = 0.0;
    rep.t_mix = 1;
    rep.c_beta_threshold = 1.0;
    return rep;
}

} // namespace

TEST_CASE("hyperparameter derivation from a 2^16 budget with unit constants") {
    HyperOverrides ov;
    ov.smoothness = 1.0;
    const HyperParams hp = derive_hyperparameters(1L << 16, unit_report(), ov);
    REQUIRE(hp.k_outer == 256);
    REQUIRE(hp.h_inner == 32); // next power of 2 above 256 / ln(65536) ~ 23.1
    REQUIRE(hp.t_max == 1024);
    REQUIRE(hp.beta == Catch::Approx(4.0 * std::log(32.0) / 32.0).margin(1e-12));  // ~0.4332
    REQUIRE(hp.gamma == Catch::Approx(2.0 * std::log(32.0) / 32.0).margin(1e-12)); // ~0.2166
    REQUIRE(hp.alpha == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(hp.c_beta == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("overrides win over derived values") {
    HyperOverrides ov;
    ov.smoothness = 1.0;
    ov.beta = 0.01;
    AssumptionReport rep = unit_report();
    rep.lambda_min = 0.123; // would give a very different beta
    const HyperParams hp = derive_hyperparameters(1L << 12, rep, ov);
    REQUIRE(hp.beta == 0.01);
}

TEST_CASE("c_beta defaults to the threshold") {
    HyperOverrides ov;
    ov.smoothness = 1.0;
    AssumptionReport rep = unit_report();
    rep.lambda_min = 0.5;
    const HyperParams hp = derive_hyperparameters(1L << 12, rep, ov);
    REQUIRE(hp.c_beta == Catch::Approx(0.5 + std::sqrt(3.0)).margin(1e-12)); // ~2.232
    // An override below the threshold is clamped up, one above wins.
    ov.c_beta = 10.0;
    REQUIRE(derive_hyperparameters(1L << 12, rep, ov).c_beta == 10.0);
}

TEST_CASE("missing constants are reported by name") {
    AssumptionReport rep = unit_report();
    rep.lambda_min = 0.0;
    HyperOverrides ov;
    ov.smoothness = 1.0;
    REQUIRE_THROWS_MATCHES(derive_hyperparameters(1L << 12, rep, ov), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("lambda")));
    rep = unit_report();
    rep.mu_min = 0.0;
    REQUIRE_THROWS_MATCHES(derive_hyperparameters(1L << 12, rep, ov), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("mu")));
    REQUIRE_THROWS_MATCHES(derive_hyperparameters(1L << 12, unit_report(), {}), ConfigError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("smoothness")));
}

TEST_CASE("explicit K and H replace the budget") {
    HyperOverrides ov;
    ov.smoothness = 1.0;
    ov.k_outer = 10;
    ov.h_inner = 64;
    const HyperParams hp = derive_hyperparameters(0, unit_report(), ov);
    REQUIRE(hp.k_outer == 10);
    REQUIRE(hp.h_inner == 64);
    REQUIRE(hp.t_max == 4096);
    REQUIRE_THROWS_AS(derive_hyperparameters(0, unit_report(), HyperOverrides{}), ConfigError);
}

TEST_CASE("pure average-reward tracking converges to the mean reward") {
    // One state, constant reward 0.4, empty critic: the statistic is
    // deterministic, so the recursion contracts straight to eta = 0.4.
    Eigen::MatrixXd reward = Eigen::MatrixXd::Constant(1, 1, 0.4);
    Eigen::MatrixXd t = Eigen::MatrixXd::Ones(1, 1);
    const TabularMdp mdp(reward, {t}, Eigen::VectorXd::Ones(1));
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 1);
    const FeatureMap features(Eigen::MatrixXd(1, 0), true);

    HyperParams hp;
    hp.beta = 4.0 * std::log(1024.0) / 1024.0;
    hp.c_beta = 1.0;
    hp.t_max = 1 << 10;
    hp.h_inner = 1 << 10;
    RngStream rng(3);
    const SubroutineResult res = critic_subroutine(mdp, cls, Eigen::VectorXd::Zero(0),
                                                   CriticState::zero(0), features, hp, 0, rng);
    REQUIRE(std::abs(res.iterate[0] - 0.4) <= 0.05);
    REQUIRE(res.transitions > 0);
}

TEST_CASE("zero critic step is the identity") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 4);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    HyperParams hp;
    hp.beta = 0.0;
    hp.c_beta = 2.0;
    hp.t_max = 16;
    hp.h_inner = 50;
    RngStream rng(5);
    CriticState xi_init(0.7, Eigen::Vector2d(1.0, -2.0));
    const SubroutineResult res = critic_subroutine(mdp, cls, Eigen::VectorXd::Zero(3), xi_init,
                                                   features, hp, 0, rng);
    REQUIRE(res.iterate == xi_init.stacked());
}

TEST_CASE("zero NPG step is the identity") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 4);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    HyperParams hp;
    hp.gamma = 0.0;
    hp.t_max = 16;
    hp.h_inner = 50;
    RngStream rng(6);
    Eigen::VectorXd omega_init(3);
    omega_init << 1.0, 2.0, 3.0;
    const SubroutineResult res = npg_subroutine(mdp, cls, Eigen::VectorXd::Zero(3),
                                                CriticState::zero(2), omega_init, features, hp,
                                                0, rng);
    REQUIRE(res.iterate == omega_init);
}

TEST_CASE("critic subroutine approaches the TD fixed point") {
    const TabularMdp mdp = generate_random_ergodic(5, 2, 0.1, 11);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(5, 2);
    const FeatureMap features = reduced_one_hot_features(5);
    RngStream theta_rng(12);
    const Eigen::VectorXd theta = testutil::random_theta(cls.param_dim(), 0.5, theta_rng);

    // The drift floor of these instances sits near 0.03, which pins the
    // reachable accuracy at H = 2^12: the step must be large enough to
    // contract the slowest critic mode yet small enough to damp the
    // level-amplified estimator noise. A short truncation horizon keeps the
    // noise down (the chain mixes in one step, so the truncation bias is
    // negligible), and the measured floor is ~0.18 ||xi*||.
    HyperParams hp;
    hp.h_inner = 1 << 12;
    hp.t_max = 16;
    hp.c_beta = 2.0;
    hp.beta = 2.0 * std::log(static_cast<double>(hp.h_inner)) / (0.2 * hp.h_inner);

    const Eigen::VectorXd xi_star =
        td_fixed_point(mdp, cls, theta, features, hp.c_beta).xi.stacked();

    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed * 7919 + 1);
        const SubroutineResult res = critic_subroutine(mdp, cls, theta, CriticState::zero(4),
                                                       features, hp, 0, rng);
        errs.push_back((res.iterate - xi_star).norm());
    }
    REQUIRE(median_of(errs) <= 0.25 * xi_star.norm());
}

TEST_CASE("NPG subroutine approaches the exact natural gradient given the fixed point") {
    const TabularMdp mdp = generate_random_ergodic(4, 2, 0.1, 21);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(4, 2);
    const FeatureMap features = reduced_one_hot_features(4);
    RngStream theta_rng(22);
    const Eigen::VectorXd theta = testutil::random_theta(cls.param_dim(), 0.5, theta_rng);

    const AssumptionReport rep = assumption_report(mdp, cls, theta, features, 1.0);
    HyperParams hp;
    hp.h_inner = 1 << 12;
    hp.t_max = static_cast<long>(hp.h_inner) * hp.h_inner;
    hp.c_beta = rep.c_beta_threshold;
    hp.gamma = 2.0 * std::log(static_cast<double>(hp.h_inner)) / (rep.mu_min * hp.h_inner);

    const CriticState xi_star = td_fixed_point(mdp, cls, theta, features, hp.c_beta).xi;
    const Eigen::VectorXd omega_star = exact_npg(mdp, cls, theta);

    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed * 104729 + 3);
        const SubroutineResult res =
            npg_subroutine(mdp, cls, theta, xi_star, Eigen::VectorXd::Zero(cls.param_dim()),
                           features, hp, 0, rng);
        errs.push_back((res.iterate - omega_star).norm());
    }
    REQUIRE(median_of(errs) <= 0.15 * (1.0 + omega_star.norm()));
}

TEST_CASE("bandit NPG estimate lands near the exact direction") {
    const TabularMdp mdp = bandit_mdp();
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 2);
    const FeatureMap features(Eigen::MatrixXd(1, 0), true);
    const Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);

    // F = 1/4 and grad J = 1/4 at theta = 0, so omega* = 1.
    const Eigen::VectorXd omega_star = exact_npg(mdp, cls, theta);
    REQUIRE(omega_star[0] == Catch::Approx(1.0).margin(1e-10));

    const CriticState xi_star =
        td_fixed_point(mdp, cls, theta, features, 1.0).xi;
    HyperParams hp;
    hp.h_inner = 1 << 12;
    hp.t_max = static_cast<long>(hp.h_inner) * hp.h_inner;
    hp.gamma = 2.0 * std::log(static_cast<double>(hp.h_inner)) / (0.25 * hp.h_inner);

    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RngStream rng(seed + 100);
        const SubroutineResult res = npg_subroutine(mdp, cls, theta, xi_star,
                                                    Eigen::VectorXd::Zero(1), features, hp, 0,
                                                    rng);
        errs.push_back(std::abs(res.iterate[0] - 1.0));
    }
    REQUIRE(median_of(errs) <= 0.2);
}

TEST_CASE("K = 0 returns an empty trace with theta unchanged") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 31);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    HyperParams hp;
    hp.alpha = 0.1;
    hp.beta = 0.1;
    hp.gamma = 0.1;
    hp.c_beta = 2.0;
    hp.t_max = 16;
    hp.h_inner = 8;
    hp.k_outer = 0;
    RngStream rng(1);
    Eigen::VectorXd theta0(3);
    theta0 << 0.5, -0.5, 0.25;
    const RunTrace trace = mlmc_nac(mdp, cls, theta0, features, hp, rng);
    REQUIRE(trace.epochs.empty());
    REQUIRE(trace.theta_final == theta0);
    REQUIRE_FALSE(trace.aborted);
}

TEST_CASE("bandit run reaches 0.95 gain within 64 epochs in median") {
    const TabularMdp mdp = bandit_mdp();
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(1, 2);
    const FeatureMap features(Eigen::MatrixXd(1, 0), true);
    const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(1);

    const AssumptionReport rep = assumption_report(mdp, cls, theta0, features, 1.0);
    RngStream probe_rng(77);
    HyperOverrides ov;
    ov.k_outer = 64;
    ov.h_inner = 64;
    ov.smoothness = std::max(1e-6, estimate_smoothness(mdp, cls, theta0, 1.0, 100, probe_rng));
    const HyperParams hp = derive_hyperparameters(0, rep, ov);

    const ProbeFn probe = make_oracle_probe(mdp, cls, features, hp.c_beta, 1.0);
    std::vector<std::vector<double>> gains(64);
    std::vector<double> final_gain;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RngStream rng(seed);
        const RunTrace trace = mlmc_nac(mdp, cls, theta0, features, hp, rng, probe);
        REQUIRE(trace.epochs.size() == 64);
        for (size_t k = 0; k < 64; ++k) gains[k].push_back(trace.epochs[k].j_theta);
        final_gain.push_back(
            evaluate_policy(mdp, cls.policy_table(trace.theta_final)).gain);
    }
    REQUIRE(median_of(final_gain) >= 0.95);

    // Median gain curve is monotone non-decreasing up to saturation jitter.
    double prev = 0.0;
    for (size_t k = 0; k < 64; ++k) {
        const double cur = median_of(gains[k]);
        REQUIRE(cur >= prev - 5e-3);
        prev = std::max(prev, cur);
    }
}

TEST_CASE("trace accounting is exact and epoch cost matches the expectation") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 51);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    HyperParams hp;
    hp.alpha = 1e-3;
    hp.beta = 0.05;
    hp.gamma = 0.05;
    hp.c_beta = 2.0;
    hp.t_max = 1 << 8;
    hp.h_inner = 64;
    hp.k_outer = 8;

    double total = 0.0;
    long epochs_counted = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        RngStream rng(seed + 7);
        const RunTrace trace = mlmc_nac(mdp, cls, Eigen::VectorXd::Zero(3), features, hp, rng);
        long cum = 0;
        for (const EpochRecord& rec : trace.epochs) {
            cum += rec.epoch_transitions;
            REQUIRE(rec.cum_transitions == cum); // exact accounting
            total += static_cast<double>(rec.epoch_transitions);
            ++epochs_counted;
        }
    }
    // 2H assemblies per epoch, each costing log2(t_max) + 2^-log2(t_max).
    const double expected = 2.0 * hp.h_inner * (8.0 + std::pow(2.0, -8.0));
    const double measured = total / static_cast<double>(epochs_counted);
    REQUIRE(std::abs(measured - expected) / expected < 0.05);
}

TEST_CASE("divergent steps abort with a partial trace") {
    const TabularMdp mdp = generate_random_ergodic(4, 2, 0.1, 61);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(4, 2);
    const FeatureMap features = reduced_one_hot_features(4);
    HyperParams hp;
    hp.alpha = 0.1;
    hp.beta = 1e9; // way past any stability threshold
    hp.gamma = 0.1;
    hp.c_beta = 2.0;
    hp.t_max = 1 << 6;
    hp.h_inner = 4096;
    hp.k_outer = 5;
    RngStream rng(9);
    const RunTrace trace = mlmc_nac(mdp, cls, Eigen::VectorXd::Zero(4), features, hp, rng);
    REQUIRE(trace.aborted);
    REQUIRE(trace.epochs.size() < 5);
    REQUIRE_FALSE(trace.abort_reason.empty());
}

TEST_CASE("warm start carries subroutine iterates across epochs") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 81);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    HyperParams hp;
    hp.alpha = 1e-6; // keep theta essentially fixed across epochs
    hp.beta = 0.0;   // critic iterate frozen: warm start must preserve it
    hp.gamma = 0.1;
    hp.c_beta = 2.0;
    hp.t_max = 16;
    hp.h_inner = 4;
    hp.k_outer = 3;

    std::vector<double> seen_xi;
    const ProbeFn probe = [&](int, const Eigen::VectorXd&, const CriticState& xi,
                              const Eigen::VectorXd&) {
        seen_xi.push_back(xi.stacked().norm());
        return EpochProbe{};
    };
    RngStream rng(4);
    mlmc_nac(mdp, cls, Eigen::VectorXd::Zero(3), features, hp, rng, probe, 1, false);
    // Cold start + zero critic step: xi stays at zero every epoch.
    for (double norm : seen_xi) REQUIRE(norm == 0.0);

    // Warm start with a zero step keeps whatever the first epoch produced;
    // with beta = 0 that is still zero, so exercise it with a tiny step.
    hp.beta = 0.01;
    seen_xi.clear();
    RngStream rng2(4);
    mlmc_nac(mdp, cls, Eigen::VectorXd::Zero(3), features, hp, rng2, probe, 1, true);
    REQUIRE(seen_xi.size() == 3);
    REQUIRE(seen_xi[1] > 0.0); // second epoch starts from the first's iterate
}

TEST_CASE("probe cadence controls which epochs are measured") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 82);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    const FeatureMap features = reduced_one_hot_features(3);
    HyperParams hp;
    hp.alpha = 0.01;
    hp.beta = 0.1;
    hp.gamma = 0.1;
    hp.c_beta = 1.0;
    hp.t_max = 16;
    hp.h_inner = 4;
    hp.k_outer = 6;
    RngStream rng(5);
    const ProbeFn probe = [](int, const Eigen::VectorXd&, const CriticState&,
                             const Eigen::VectorXd&) {
        EpochProbe p;
        p.j_theta = 1.0;
        p.gap = 0.5;
        return p;
    };
    const RunTrace trace = mlmc_nac(mdp, cls, Eigen::VectorXd::Zero(3), features, hp, rng,
                                    probe, 3);
    REQUIRE(trace.epochs.size() == 6); // every epoch still gets a row
    REQUIRE(trace.theta_snapshots.size() == 2);
    for (const EpochRecord& rec : trace.epochs) {
        if (rec.k % 3 == 0) {
            REQUIRE(rec.gap == 0.5);
        } else {
            REQUIRE(std::isnan(rec.gap));
        }
    }
}

TEST_CASE("smoothness probe gives a positive Lipschitz estimate") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 71);
    const PolicyClass cls = PolicyClass::tabular_reduced_softmax(3, 2);
    RngStream rng(2);
    const double l1 = estimate_smoothness(mdp, cls, Eigen::VectorXd::Zero(3), 1.0, 50, rng);
    REQUIRE(l1 > 0.0);
    REQUIRE(std::isfinite(l1));
}

TEST_CASE("feature softmax policies run end to end") {
    const TabularMdp mdp = generate_random_ergodic(3, 2, 0.1, 91);
    RngStream psi_rng(92);
    Eigen::MatrixXd psi(6, 2);
    for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 2; ++c) psi(r, c) = psi_rng.next_gaussian();
        psi.row(r) /= std::max(1.0, psi.row(r).norm());
    }
    const PolicyClass cls = PolicyClass::feature_softmax(3, 2, psi);
    const FeatureMap features = reduced_one_hot_features(3);

    HyperParams hp;
    hp.alpha = 0.05;
    hp.beta = 0.2;
    hp.gamma = 0.2;
    hp.c_beta = 2.0;
    hp.t_max = 64;
    hp.h_inner = 16;
    hp.k_outer = 4;
    RngStream rng(6);
    const RunTrace trace =
        mlmc_nac(mdp, cls, Eigen::VectorXd::Zero(2), features, hp, rng);
    REQUIRE(trace.epochs.size() == 4);
    REQUIRE_FALSE(trace.aborted);
    REQUIRE(trace.theta_final.allFinite());
}
