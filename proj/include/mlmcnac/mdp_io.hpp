#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlmcnac/errors.hpp"
#include "mlmcnac/mdp.hpp"

namespace mlmcnac {

// MDP file schema: UTF-8 JSON object with keys
//   n_states, n_actions, reward (S x A), transition (S x A x S), initial_dist (S).
// Doubles are emitted as shortest round-trip decimal literals, so
// save -> load is bit-exact.

inline void save_mdp(const TabularMdp& mdp, const std::string& path) {
    const int S = mdp.n_states();
    const int A = mdp.n_actions();
    nlohmann::json j;
    j["n_states"] = S;
    j["n_actions"] = A;

    nlohmann::json reward = nlohmann::json::array();
    for (int s = 0; s < S; ++s) {
        nlohmann::json row = nlohmann::json::array();
        for (int a = 0; a < A; ++a) row.push_back(mdp.reward(s, a));
        reward.push_back(std::move(row));
    }
    j["reward"] = std::move(reward);

    nlohmann::json transition = nlohmann::json::array();
    for (int s = 0; s < S; ++s) {
        nlohmann::json per_action = nlohmann::json::array();
        for (int a = 0; a < A; ++a) {
            nlohmann::json row = nlohmann::json::array();
            for (int s2 = 0; s2 < S; ++s2) row.push_back(mdp.transition(a)(s, s2));
            per_action.push_back(std::move(row));
        }
        transition.push_back(std::move(per_action));
    }
    j["transition"] = std::move(transition);

    nlohmann::json rho = nlohmann::json::array();
    for (int s = 0; s < S; ++s) rho.push_back(mdp.initial_dist()[s]);
    j["initial_dist"] = std::move(rho);

    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'");
    return *it;
}

} // namespace detail

inline TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed JSON in " + path + ": " + e.what());
    }

    try {
        const int S = detail::require_field(j, "n_states").get<int>();
        const int A = detail::require_field(j, "n_actions").get<int>();
        if (S < 1 || A < 1) throw ParseError("n_states/n_actions must be positive");

        const auto& jr = detail::require_field(j, "reward");
        if (static_cast<int>(jr.size()) != S) throw ParseError("field 'reward': expected " +
                                                               std::to_string(S) + " rows");
        Eigen::MatrixXd reward(S, A);
        for (int s = 0; s < S; ++s) {
            if (static_cast<int>(jr[s].size()) != A)
                throw ParseError("field 'reward' row " + std::to_string(s) + ": expected " +
                                 std::to_string(A) + " entries");
            for (int a = 0; a < A; ++a) reward(s, a) = jr[s][a].get<double>();
        }

        const auto& jt = detail::require_field(j, "transition");
        if (static_cast<int>(jt.size()) != S) throw ParseError("field 'transition': expected " +
                                                               std::to_string(S) + " rows");
        std::vector<Eigen::MatrixXd> transition(static_cast<size_t>(A),
                                                Eigen::MatrixXd(S, S));
        for (int s = 0; s < S; ++s) {
            if (static_cast<int>(jt[s].size()) != A)
                throw ParseError("field 'transition' state " + std::to_string(s) +
                                 ": expected " + std::to_string(A) + " action rows");
            for (int a = 0; a < A; ++a) {
                if (static_cast<int>(jt[s][a].size()) != S)
                    throw ParseError("field 'transition' row (s=" + std::to_string(s) + ", a=" +
                                     std::to_string(a) + "): expected " + std::to_string(S) +
                                     " entries");
                for (int s2 = 0; s2 < S; ++s2)
                    transition[static_cast<size_t>(a)](s, s2) = jt[s][a][s2].get<double>();
            }
        }

        const auto& jd = detail::require_field(j, "initial_dist");
        if (static_cast<int>(jd.size()) != S)
            throw ParseError("field 'initial_dist': expected " + std::to_string(S) + " entries");
        Eigen::VectorXd rho(S);
        for (int s = 0; s < S; ++s) rho[s] = jd[s].get<double>();

        return TabularMdp(std::move(reward), std::move(transition), std::move(rho));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad value in " + path + ": " + e.what());
    }
}

/// Flat JSON array of decimals.
inline void save_vector(const Eigen::VectorXd& v, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << j.dump() << "\n";
}

inline Eigen::VectorXd load_vector(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed JSON in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError(path + ": expected a flat JSON array");
    Eigen::VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ParseError(path + ": non-numeric entry at index " +
                                                std::to_string(i));
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

} // namespace mlmcnac
