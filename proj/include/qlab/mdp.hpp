#pragma once

#include <vector>

#include "qlab/types.hpp"

namespace qlab {

/// Exact enumerated dynamics of a finite MDP. Rewards are attached to
/// (s, a): the stored value is the expected immediate reward of the pair,
/// which is all the Bellman machinery ever consumes.
struct TransitionModel {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> rewards;                   // [s * n_actions + a]
    std::vector<std::vector<Outcome>> successors;  // [s * n_actions + a], sorted by next id

    int n_pairs() const { return n_states * n_actions; }

    double reward(StateId s, ActionId a) const {
        return rewards[static_cast<std::size_t>(pair_index(s, a, n_actions))];
    }
    const std::vector<Outcome>& row(StateId s, ActionId a) const {
        return successors[static_cast<std::size_t>(pair_index(s, a, n_actions))];
    }

    /// Checks the structural invariants: per-pair probabilities are
    /// non-negative and sum to 1 within 1e-12, successor ids are in range
    /// and strictly increasing (merged duplicates, canonical order).
    /// Throws std::invalid_argument on violation.
    void validate() const;
};

/// One Bellman backup T*Q: out(s,a) = R(s,a) + gamma * sum_s' P(s,a,s') * max_a' q(s',a').
QTable bellman_backup(const TransitionModel& model, const QTable& q, double gamma,
                      Exec exec = Exec::Parallel);

struct ValueIterationResult {
    QTable q;
    int iterations = 0;
    double residual = 0.0;  // final sup-norm of successive iterates
};

/// Iterates Q <- T*Q from zero until the sup-norm residual drops to tol.
/// Throws std::runtime_error (message carries the residual) if max_iter
/// sweeps do not reach tol.
ValueIterationResult value_iteration(const TransitionModel& model, double gamma,
                                     double tol = 1e-9, int max_iter = 100000,
                                     Exec exec = Exec::Parallel);

struct GreedyPolicy {
    std::vector<ActionId> action;                 // argmax per state, lowest index on ties
    std::vector<std::vector<ActionId>> argmax_set;  // all actions within tie_tol of the max
};

/// Greedy actions of a Q table. The argmax set holds every action whose
/// value is within tie_tol of the state's maximum.
GreedyPolicy greedy_policy(const QTable& q, double tie_tol = 1e-9);

/// Expected TD-error (T*Q - Q)(s,a) for every pair, flat over pair index.
std::vector<double> expected_td(const TransitionModel& model, const QTable& q,
                                double gamma, Exec exec = Exec::Parallel);

/// One tabular Q-learning update. Returns a copy of q where only entry
/// (s, a) moved toward r + gamma * max_a' q(s_next, a') with step alpha.
QTable tabular_q_step(const QTable& q, StateId s, ActionId a, double r,
                      StateId s_next, double alpha, double gamma);

/// Euclidean norm of q - q_opt over all entries.
double q_distance(const QTable& q, const QTable& q_opt);

/// Per-state spread max_a q(s,a) - min_a q(s,a).
std::vector<double> q_gap(const QTable& q);

}  // namespace qlab
