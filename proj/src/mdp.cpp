#include "qlab/mdp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qlab {

void TransitionModel::validate() const {
    require(n_states > 0 && n_actions > 0, "TransitionModel: empty state or action set");
    require(rewards.size() == static_cast<std::size_t>(n_pairs()),
            "TransitionModel: reward table size mismatch");
    require(successors.size() == static_cast<std::size_t>(n_pairs()),
            "TransitionModel: successor table size mismatch");
    for (int p = 0; p < n_pairs(); ++p) {
        const auto& row = successors[static_cast<std::size_t>(p)];
        require(!row.empty(), "TransitionModel: empty transition row " + std::to_string(p));
        double sum = 0.0;
        StateId prev = -1;
        for (const Outcome& o : row) {
            require(o.prob >= 0.0, "TransitionModel: negative probability");
            require(o.next >= 0 && o.next < n_states,
                    "TransitionModel: successor out of range");
            require(o.next > prev, "TransitionModel: unmerged or unsorted successors");
            prev = o.next;
            sum += o.prob;
        }
        require(std::fabs(sum - 1.0) <= 1e-12,
                "TransitionModel: probabilities of row " + std::to_string(p) +
                    " sum to " + std::to_string(sum));
    }
}

namespace {

void check_shape(const TransitionModel& model, const QTable& q) {
    require(q.n_states == model.n_states && q.n_actions == model.n_actions,
            "Q table shape does not match the model");
}

// One output entry of T*Q. `vmax` holds max_a' q(s', a') per state.
inline double backup_entry(const TransitionModel& model, const double* vmax, int pair,
                           double gamma) {
    const auto& row = model.successors[static_cast<std::size_t>(pair)];
    double acc = 0.0;
    for (const Outcome& o : row) acc += o.prob * vmax[o.next];
    return model.rewards[static_cast<std::size_t>(pair)] + gamma * acc;
}

void row_maxima(const QTable& q, std::vector<double>& vmax) {
    vmax.resize(static_cast<std::size_t>(q.n_states));
    for (StateId s = 0; s < q.n_states; ++s) vmax[static_cast<std::size_t>(s)] = q.row_max(s);
}

void backup_into(const TransitionModel& model, const std::vector<double>& vmax,
                 double gamma, Exec exec, QTable& out) {
    const int pairs = model.n_pairs();
    double* dst = out.values.data();
    const double* vm = vmax.data();
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int p = 0; p < pairs; ++p) dst[p] = backup_entry(model, vm, p, gamma);
    } else {
        for (int p = 0; p < pairs; ++p) dst[p] = backup_entry(model, vm, p, gamma);
    }
}

}  // namespace

QTable bellman_backup(const TransitionModel& model, const QTable& q, double gamma,
                      Exec exec) {
    check_shape(model, q);
    QTable out(model.n_states, model.n_actions);
    std::vector<double> vmax;
    row_maxima(q, vmax);
    backup_into(model, vmax, gamma, exec, out);
    return out;
}

ValueIterationResult value_iteration(const TransitionModel& model, double gamma,
                                     double tol, int max_iter, Exec exec) {
    require(tol > 0.0, "value_iteration: tol must be positive");
    ValueIterationResult res;
    res.q = QTable(model.n_states, model.n_actions);
    QTable next(model.n_states, model.n_actions);
    std::vector<double> vmax;
    for (int it = 0; it < max_iter; ++it) {
        row_maxima(res.q, vmax);
        backup_into(model, vmax, gamma, exec, next);
        double resid = 0.0;
        for (int p = 0; p < model.n_pairs(); ++p) {
            double d = std::fabs(next.values[static_cast<std::size_t>(p)] -
                                 res.q.values[static_cast<std::size_t>(p)]);
            if (d > resid) resid = d;
        }
        res.q.values.swap(next.values);
        res.iterations = it + 1;
        res.residual = resid;
        if (resid <= tol) return res;
    }
    throw std::runtime_error("value_iteration: no convergence after " +
                             std::to_string(max_iter) +
                             " sweeps, residual = " + std::to_string(res.residual));
}

GreedyPolicy greedy_policy(const QTable& q, double tie_tol) {
    GreedyPolicy pol;
    pol.action.resize(static_cast<std::size_t>(q.n_states));
    pol.argmax_set.resize(static_cast<std::size_t>(q.n_states));
    for (StateId s = 0; s < q.n_states; ++s) {
        double best = q.row_max(s);
        ActionId arg = 0;
        for (ActionId a = 0; a < q.n_actions; ++a) {
            if (q(s, a) == best) { arg = a; break; }
        }
        pol.action[static_cast<std::size_t>(s)] = arg;
        auto& set = pol.argmax_set[static_cast<std::size_t>(s)];
        for (ActionId a = 0; a < q.n_actions; ++a)
            if (best - q(s, a) <= tie_tol) set.push_back(a);
    }
    return pol;
}

std::vector<double> expected_td(const TransitionModel& model, const QTable& q,
                                double gamma, Exec exec) {
    check_shape(model, q);
    QTable backed = bellman_backup(model, q, gamma, exec);
    std::vector<double> td(static_cast<std::size_t>(model.n_pairs()));
    for (int p = 0; p < model.n_pairs(); ++p)
        td[static_cast<std::size_t>(p)] = backed.values[static_cast<std::size_t>(p)] -
                                          q.values[static_cast<std::size_t>(p)];
    return td;
}

QTable tabular_q_step(const QTable& q, StateId s, ActionId a, double r, StateId s_next,
                      double alpha, double gamma) {
    require(alpha > 0.0 && alpha <= 1.0, "tabular_q_step: alpha outside (0, 1]");
    QTable out = q;
    double target = r + gamma * q.row_max(s_next);
    out(s, a) = (1.0 - alpha) * q(s, a) + alpha * target;
    return out;
}

double q_distance(const QTable& q, const QTable& q_opt) {
    require(q.same_shape(q_opt), "q_distance: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.values.size(); ++i) {
        double d = q.values[i] - q_opt.values[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

std::vector<double> q_gap(const QTable& q) {
    std::vector<double> gap(static_cast<std::size_t>(q.n_states));
    for (StateId s = 0; s < q.n_states; ++s) {
        double lo = q(s, 0), hi = q(s, 0);
        for (ActionId a = 1; a < q.n_actions; ++a) {
            double v = q(s, a);
            if (v < lo) lo = v;
            if (v > hi) hi = v;
        }
        gap[static_cast<std::size_t>(s)] = hi - lo;
    }
    return gap;
}

}  // namespace qlab
