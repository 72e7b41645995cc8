#include "qlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace qlab {

std::vector<double> grad_matrix(const DuelingMlp& net, const ObsCache& obs, Exec exec) {
    const int pairs = obs.n_states * obs.n_actions;
    const int p = net.param_count();
    std::vector<double> g(static_cast<std::size_t>(pairs) * p);

    auto fill_row = [&](int pair, MlpWorkspace& ws) {
        const StateId s = pair / obs.n_actions;
        const ActionId a = pair % obs.n_actions;
        net.grad_q(obs.obs(s), a,
                   {g.data() + static_cast<std::size_t>(pair) * p,
                    static_cast<std::size_t>(p)},
                   ws);
    };

    if (exec == Exec::Parallel) {
#pragma omp parallel
        {
            MlpWorkspace ws;
#pragma omp for schedule(static)
            for (int pair = 0; pair < pairs; ++pair) fill_row(pair, ws);
        }
    } else {
        MlpWorkspace ws;
        for (int pair = 0; pair < pairs; ++pair) fill_row(pair, ws);
    }
    return g;
}

NtkMatrix ntk(const DuelingMlp& net, const ObsCache& obs, Exec exec) {
    const std::vector<double> g = grad_matrix(net, obs, exec);
    const int n = obs.n_states * obs.n_actions;
    const int p = net.param_count();
    NtkMatrix k;
    k.n = n;
    k.k.resize(static_cast<std::size_t>(n) * n);

    // Upper triangle dot products, mirrored: exactly symmetric.
    auto fill_row = [&](int i) {
        const double* gi = g.data() + static_cast<std::size_t>(i) * p;
        for (int j = i; j < n; ++j) {
            const double* gj = g.data() + static_cast<std::size_t>(j) * p;
            double acc = 0.0;
            for (int t = 0; t < p; ++t) acc += gi[t] * gj[t];
            k.at(i, j) = acc;
            k.at(j, i) = acc;
        }
    };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(dynamic, 4)
        for (int i = 0; i < n; ++i) fill_row(i);
    } else {
        for (int i = 0; i < n; ++i) fill_row(i);
    }
    return k;
}

double diagonal_dominance(const NtkMatrix& k) {
    const int n = k.n;
    double diag = 0.0, off = 0.0;
    for (int i = 0; i < n; ++i) {
        diag += k.at(i, i);
        for (int j = 0; j < n; ++j)
            if (j != i) off += std::fabs(k.at(i, j));
    }
    diag /= n;
    off /= static_cast<double>(n) * (n - 1);
    return off == 0.0 ? std::numeric_limits<double>::infinity() : diag / off;
}

QTable q_snapshot(const DuelingMlp& net, const ObsCache& obs, Exec exec) {
    QTable q(obs.n_states, obs.n_actions);
    auto fill = [&](StateId s, MlpWorkspace& ws, std::vector<double>& row) {
        row.resize(static_cast<std::size_t>(obs.n_actions));
        net.forward(obs.obs(s), row, ws);
        for (ActionId a = 0; a < obs.n_actions; ++a) q(s, a) = row[static_cast<std::size_t>(a)];
    };
    if (exec == Exec::Parallel) {
#pragma omp parallel
        {
            MlpWorkspace ws;
            std::vector<double> row;
#pragma omp for schedule(static)
            for (StateId s = 0; s < obs.n_states; ++s) fill(s, ws, row);
        }
    } else {
        MlpWorkspace ws;
        std::vector<double> row;
        for (StateId s = 0; s < obs.n_states; ++s) fill(s, ws, row);
    }
    return q;
}

std::vector<double> diag_deltas(const DuelingMlp& net, const DiagBatch& batch,
                                double gamma) {
    require(!batch.entries.empty(), "diag_deltas: empty batch");
    MlpWorkspace ws;
    std::vector<double> q(static_cast<std::size_t>(net.n_actions()));
    std::vector<double> deltas(batch.entries.size());
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const ReplayEntry& e = *batch.entries[i];
        net.forward(e.next_obs, q, ws);
        double boot = q[0];
        for (int a = 1; a < net.n_actions(); ++a)
            boot = std::max(boot, q[static_cast<std::size_t>(a)]);
        net.forward(e.obs, q, ws);
        deltas[i] = e.reward + gamma * boot - q[static_cast<std::size_t>(e.action)];
    }
    return deltas;
}

namespace {

/// rho * delta_hat per pair: multiplicity-weighted mean TD-error scaled by
/// the empirical batch frequency. Equal to (sum of the pair's deltas) / b.
std::vector<double> batch_weights(const DiagBatch& batch,
                                  const std::vector<double>& deltas, int n_actions,
                                  int n_pairs) {
    std::vector<double> w(static_cast<std::size_t>(n_pairs), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch.entries.size());
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const ReplayEntry& e = *batch.entries[i];
        w[static_cast<std::size_t>(pair_index(e.state, e.action, n_actions))] +=
            deltas[i] * inv_b;
    }
    return w;
}

}  // namespace

std::vector<double> decomposition_predict(const DuelingMlp& net, const DiagBatch& batch,
                                          double alpha, double gamma,
                                          const ObsCache& obs,
                                          const NtkMatrix* precomputed_k,
                                          bool identity_k) {
    const int n_pairs = obs.n_states * obs.n_actions;
    const std::vector<double> deltas = diag_deltas(net, batch, gamma);
    const std::vector<double> w = batch_weights(batch, deltas, obs.n_actions, n_pairs);

    std::vector<double> dq(static_cast<std::size_t>(n_pairs), 0.0);
    if (identity_k) {
        for (int i = 0; i < n_pairs; ++i) dq[static_cast<std::size_t>(i)] = alpha * w[static_cast<std::size_t>(i)];
        return dq;
    }
    NtkMatrix local;
    const NtkMatrix* k = precomputed_k;
    if (k == nullptr) {
        local = ntk(net, obs);
        k = &local;
    }
    for (int i = 0; i < n_pairs; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n_pairs; ++j) acc += k->at(i, j) * w[static_cast<std::size_t>(j)];
        dq[static_cast<std::size_t>(i)] = alpha * acc;
    }
    return dq;
}

namespace {

/// Signs of every trunk pre-activation across all enumerated states.
std::vector<bool> activation_signs(const DuelingMlp& net, const ObsCache& obs) {
    MlpWorkspace ws;
    std::vector<double> q(static_cast<std::size_t>(net.n_actions()));
    std::vector<bool> signs;
    signs.reserve(static_cast<std::size_t>(obs.n_states) * 2 * net.hidden());
    for (StateId s = 0; s < obs.n_states; ++s) {
        net.forward(obs.obs(s), q, ws);
        for (double z : ws.z1) signs.push_back(z > 0.0);
        for (double z : ws.z2) signs.push_back(z > 0.0);
    }
    return signs;
}

}  // namespace

DecompositionCheck decomposition_check(const DuelingMlp& net, const DiagBatch& batch,
                                       std::span<const double> alphas, double gamma,
                                       const ObsCache& obs, Exec exec) {
    require(alphas.size() >= 2, "decomposition_check: need at least two alphas");
    const int n_pairs = obs.n_states * obs.n_actions;

    // The sgd+mse gradient of this batch, with online-net targets.
    const std::vector<double> deltas = diag_deltas(net, batch, gamma);
    std::vector<LossSample> samples(batch.entries.size());
    MlpWorkspace ws;
    std::vector<double> q(static_cast<std::size_t>(net.n_actions()));
    for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        const ReplayEntry& e = *batch.entries[i];
        net.forward(e.obs, q, ws);
        samples[i] = LossSample{e.obs, e.action,
                                q[static_cast<std::size_t>(e.action)] + deltas[i]};
    }
    const LossGrad lg = loss_grad(net, samples, LossKind::Mse, exec);

    const std::vector<bool> base_signs = activation_signs(net, obs);
    const QTable q0 = q_snapshot(net, obs, exec);
    const NtkMatrix k = ntk(net, obs, exec);

    auto stepped = [&](double alpha) {
        DuelingMlp moved = net;
        OptimizerState opt = OptimizerState::sgd(alpha);
        optimizer_step(moved, opt, lg.grad, exec);
        return moved;
    };

    // Halve all alphas together until no rectifier unit flips on any
    // enumerated observation for any alpha.
    double scale = 1.0;
    int bad_unit = -1;
    for (int attempt = 0; attempt <= 3; ++attempt, scale *= 0.5) {
        bad_unit = -1;
        for (double alpha : alphas) {
            DuelingMlp moved = stepped(alpha * scale);
            const std::vector<bool> signs = activation_signs(moved, obs);
            for (std::size_t u = 0; u < signs.size(); ++u) {
                if (signs[u] != base_signs[u]) { bad_unit = static_cast<int>(u); break; }
            }
            if (bad_unit >= 0) break;
        }
        if (bad_unit < 0) break;
    }
    if (bad_unit >= 0) {
        const int per_state = 2 * net.hidden();
        throw std::runtime_error(
            "decomposition_check: rectifier unit keeps flipping after 3 halvings "
            "(state " + std::to_string(bad_unit / per_state) + ", trunk unit " +
            std::to_string(bad_unit % per_state) + ")");
    }

    DecompositionCheck out;
    out.scale = scale;
    for (double alpha : alphas) {
        const double a = alpha * scale;
        const std::vector<double> pred =
            decomposition_predict(net, batch, a, gamma, obs, &k);
        const QTable q1 = q_snapshot(stepped(a), obs, exec);
        double abs2 = 0.0, act2 = 0.0;
        for (int i = 0; i < n_pairs; ++i) {
            const double actual = q1.values[static_cast<std::size_t>(i)] -
                                  q0.values[static_cast<std::size_t>(i)];
            const double d = actual - pred[static_cast<std::size_t>(i)];
            abs2 += d * d;
            act2 += actual * actual;
        }
        DecompositionErrors e;
        e.alpha = a;
        e.abs_error = std::sqrt(abs2);
        e.actual_norm = std::sqrt(act2);
        e.rel_error = e.actual_norm > 0.0 ? e.abs_error / e.actual_norm : 0.0;
        out.per_alpha.push_back(e);
    }
    return out;
}

// --------------------------------------------------------------------------

std::string case_label_name(CaseLabel label) {
    switch (label) {
        case CaseLabel::Case1a: return "case1a";
        case CaseLabel::Case1b: return "case1b";
        case CaseLabel::Case2: return "case2";
    }
    return "?";
}

CaseLabel classify_case(StateId s, ActionId a, const StepRecord& record,
                        CaseSign binding) {
    double sum = 0.0;
    long hits = 0;
    for (const BatchSlot& slot : record.batch) {
        if (slot.state == s && slot.action == a) {
            sum += slot.delta;
            ++hits;
        }
    }
    if (hits == 0) return CaseLabel::Case2;
    const double mean = sum / static_cast<double>(hits);
    const bool positive = mean >= 0.0;  // delta == 0 resolves as the increase band
    const bool positive_is_1a = binding == CaseSign::PositiveIsCase1a;
    return (positive == positive_is_1a) ? CaseLabel::Case1a : CaseLabel::Case1b;
}

std::map<CaseLabel, CaseAverage> case_averages(std::span<const StepRecord> records,
                                               StateId s, ActionId a, CaseSign binding) {
    std::map<CaseLabel, CaseAverage> out;
    for (const StepRecord& rec : records) {
        if (!rec.learned) continue;
        const TrackedQ* tracked = nullptr;
        for (const TrackedQ& t : rec.tracked)
            if (t.state == s && t.action == a) { tracked = &t; break; }
        require(tracked != nullptr,
                "case_averages: records do not track the requested pair");
        const CaseLabel label = classify_case(s, a, rec, binding);
        CaseAverage& avg = out[label];
        avg.mean_dq += tracked->q_after - tracked->q_before;
        avg.count += 1;
    }
    for (auto& [label, avg] : out) avg.mean_dq /= static_cast<double>(avg.count);
    return out;
}

std::vector<TdRow> td_stream(std::span<const StepRecord> records, int n_states,
                             int n_actions, const std::vector<long>* initial_counts) {
    std::vector<long> counts(static_cast<std::size_t>(n_states), 0);
    if (initial_counts != nullptr) {
        require(initial_counts->size() == counts.size(), "td_stream: count length");
        counts = *initial_counts;
    }
    std::vector<TdRow> rows;
    for (const StepRecord& rec : records) {
        for (const BatchSlot& slot : rec.batch) {
            counts[static_cast<std::size_t>(slot.state)] += 1;
            rows.push_back({rec.iteration, slot.state, slot.action, slot.delta,
                            counts[static_cast<std::size_t>(slot.state)], rec.reset});
        }
    }
    return rows;
}

std::vector<VisitCount> visit_histogram(std::span<const long> state_counts, int k) {
    require(k >= 1, "visit_histogram: k must be >= 1");
    long total = 0;
    for (long c : state_counts) total += c;
    std::vector<VisitCount> all(state_counts.size());
    for (std::size_t s = 0; s < state_counts.size(); ++s)
        all[s] = {static_cast<StateId>(s), state_counts[s],
                  total > 0 ? static_cast<double>(state_counts[s]) / total : 0.0};
    std::stable_sort(all.begin(), all.end(),
                     [](const VisitCount& a, const VisitCount& b) { return a.count > b.count; });
    if (static_cast<int>(all.size()) > k) all.resize(static_cast<std::size_t>(k));
    return all;
}

std::vector<VisitCount> visit_histogram(std::span<const StepRecord> records,
                                        int n_actions, int n_states, int k) {
    std::vector<long> counts(static_cast<std::size_t>(n_states), 0);
    for (const StepRecord& rec : records)
        for (const BatchSlot& slot : rec.batch)
            counts[static_cast<std::size_t>(slot.state)] += 1;
    return visit_histogram(counts, k);
}

// --------------------------------------------------------------------------

std::vector<GapRow> gap_rows(const QTable& q, std::span<const bool> absorbing) {
    std::vector<GapRow> rows;
    const std::vector<double> gaps = q_gap(q);
    for (StateId s = 0; s < q.n_states; ++s) {
        if (!absorbing.empty() && absorbing[static_cast<std::size_t>(s)]) continue;
        double mean = 0.0;
        for (ActionId a = 0; a < q.n_actions; ++a) mean += q(s, a);
        mean /= q.n_actions;
        GapRow row;
        row.state = s;
        row.gap = gaps[static_cast<std::size_t>(s)];
        row.mean_abs_q = std::fabs(mean);
        row.normalized = row.mean_abs_q > 0.0 ? row.gap / row.mean_abs_q : 0.0;
        rows.push_back(row);
    }
    return rows;
}

namespace {
double median_normalized(const std::vector<GapRow>& rows) {
    std::vector<double> vals;
    vals.reserve(rows.size());
    for (const GapRow& r : rows) vals.push_back(r.normalized);
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}
}  // namespace

GapReport gap_report(const QTable& q_opt_fl, std::span<const bool> fl_absorbing,
                     const QTable& q_opt_tl) {
    GapReport rep;
    rep.frozenlake = gap_rows(q_opt_fl, fl_absorbing);
    rep.trafficlight = gap_rows(q_opt_tl, {});
    rep.fl_median_normalized = median_normalized(rep.frozenlake);
    rep.tl_median_normalized = median_normalized(rep.trafficlight);
    rep.ratio = rep.tl_median_normalized > 0.0
                    ? rep.fl_median_normalized / rep.tl_median_normalized
                    : std::numeric_limits<double>::infinity();
    return rep;
}

}  // namespace qlab
