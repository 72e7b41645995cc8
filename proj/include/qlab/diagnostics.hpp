#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "qlab/env.hpp"
#include "qlab/net.hpp"
#include "qlab/trainer.hpp"

namespace qlab {

/// Dense symmetric Gram matrix over (state, action) pairs.
struct NtkMatrix {
    int n = 0;
    std::vector<double> k;  // row-major n x n

    double at(int i, int j) const { return k[static_cast<std::size_t>(i) * n + j]; }
    double& at(int i, int j) { return k[static_cast<std::size_t>(i) * n + j]; }
};

/// Gradient matrix G: row p = grad of Q(pair p) w.r.t. the flat
/// parameters, for every enumerated pair. Row-major n_pairs x P.
std::vector<double> grad_matrix(const DuelingMlp& net, const ObsCache& obs,
                                Exec exec = Exec::Parallel);

/// Neural tangent kernel K = G * G^T. Exactly symmetric by construction.
NtkMatrix ntk(const DuelingMlp& net, const ObsCache& obs, Exec exec = Exec::Parallel);

/// mean_i K[i,i] / mean_{i != j} |K[i,j]|; the generalization-strength
/// scalar reported with each NTK export.
double diagonal_dominance(const NtkMatrix& k);

/// Online-net Q values on every enumerated state.
QTable q_snapshot(const DuelingMlp& net, const ObsCache& obs,
                  Exec exec = Exec::Parallel);

/// A replay batch view for the decomposition machinery.
struct DiagBatch {
    std::vector<const ReplayEntry*> entries;
};

/// Realized TD-errors of a batch under the diagnostic configuration
/// (online-net bootstrap, no target net): delta_i = r_i + gamma *
/// max_a Q(s'_i, a) - Q(s_i, a_i).
std::vector<double> diag_deltas(const DuelingMlp& net, const DiagBatch& batch,
                                double gamma);

/// First-order prediction of the Q change of one sgd+mse step of rate
/// alpha: dQ = alpha * K * D_rho * delta_hat, where D_rho holds the
/// batch's empirical pair frequencies and delta_hat averages duplicate
/// pairs' TD-errors. Pass a precomputed K to amortize it across alphas;
/// identity_k replaces K by the identity (the tabular limit).
std::vector<double> decomposition_predict(const DuelingMlp& net, const DiagBatch& batch,
                                          double alpha, double gamma, const ObsCache& obs,
                                          const NtkMatrix* precomputed_k = nullptr,
                                          bool identity_k = false);

struct DecompositionErrors {
    double alpha = 0.0;
    double abs_error = 0.0;   // ||dQ_actual - dQ_pred||_2
    double rel_error = 0.0;   // abs_error / ||dQ_actual||_2
    double actual_norm = 0.0;
};

struct DecompositionCheck {
    double scale = 1.0;  // kink-avoidance halving applied to all alphas
    std::vector<DecompositionErrors> per_alpha;
};

/// Runs decomposition_predict against an actual sgd+mse step from the
/// same parameters, for each alpha (scaled by up to 3 halvings if a step
/// would flip a rectifier unit on any enumerated observation). Throws
/// std::runtime_error naming the offending unit if kinks persist.
DecompositionCheck decomposition_check(const DuelingMlp& net, const DiagBatch& batch,
                                       std::span<const double> alphas, double gamma,
                                       const ObsCache& obs, Exec exec = Exec::Parallel);

enum class CaseLabel { Case1a, Case1b, Case2 };

std::string case_label_name(CaseLabel label);

/// Case of one tracked pair at one iteration: absent from the sampled
/// batch -> Case2; present -> the sign band of its mean TD-error, with
/// delta = 0 resolved as the positive band. The sign -> name binding
/// comes from CaseSign.
CaseLabel classify_case(StateId s, ActionId a, const StepRecord& record,
                        CaseSign binding);

struct CaseAverage {
    long count = 0;
    double mean_dq = 0.0;  // mean actual Q change of the tracked pair
};

/// Per-label mean tracked-pair Q change over a window of records.
/// Labels with no members are absent from the map.
std::map<CaseLabel, CaseAverage> case_averages(std::span<const StepRecord> records,
                                               StateId s, ActionId a, CaseSign binding);

struct TdRow {
    long iteration = 0;
    StateId state = 0;
    ActionId action = 0;
    double delta = 0.0;
    long visits = 0;  // cumulative training visits of the state so far
    bool reset = false;
};

/// Flat export of in-batch TD-errors joined with cumulative state training
/// visits. `initial_counts`, when given, seeds the counters (records that
/// start mid-run).
std::vector<TdRow> td_stream(std::span<const StepRecord> records, int n_states,
                             int n_actions,
                             const std::vector<long>* initial_counts = nullptr);

struct VisitCount {
    StateId state = 0;
    long count = 0;
    double fraction = 0.0;
};

/// Top-k states by cumulative training frequency, descending; ties break
/// to the lower state id.
std::vector<VisitCount> visit_histogram(std::span<const long> state_counts, int k);
std::vector<VisitCount> visit_histogram(std::span<const StepRecord> records,
                                        int n_actions, int n_states, int k);

struct GapRow {
    StateId state = 0;
    double gap = 0.0;
    double mean_abs_q = 0.0;
    double normalized = 0.0;  // gap / |mean_a q(s,a)|
};

struct GapReport {
    std::vector<GapRow> frozenlake;    // non-absorbing states only
    std::vector<GapRow> trafficlight;  // all states
    double fl_median_normalized = 0.0;
    double tl_median_normalized = 0.0;
    double ratio = 0.0;  // fl / tl
};

/// Per-state action-value spreads of the two oracles and the
/// cross-environment contrast of their normalized medians.
GapReport gap_report(const QTable& q_opt_fl, std::span<const bool> fl_absorbing,
                     const QTable& q_opt_tl);

/// Gap rows for one table (helper shared by gap_report and cmd_solve).
std::vector<GapRow> gap_rows(const QTable& q, std::span<const bool> absorbing);

}  // namespace qlab
