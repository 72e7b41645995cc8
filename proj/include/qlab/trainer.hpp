#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qlab/env.hpp"
#include "qlab/mdp.hpp"
#include "qlab/net.hpp"
#include "qlab/replay.hpp"
#include "qlab/rng.hpp"

namespace qlab {

/// Which TD-error sign band carries the "Case1a" name in case analysis.
enum class CaseSign { PositiveIsCase1a, NegativeIsCase1a };

struct TrainConfig {
    EnvConfig env;

    long total_steps = 500000;
    double gamma = 0.99;
    double learning_rate = 0.0005;
    std::size_t buffer_capacity = 50000;
    int batch_size = 32;
    long target_sync = 500;        // copy online -> target every tau iterations
    double eps_initial = 1.0;
    double eps_final = 0.02;
    double eps_decay_fraction = 0.10;
    long warmup = 1000;            // env steps before the first gradient update
    long reset_period = 1000;      // env returns to its initial state
    LossKind loss = LossKind::Huber;
    bool double_q = true;
    OptimizerKind optimizer = OptimizerKind::Adam;
    std::uint64_t seed = 1;

    // Instrumentation.
    long metrics_every = 500;      // Q snapshot cadence for the metrics log
    long snapshot_every = 500;     // parameter snapshot hook cadence
    long td_stream_every = 100;    // subsampled TD export cadence outside the window
    long record_start = 0;         // [record_start, record_end): full per-iteration
    long record_end = 0;           //   records are retained / persisted
    std::vector<std::pair<StateId, ActionId>> track_pairs;
    CaseSign case1a_sign = CaseSign::PositiveIsCase1a;

    /// Throws std::invalid_argument naming the offending key.
    void validate() const;
};

/// Linear exploration schedule: eps_initial at t=0 down to eps_final at
/// t = eps_decay_fraction * total_steps, constant afterward.
double epsilon(long t, const TrainConfig& cfg);

/// Epsilon-greedy over the online Q values; greedy ties break to the
/// lowest action index.
ActionId select_action(const DuelingMlp& net, std::span<const double> obs, double eps,
                       Rng& rng, MlpWorkspace& ws);

/// Bootstrap targets y = r + gamma * (double_q ? Q'(s', argmax_a Q(s',a))
///                                            : max_a Q'(s',a)).
/// No terminal masking: both environments are continuing MDPs.
std::vector<double> compute_targets(const DuelingMlp& online, const DuelingMlp& target,
                                    std::span<const ReplayEntry* const> batch,
                                    double gamma, bool double_q,
                                    Exec exec = Exec::Parallel);

struct BatchSlot {
    std::size_t buffer_index = 0;
    StateId state = 0;
    ActionId action = 0;
    StateId next_state = 0;
    double delta = 0.0;  // target - Q(s,a), the realized TD-error
};

struct TrackedQ {
    StateId state = 0;
    ActionId action = 0;
    double q_before = 0.0;
    double q_after = 0.0;
};

/// Per-iteration diagnostics emitted by the trainer.
struct StepRecord {
    long iteration = 0;
    double eps = 0.0;
    bool learned = false;  // a gradient step was taken
    bool synced = false;   // target <- online happened this iteration
    bool reset = false;    // env was returned to its initial state
    StateId env_state = 0;
    ActionId env_action = 0;
    StateId env_next = 0;
    double env_reward = 0.0;
    std::vector<BatchSlot> batch;    // empty until past warmup
    std::vector<TrackedQ> tracked;   // one per configured tracked pair
};

class Trainer {
public:
    explicit Trainer(TrainConfig cfg, Exec exec = Exec::Parallel);

    /// Runs one iteration: env step, buffer push, and past warmup one
    /// minibatch descent step; target sync / env reset on their periods.
    StepRecord train_iteration();

    long step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }
    const Environment& env() const { return *env_; }
    const TransitionModel& model() const { return model_; }
    const ObsCache& obs_cache() const { return obs_; }
    const DuelingMlp& online() const { return online_; }
    const DuelingMlp& target() const { return target_; }
    const OptimizerState& optimizer() const { return opt_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    const QTable& q_opt() const { return q_opt_; }
    StateId env_state() const { return env_state_; }

    /// Online-net Q values over every enumerated state.
    QTable q_snapshot() const;

    /// Cumulative counts of batch occurrences ("training visits").
    const std::vector<long>& pair_train_counts() const { return pair_train_counts_; }
    std::vector<long> state_train_counts() const;
    /// Cumulative counts of environment visits while acting.
    const std::vector<long>& state_visit_counts() const { return state_visit_counts_; }

private:
    TrainConfig cfg_;
    Exec exec_;
    std::unique_ptr<Environment> env_;
    TransitionModel model_;
    ObsCache obs_;
    QTable q_opt_;
    DuelingMlp online_, target_;
    OptimizerState opt_;
    ReplayBuffer buffer_;
    Rng rng_sim_;    // explore coin, random action, env successor
    Rng rng_batch_;  // replay sampling
    StateId env_state_ = 0;
    long step_ = 0;
    std::vector<long> pair_train_counts_;
    std::vector<long> state_visit_counts_;

    // Reused buffers for the hot loop.
    MlpWorkspace ws_;
    LossGrad grad_;
    std::vector<double> scratch_;
    std::vector<const ReplayEntry*> batch_ptrs_;
    std::vector<LossSample> samples_;
    std::vector<std::size_t> batch_indices_;
};

struct MetricsRow {
    long iteration = 0;
    std::string name;
    double value = 0.0;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;
    // Wide per-pair Q trajectory, one row per metrics interval.
    std::vector<long> q_iterations;
    std::vector<std::vector<double>> q_rows;  // each of length n_pairs
};

struct RunHooks {
    std::function<void(const Trainer&, const StepRecord&)> on_step;
    std::function<void(const Trainer&, long)> on_snapshot;  // every snapshot_every
};

struct RunArtifacts {
    DuelingMlp final_params;
    MetricsLog metrics;
    std::vector<long> pair_train_counts;
    std::vector<long> state_visit_counts;
    long iterations = 0;
    long buffer_insertions = 0;
};

/// Drives total_steps iterations, recording the metrics log at
/// metrics_every and invoking hooks. Hook exceptions abort the run with
/// context. Deterministic per (config, seed).
RunArtifacts run_training(const TrainConfig& cfg, const RunHooks& hooks = {},
                          Exec exec = Exec::Parallel);

}  // namespace qlab
