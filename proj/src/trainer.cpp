#include "qlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qlab {

void TrainConfig::validate() const {
    require(env.id == "frozenlake" || env.id == "trafficlight",
            "env: unknown environment id '" + env.id + "'");
    require(total_steps >= 0, "total_steps: must be >= 0");
    require(gamma > 0.0 && gamma < 1.0, "gamma: must lie in (0, 1)");
    require(learning_rate > 0.0, "learning_rate: must be positive");
    require(buffer_capacity > 0, "buffer_capacity: must be positive");
    require(batch_size > 0, "batch_size: must be positive");
    require(target_sync > 0, "target_sync: must be positive");
    require(eps_initial >= 0.0 && eps_initial <= 1.0, "eps_initial: outside [0, 1]");
    require(eps_final >= 0.0 && eps_final <= 1.0, "eps_final: outside [0, 1]");
    require(eps_decay_fraction > 0.0 && eps_decay_fraction <= 1.0,
            "eps_decay_fraction: outside (0, 1]");
    require(warmup >= 0, "warmup: must be >= 0");
    require(reset_period > 0, "reset_period: must be positive");
    require(metrics_every > 0, "metrics_every: must be positive");
    require(snapshot_every > 0, "snapshot_every: must be positive");
    require(td_stream_every > 0, "td_stream_every: must be positive");
    require(record_start <= record_end, "record_start: exceeds record_end");
}

double epsilon(long t, const TrainConfig& cfg) {
    const double threshold = cfg.eps_decay_fraction * static_cast<double>(cfg.total_steps);
    if (static_cast<double>(t) >= threshold) return cfg.eps_final;
    const double frac = static_cast<double>(t) / threshold;
    return cfg.eps_initial + (cfg.eps_final - cfg.eps_initial) * frac;
}

ActionId select_action(const DuelingMlp& net, std::span<const double> obs, double eps,
                       Rng& rng, MlpWorkspace& ws) {
    const int n = net.n_actions();
    if (rng.uniform01() < eps)
        return static_cast<ActionId>(rng.uniform_int(static_cast<std::uint32_t>(n)));
    std::vector<double>& q = ws.g_adv;  // scratch
    q.resize(static_cast<std::size_t>(n));
    net.forward(obs, q, ws);
    ActionId best = 0;
    for (ActionId a = 1; a < n; ++a)
        if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
    return best;
}

std::vector<double> compute_targets(const DuelingMlp& online, const DuelingMlp& target,
                                    std::span<const ReplayEntry* const> batch,
                                    double gamma, bool double_q, Exec exec) {
    require(!batch.empty(), "compute_targets: empty batch");
    const int b = static_cast<int>(batch.size());
    std::vector<double> y(static_cast<std::size_t>(b));
    const int n = online.n_actions();

    auto one = [&](int i, MlpWorkspace& ws, std::vector<double>& qt,
                   std::vector<double>& qo) {
        const ReplayEntry& e = *batch[static_cast<std::size_t>(i)];
        qt.resize(static_cast<std::size_t>(n));
        target.forward(e.next_obs, qt, ws);
        double bootstrap;
        if (double_q) {
            qo.resize(static_cast<std::size_t>(n));
            online.forward(e.next_obs, qo, ws);
            ActionId arg = 0;
            for (ActionId a = 1; a < n; ++a)
                if (qo[static_cast<std::size_t>(a)] > qo[static_cast<std::size_t>(arg)])
                    arg = a;
            bootstrap = qt[static_cast<std::size_t>(arg)];
        } else {
            bootstrap = qt[0];
            for (int a = 1; a < n; ++a)
                bootstrap = std::max(bootstrap, qt[static_cast<std::size_t>(a)]);
        }
        y[static_cast<std::size_t>(i)] = e.reward + gamma * bootstrap;
    };

    if (exec == Exec::Parallel) {
#pragma omp parallel
        {
            MlpWorkspace ws;
            std::vector<double> qt, qo;
#pragma omp for schedule(static)
            for (int i = 0; i < b; ++i) one(i, ws, qt, qo);
        }
    } else {
        MlpWorkspace ws;
        std::vector<double> qt, qo;
        for (int i = 0; i < b; ++i) one(i, ws, qt, qo);
    }
    return y;
}

// --------------------------------------------------------------------------

namespace {
TrainConfig validated(TrainConfig cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

Trainer::Trainer(TrainConfig cfg, Exec exec)
    : cfg_(validated(std::move(cfg))),
      exec_(exec),
      env_(make_environment(cfg_.env)),
      model_(build_model(*env_)),
      obs_(ObsCache::build(*env_)),
      q_opt_(value_iteration(model_, cfg_.gamma, 1e-9, 100000, exec).q),
      online_(DuelingMlp::initialized(env_->obs_dim(), env_->n_actions(),
                                      derive_seed(cfg_.seed, 0))),
      target_(online_),
      opt_(cfg_.optimizer == OptimizerKind::Adam
               ? OptimizerState::adam(cfg_.learning_rate, online_.param_count())
               : OptimizerState::sgd(cfg_.learning_rate)),
      buffer_(cfg_.buffer_capacity),
      rng_sim_(derive_seed(cfg_.seed, 1)),
      rng_batch_(derive_seed(cfg_.seed, 2)),
      env_state_(env_->initial_state()),
      pair_train_counts_(static_cast<std::size_t>(model_.n_pairs()), 0),
      state_visit_counts_(static_cast<std::size_t>(model_.n_states), 0) {
    for (auto [s, a] : cfg_.track_pairs) {
        require(s >= 0 && s < model_.n_states, "track_pairs: state out of range");
        require(a >= 0 && a < model_.n_actions, "track_pairs: action out of range");
    }
}

StepRecord Trainer::train_iteration() {
    const long t = step_;
    StepRecord rec;
    rec.iteration = t;
    rec.eps = epsilon(t, cfg_);

    // Scheduled reset to the initial state, before acting.
    if (t > 0 && t % cfg_.reset_period == 0) {
        env_state_ = env_->initial_state();
        rec.reset = true;
    }

    // One environment step.
    const StateId s = env_state_;
    state_visit_counts_[static_cast<std::size_t>(s)] += 1;
    const ActionId a = select_action(online_, obs_.obs(s), rec.eps, rng_sim_, ws_);
    auto [s_next, reward] = sample_branch(env_->transitions(s, a), rng_sim_);
    rec.env_state = s;
    rec.env_action = a;
    rec.env_next = s_next;
    rec.env_reward = reward;

    ReplayEntry entry;
    entry.obs.assign(obs_.obs(s).begin(), obs_.obs(s).end());
    entry.next_obs.assign(obs_.obs(s_next).begin(), obs_.obs(s_next).end());
    entry.action = a;
    entry.reward = reward;
    entry.state = s;
    entry.next_state = s_next;
    entry.step = t;
    buffer_.push(std::move(entry));
    env_state_ = s_next;

    // Minibatch descent once warmup filled the buffer.
    if (t >= cfg_.warmup) {
        rec.learned = true;
        const int b = cfg_.batch_size;
        batch_indices_.resize(static_cast<std::size_t>(b));
        batch_ptrs_.resize(static_cast<std::size_t>(b));
        samples_.resize(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            const std::size_t idx = buffer_.sample_index(rng_batch_);
            batch_indices_[static_cast<std::size_t>(i)] = idx;
            batch_ptrs_[static_cast<std::size_t>(i)] = &buffer_.at(idx);
        }
        std::vector<double> targets =
            compute_targets(online_, target_, batch_ptrs_, cfg_.gamma, cfg_.double_q, exec_);
        for (int i = 0; i < b; ++i) {
            const ReplayEntry& e = *batch_ptrs_[static_cast<std::size_t>(i)];
            samples_[static_cast<std::size_t>(i)] =
                LossSample{e.obs, e.action, targets[static_cast<std::size_t>(i)]};
        }

        if (!cfg_.track_pairs.empty()) {
            rec.tracked.reserve(cfg_.track_pairs.size());
            std::vector<double> q(static_cast<std::size_t>(model_.n_actions));
            for (auto [ts, ta] : cfg_.track_pairs) {
                online_.forward(obs_.obs(ts), q, ws_);
                rec.tracked.push_back({ts, ta, q[static_cast<std::size_t>(ta)], 0.0});
            }
        }

        loss_grad(online_, samples_, cfg_.loss, exec_, grad_, scratch_);
        optimizer_step(online_, opt_, grad_.grad, exec_);

        rec.batch.resize(static_cast<std::size_t>(b));
        for (int i = 0; i < b; ++i) {
            const ReplayEntry& e = *batch_ptrs_[static_cast<std::size_t>(i)];
            BatchSlot& slot = rec.batch[static_cast<std::size_t>(i)];
            slot.buffer_index = batch_indices_[static_cast<std::size_t>(i)];
            slot.state = e.state;
            slot.action = e.action;
            slot.next_state = e.next_state;
            slot.delta = -grad_.residuals[static_cast<std::size_t>(i)];  // target - Q
            pair_train_counts_[static_cast<std::size_t>(
                pair_index(e.state, e.action, model_.n_actions))] += 1;
        }

        if (!rec.tracked.empty()) {
            std::vector<double> q(static_cast<std::size_t>(model_.n_actions));
            for (TrackedQ& tq : rec.tracked) {
                online_.forward(obs_.obs(tq.state), q, ws_);
                tq.q_after = q[static_cast<std::size_t>(tq.action)];
            }
        }
    }

    // Target sync at the end of the iteration.
    if (t % cfg_.target_sync == 0) {
        target_ = online_;
        rec.synced = true;
    }

    step_ = t + 1;
    return rec;
}

QTable Trainer::q_snapshot() const {
    QTable q(model_.n_states, model_.n_actions);
    MlpWorkspace ws;
    std::vector<double> row(static_cast<std::size_t>(model_.n_actions));
    for (StateId s = 0; s < model_.n_states; ++s) {
        online_.forward(obs_.obs(s), row, ws);
        for (ActionId a = 0; a < model_.n_actions; ++a) q(s, a) = row[static_cast<std::size_t>(a)];
    }
    return q;
}

std::vector<long> Trainer::state_train_counts() const {
    std::vector<long> counts(static_cast<std::size_t>(model_.n_states), 0);
    for (StateId s = 0; s < model_.n_states; ++s) {
        long acc = 0;
        for (ActionId a = 0; a < model_.n_actions; ++a)
            acc += pair_train_counts_[static_cast<std::size_t>(
                pair_index(s, a, model_.n_actions))];
        counts[static_cast<std::size_t>(s)] = acc;
    }
    return counts;
}

RunArtifacts run_training(const TrainConfig& cfg, const RunHooks& hooks, Exec exec) {
    cfg.validate();
    Trainer trainer(cfg, exec);
    RunArtifacts out;

    auto log_metrics = [&](long iteration) {
        QTable q = trainer.q_snapshot();
        out.metrics.rows.push_back(
            {iteration, "q_dist", q_distance(q, trainer.q_opt())});
        out.metrics.rows.push_back({iteration, "epsilon", epsilon(iteration, cfg)});
        out.metrics.rows.push_back(
            {iteration, "buffer_size", static_cast<double>(trainer.buffer().size())});
        out.metrics.q_iterations.push_back(iteration);
        out.metrics.q_rows.push_back(q.values);
    };

    for (long t = 0; t < cfg.total_steps; ++t) {
        StepRecord rec = trainer.train_iteration();
        if (hooks.on_step) {
            try {
                hooks.on_step(trainer, rec);
            } catch (const std::exception& e) {
                throw std::runtime_error("step hook failed at iteration " +
                                         std::to_string(t) + ": " + e.what());
            }
        }
        const long done = t + 1;
        if (done % cfg.metrics_every == 0 || done == cfg.total_steps) log_metrics(done);
        if (hooks.on_snapshot && (done % cfg.snapshot_every == 0 || done == cfg.total_steps)) {
            try {
                hooks.on_snapshot(trainer, done);
            } catch (const std::exception& e) {
                throw std::runtime_error("snapshot hook failed at iteration " +
                                         std::to_string(done) + ": " + e.what());
            }
        }
    }

    out.final_params = trainer.online();
    out.pair_train_counts = trainer.pair_train_counts();
    out.state_visit_counts = trainer.state_visit_counts();
    out.iterations = trainer.step();
    out.buffer_insertions = trainer.buffer().insertions();
    return out;
}

}  // namespace qlab
