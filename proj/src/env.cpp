#include "qlab/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace qlab {

namespace {

/// Canonicalize: sort by successor id and merge duplicates. Probabilities
/// add; rewards merge as the probability-weighted mean of the duplicates
/// (branches of equal next state always carry equal rewards here, so this
/// is exact).
StepDistribution canonicalize(std::vector<Branch> raw) {
    std::map<StateId, Branch> merged;
    for (const Branch& b : raw) {
        auto [it, fresh] = merged.try_emplace(b.next, b);
        if (!fresh) {
            Branch& m = it->second;
            m.reward = (m.reward * m.prob + b.reward * b.prob) / (m.prob + b.prob);
            m.prob += b.prob;
        }
    }
    StepDistribution dist;
    dist.branches.reserve(merged.size());
    for (auto& [id, b] : merged) dist.branches.push_back(b);
    return dist;
}

}  // namespace

// --------------------------------------------------------------------------
// FrozenLake
// --------------------------------------------------------------------------

bool FrozenLake::is_hole(StateId s) {
    return s == 5 || s == 7 || s == 11 || s == 12;  // (1,1) (3,1) (3,2) (0,3)
}

void FrozenLake::encode(StateId s, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(s)] = 1.0;
}

StepDistribution FrozenLake::transitions(StateId s, ActionId a) const {
    const bool goal = is_goal(s);
    const double reward = goal ? 1.0 : 0.0;
    if (goal || is_hole(s)) return {{{s, 1.0, reward}}};

    // dx/dy per action L, D, R, U; slipping moves in the chosen direction
    // or one of its cyclic neighbors, 1/3 each.
    static constexpr int dx[4] = {-1, 0, 1, 0};
    static constexpr int dy[4] = {0, 1, 0, -1};
    const auto [x, y] = frozen_lake_state(s);
    std::vector<Branch> raw;
    for (int k = -1; k <= 1; ++k) {
        int dir = (a + k + 4) % 4;
        int nx = std::clamp(x + dx[dir], 0, 3);
        int ny = std::clamp(y + dy[dir], 0, 3);
        raw.push_back({frozen_lake_id({nx, ny}), 1.0 / 3.0, reward});
    }
    return canonicalize(std::move(raw));
}

std::string FrozenLake::state_label(StateId s) const {
    const auto [x, y] = frozen_lake_state(s);
    return "(" + std::to_string(x) + "," + std::to_string(y) + ")";
}

std::string FrozenLake::action_label(ActionId a) const {
    static constexpr const char* kNames[4] = {"L", "D", "R", "U"};
    return kNames[a];
}

// --------------------------------------------------------------------------
// TrafficLight
// --------------------------------------------------------------------------

TrafficLight::TrafficLight(TrafficParams params) : params_(params) {
    require(params_.q_max >= 1, "TrafficLight: q_max must be >= 1");
    require(params_.arrival_p >= 0.0 && params_.arrival_p <= 1.0,
            "TrafficLight: arrival probability outside [0, 1]");
}

int TrafficLight::n_states() const {
    int nq = params_.q_max + 1;
    return 4 * nq * nq;
}

int TrafficLight::obs_dim() const {
    return params_.encoding == TrafficEncoding::ScaledQueues ? 6 : 3;
}

StateId TrafficLight::state_id(const TrafficState& s) const {
    int nq = params_.q_max + 1;
    return s.light + 4 * (s.q_v + nq * s.q_h);
}

TrafficState TrafficLight::state(StateId id) const {
    int nq = params_.q_max + 1;
    TrafficState s;
    s.light = id % 4;
    id /= 4;
    s.q_v = id % nq;
    s.q_h = id / nq;
    return s;
}

void TrafficLight::encode(StateId id, std::span<double> out) const {
    const TrafficState s = state(id);
    if (params_.encoding == TrafficEncoding::ScaledQueues) {
        std::fill(out.begin(), out.end(), 0.0);
        out[0] = static_cast<double>(s.q_h) / params_.q_max;
        out[1] = static_cast<double>(s.q_v) / params_.q_max;
        out[2 + static_cast<std::size_t>(s.light)] = 1.0;
    } else {
        out[0] = static_cast<double>(s.q_h);
        out[1] = static_cast<double>(s.q_v);
        out[2] = static_cast<double>(s.light);
    }
}

StepDistribution TrafficLight::transitions(StateId id, ActionId a) const {
    const TrafficState s = state(id);
    const int q_max = params_.q_max;
    const double p = params_.arrival_p;

    const int post_light = (a == kActionSwitch) ? traffic_next_light(s.light) : s.light;
    const int serve_light =
        params_.service_light == ServiceLight::PostAction ? post_light : s.light;

    int h = s.q_h, v = s.q_v;
    if (serve_light == 0 && h > 0) --h;  // GR serves the horizontal queue
    if (serve_light == 1 && v > 0) --v;  // RG serves the vertical queue

    const double current_reward =
        -static_cast<double>(s.q_h) * s.q_h - static_cast<double>(s.q_v) * s.q_v;

    // Independent Bernoulli(p) arrival per queue strictly below the cap
    // after service.
    std::vector<Branch> raw;
    for (int ah = 0; ah < 2; ++ah) {
        double ph = (h < q_max) ? (ah ? p : 1.0 - p) : (ah ? 0.0 : 1.0);
        if (ph <= 0.0) continue;
        for (int av = 0; av < 2; ++av) {
            double pv = (v < q_max) ? (av ? p : 1.0 - p) : (av ? 0.0 : 1.0);
            if (pv <= 0.0) continue;
            const int nh = h + ah, nv = v + av;
            Branch b;
            b.next = state_id({nh, nv, post_light});
            b.prob = ph * pv;
            b.reward = params_.reward_on == RewardOn::NextState
                           ? -static_cast<double>(nh) * nh - static_cast<double>(nv) * nv
                           : current_reward;
            raw.push_back(b);
        }
    }
    return canonicalize(std::move(raw));
}

std::string TrafficLight::state_label(StateId id) const {
    const TrafficState s = state(id);
    return "(" + std::to_string(s.q_h) + "," + std::to_string(s.q_v) + "," +
           std::to_string(s.light) + ")";
}

std::string TrafficLight::action_label(ActionId a) const {
    return a == kActionContinue ? "continue" : "switch";
}

// --------------------------------------------------------------------------

std::unique_ptr<Environment> make_environment(const EnvConfig& cfg) {
    if (cfg.id == "frozenlake") return std::make_unique<FrozenLake>();
    if (cfg.id == "trafficlight") return std::make_unique<TrafficLight>(cfg.traffic);
    throw std::invalid_argument("unknown environment id: " + cfg.id);
}

TransitionModel build_model(const Environment& env) {
    TransitionModel model;
    model.n_states = env.n_states();
    model.n_actions = env.n_actions();
    model.rewards.resize(static_cast<std::size_t>(model.n_pairs()));
    model.successors.resize(static_cast<std::size_t>(model.n_pairs()));
    for (StateId s = 0; s < model.n_states; ++s) {
        for (ActionId a = 0; a < model.n_actions; ++a) {
            StepDistribution dist = env.transitions(s, a);
            const int p = pair_index(s, a, model.n_actions);
            model.rewards[static_cast<std::size_t>(p)] = dist.expected_reward();
            auto& row = model.successors[static_cast<std::size_t>(p)];
            row.reserve(dist.branches.size());
            for (const Branch& b : dist.branches) row.push_back({b.next, b.prob});
        }
    }
    model.validate();
    return model;
}

std::pair<StateId, double> sample_branch(const StepDistribution& dist, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (const Branch& b : dist.branches) {
        acc += b.prob;
        if (u < acc) return {b.next, b.reward};
    }
    const Branch& last = dist.branches.back();
    return {last.next, last.reward};
}

std::pair<StateId, double> sample_step(const Environment& env, StateId s, ActionId a,
                                       Rng& rng) {
    return sample_branch(env.transitions(s, a), rng);
}

ObsCache ObsCache::build(const Environment& env) {
    ObsCache cache;
    cache.n_states = env.n_states();
    cache.n_actions = env.n_actions();
    cache.dim = env.obs_dim();
    cache.data.resize(static_cast<std::size_t>(cache.n_states) * cache.dim);
    for (StateId s = 0; s < cache.n_states; ++s)
        env.encode(s, {cache.data.data() + static_cast<std::size_t>(s) * cache.dim,
                       static_cast<std::size_t>(cache.dim)});
    return cache;
}

}  // namespace qlab
