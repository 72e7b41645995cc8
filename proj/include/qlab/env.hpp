#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qlab/mdp.hpp"
#include "qlab/rng.hpp"
#include "qlab/types.hpp"

namespace qlab {

/// One successor branch together with the reward realized on it. The
/// reward may vary across branches (TrafficLight scores the post-step
/// queues); the enumerated TransitionModel keeps the expectation.
struct Branch {
    StateId next = 0;
    double prob = 0.0;
    double reward = 0.0;
};

struct StepDistribution {
    std::vector<Branch> branches;  // sorted by next id, duplicates merged
    double expected_reward() const {
        double r = 0.0;
        for (const Branch& b : branches) r += b.prob * b.reward;
        return r;
    }
};

class Environment {
public:
    virtual ~Environment() = default;
    virtual std::string name() const = 0;
    virtual int n_states() const = 0;
    virtual int n_actions() const = 0;
    virtual int obs_dim() const = 0;
    virtual StateId initial_state() const = 0;
    virtual bool is_absorbing(StateId s) const = 0;
    virtual void encode(StateId s, std::span<double> out) const = 0;
    virtual StepDistribution transitions(StateId s, ActionId a) const = 0;
    virtual std::string state_label(StateId s) const = 0;
    virtual std::string action_label(ActionId a) const = 0;
};

// ---------------------------------------------------------------------------
// FrozenLake: 4x4 slippery gridworld. State id = 4*y + x with (x, y) =
// (column, row), origin top-left. Actions L=0, D=1, R=2, U=3. Moving slips
// to the chosen direction or one of its two neighbors in the L-D-R-U cycle,
// each with probability 1/3; boundary moves stay in place. Holes and the
// goal are absorbing; reward 1 on every action taken at the goal.
// ---------------------------------------------------------------------------

struct FrozenLakeState {
    int x = 0;
    int y = 0;
};

inline StateId frozen_lake_id(const FrozenLakeState& s) { return 4 * s.y + s.x; }
inline FrozenLakeState frozen_lake_state(StateId id) { return {id % 4, id / 4}; }

class FrozenLake final : public Environment {
public:
    static constexpr int kActionLeft = 0;
    static constexpr int kActionDown = 1;
    static constexpr int kActionRight = 2;
    static constexpr int kActionUp = 3;

    std::string name() const override { return "frozenlake"; }
    int n_states() const override { return 16; }
    int n_actions() const override { return 4; }
    int obs_dim() const override { return 16; }
    StateId initial_state() const override { return 0; }
    bool is_absorbing(StateId s) const override { return is_hole(s) || is_goal(s); }
    void encode(StateId s, std::span<double> out) const override;
    StepDistribution transitions(StateId s, ActionId a) const override;
    std::string state_label(StateId s) const override;
    std::string action_label(ActionId a) const override;

    static bool is_hole(StateId s);
    static bool is_goal(StateId s) { return s == 15; }
};

// ---------------------------------------------------------------------------
// TrafficLight: two queues and a four-phase light GR=0 -> YR=2 -> RG=1 ->
// RY=3 -> GR. State id = light + 4 * (q_v + (q_max+1) * q_h). Actions
// continue=0, switch=1. GR serves one car from the horizontal queue, RG
// one from the vertical; yellow phases serve nothing.
//
// The step conventions the paper leaves unstated are configuration:
//   service_light  which light phase services a queue during the step.
//                  PreAction (default): the phase the step started in;
//                  the action's phase change takes effect next step.
//   reward_on      NextState (default): reward = -q_h'^2 - q_v'^2 on the
//                  post-step queues (expectation in the enumerated model);
//                  CurrentState: scored on the queues the step started with.
// The defaults are the calibrated pair that reproduces the published
// optimal Q values; see the oracle golden tests.
// ---------------------------------------------------------------------------

struct TrafficState {
    int q_h = 0;
    int q_v = 0;
    int light = 0;
};

enum class ServiceLight { PreAction, PostAction };
enum class RewardOn { NextState, CurrentState };
enum class TrafficEncoding { ScaledQueues, RawTuple };

struct TrafficParams {
    int q_max = 5;
    double arrival_p = 0.45;
    ServiceLight service_light = ServiceLight::PreAction;
    RewardOn reward_on = RewardOn::NextState;
    TrafficEncoding encoding = TrafficEncoding::ScaledQueues;
};

/// Light phase that follows `light` in the cycle GR -> YR -> RG -> RY -> GR.
inline int traffic_next_light(int light) {
    static constexpr int kNext[4] = {2, 3, 1, 0};
    return kNext[light];
}

/// Queue swap symmetry: (q_h, q_v, l) -> (q_v, q_h, sigma(l)) with
/// sigma swapping GR<->RG and YR<->RY. An involution that commutes with
/// the dynamics.
inline TrafficState traffic_mirror(const TrafficState& s) {
    static constexpr int kSigma[4] = {1, 0, 3, 2};
    return {s.q_v, s.q_h, kSigma[s.light]};
}

class TrafficLight final : public Environment {
public:
    static constexpr int kActionContinue = 0;
    static constexpr int kActionSwitch = 1;

    explicit TrafficLight(TrafficParams params = {});

    std::string name() const override { return "trafficlight"; }
    int n_states() const override;
    int n_actions() const override { return 2; }
    int obs_dim() const override;
    StateId initial_state() const override { return state_id({0, 0, 0}); }
    bool is_absorbing(StateId) const override { return false; }
    void encode(StateId s, std::span<double> out) const override;
    StepDistribution transitions(StateId s, ActionId a) const override;
    std::string state_label(StateId s) const override;
    std::string action_label(ActionId a) const override;

    const TrafficParams& params() const { return params_; }
    StateId state_id(const TrafficState& s) const;
    TrafficState state(StateId id) const;
    StateId mirror_id(StateId id) const { return state_id(traffic_mirror(state(id))); }

private:
    TrafficParams params_;
};

// ---------------------------------------------------------------------------

struct EnvConfig {
    std::string id = "frozenlake";  // "frozenlake" | "trafficlight"
    TrafficParams traffic;
};

/// Builds an environment from its string id. Throws std::invalid_argument
/// for unknown ids.
std::unique_ptr<Environment> make_environment(const EnvConfig& cfg);

/// Enumerates every (state, action) of an environment into an exact
/// TransitionModel (rewards are per-pair expectations).
TransitionModel build_model(const Environment& env);

/// Draws one branch of a step distribution. Identical rng state gives an
/// identical draw.
std::pair<StateId, double> sample_branch(const StepDistribution& dist, Rng& rng);

/// Convenience single-step sampler over env.transitions(s, a).
std::pair<StateId, double> sample_step(const Environment& env, StateId s, ActionId a,
                                       Rng& rng);

/// All observations of an environment, row-major n_states x obs_dim.
struct ObsCache {
    int n_states = 0;
    int n_actions = 0;
    int dim = 0;
    std::vector<double> data;

    std::span<const double> obs(StateId s) const {
        return {data.data() + static_cast<std::size_t>(s) * dim,
                static_cast<std::size_t>(dim)};
    }
    static ObsCache build(const Environment& env);
};

}  // namespace qlab
