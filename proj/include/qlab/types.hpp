#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlab {

using StateId = std::int32_t;
using ActionId = std::int32_t;

/// Execution policy for the data-parallel kernels. Serial and Parallel
/// produce bit-identical results: every output element is computed by a
/// single thread with a fixed operation order, so the policy only chooses
/// how elements are distributed.
enum class Exec { Serial, Parallel };

/// Flat index of a (state, action) pair: state * n_actions + action.
inline int pair_index(StateId s, ActionId a, int n_actions) {
    return static_cast<int>(s) * n_actions + static_cast<int>(a);
}

/// Dense |S| x |A| table of action values.
struct QTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> values;  // row-major, [s * n_actions + a]

    QTable() = default;
    QTable(int states, int actions, double fill = 0.0)
        : n_states(states), n_actions(actions),
          values(static_cast<std::size_t>(states) * actions, fill) {}

    double operator()(StateId s, ActionId a) const {
        return values[static_cast<std::size_t>(pair_index(s, a, n_actions))];
    }
    double& operator()(StateId s, ActionId a) {
        return values[static_cast<std::size_t>(pair_index(s, a, n_actions))];
    }

    int n_pairs() const { return n_states * n_actions; }

    bool same_shape(const QTable& other) const {
        return n_states == other.n_states && n_actions == other.n_actions;
    }

    /// Max action value of one state's row.
    double row_max(StateId s) const {
        const double* row = values.data() + static_cast<std::size_t>(s) * n_actions;
        double best = row[0];
        for (int a = 1; a < n_actions; ++a)
            if (row[a] > best) best = row[a];
        return best;
    }
};

/// One successor branch of a transition distribution.
struct Outcome {
    StateId next = 0;
    double prob = 0.0;
};

inline void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}
inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace qlab
