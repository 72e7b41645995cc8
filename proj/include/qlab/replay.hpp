#pragma once

#include <cstddef>
#include <vector>

#include "qlab/rng.hpp"
#include "qlab/types.hpp"

namespace qlab {

/// One experienced transition. State ids are kept alongside the encoded
/// observations for the diagnostics.
struct ReplayEntry {
    std::vector<double> obs;
    std::vector<double> next_obs;
    ActionId action = 0;
    double reward = 0.0;
    StateId state = 0;
    StateId next_state = 0;
    long step = 0;
};

/// Fixed-capacity FIFO ring. Logical index 0 is the oldest live entry.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(ReplayEntry entry);

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    long insertions() const { return insertions_; }

    /// Oldest-first access, i in [0, size).
    const ReplayEntry& at(std::size_t i) const;

    /// Uniform logical index, with replacement across calls.
    std::size_t sample_index(Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // slot holding the oldest entry once full
    long insertions_ = 0;
    std::vector<ReplayEntry> entries_;
};

}  // namespace qlab
