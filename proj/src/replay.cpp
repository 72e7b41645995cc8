#include "qlab/replay.hpp"

namespace qlab {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    require(capacity > 0, "ReplayBuffer: capacity must be positive");
    entries_.reserve(capacity);
}

void ReplayBuffer::push(ReplayEntry entry) {
    if (entries_.size() < capacity_) {
        entries_.push_back(std::move(entry));
    } else {
        entries_[head_] = std::move(entry);
        head_ = (head_ + 1) % capacity_;
    }
    ++insertions_;
}

const ReplayEntry& ReplayBuffer::at(std::size_t i) const {
    return entries_[(head_ + i) % entries_.size()];
}

std::size_t ReplayBuffer::sample_index(Rng& rng) const {
    return rng.uniform_int(static_cast<std::uint32_t>(entries_.size()));
}

}  // namespace qlab
