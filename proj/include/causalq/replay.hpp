#pragma once

#include "causalq/cmdp.hpp"
#include "causalq/rng.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace causalq {

/// Fixed-capacity FIFO transition store with uniform sampling (with
/// replacement) over its current contents.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
        storage_.reserve(std::min<std::size_t>(capacity, 1 << 20));
    }

    void push(const Transition& t) {
        if (storage_.size() < capacity_) {
            storage_.push_back(t);
        } else {
            storage_[cursor_] = t;
        }
        cursor_ = (cursor_ + 1) % capacity_;
    }

    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return storage_.empty(); }

    /// Element i in insertion order, oldest first.
    const Transition& operator[](std::size_t i) const {
        if (i >= storage_.size()) throw std::out_of_range("ReplayBuffer: index out of range");
        const std::size_t oldest = storage_.size() < capacity_ ? 0 : cursor_;
        return storage_[(oldest + i) % capacity_];
    }

    const Transition& sample(Rng& rng) const {
        if (storage_.empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
        return storage_[rng.below(storage_.size())];
    }

    std::vector<Transition> sample_batch(std::size_t n, Rng& rng) const {
        std::vector<Transition> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(sample(rng));
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> storage_;
};

}  // namespace causalq
