#pragma once

#include <cstdint>
#include <deque>
#include <string>

#include "fedmes/rng.hpp"
#include "fedmes/tasks.hpp"

namespace fedmes {

struct MemoryEntry {
    std::vector<double> input;
    int label = 0;
    int task_index = 0;
    std::uint64_t insertion_seq = 0;  // global FIFO position, never reused
};

// Per-client episodic store. Each completed task contributes a uniform
// without-replacement sample of its training split; when the total exceeds
// the capacity, the oldest entries (lowest insertion_seq) are evicted first.
class MemoryBuffer {
public:
    MemoryBuffer() = default;
    MemoryBuffer(std::size_t capacity, std::size_t per_task_quota);

    // Draws min(per_task_quota, |train|) samples from the task's training
    // split and appends them, then applies FIFO eviction.
    void append_task_samples(const TaskDataset& dataset, std::uint64_t seed);

    // Uniform sample without replacement; rows come back in insertion order.
    // Asking for size >= |entries| returns the entire memory.
    Minibatch sample_batch(std::size_t size, Rng& rng) const;
    Minibatch sample_batch(std::size_t size, std::uint64_t seed) const;

    Minibatch as_full_batch() const;

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t per_task_quota() const { return quota_; }
    const std::deque<MemoryEntry>& entries() const { return entries_; }

    // Debug dump mirroring the stream CSV schema plus an insertion_seq column.
    void dump_csv(const std::string& path, int client_id) const;

private:
    Minibatch gather(const std::vector<std::size_t>& idx) const;

    std::size_t capacity_ = 0;
    std::size_t quota_ = 0;
    std::uint64_t next_seq_ = 0;
    std::deque<MemoryEntry> entries_;
};

}  // namespace fedmes
