#include "fedmes/memory.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fedmes {

MemoryBuffer::MemoryBuffer(std::size_t capacity, std::size_t per_task_quota)
    : capacity_(capacity), quota_(per_task_quota) {
    if (capacity == 0) throw std::invalid_argument("memory capacity must be positive");
    if (per_task_quota == 0) throw std::invalid_argument("per-task quota must be positive");
}

void MemoryBuffer::append_task_samples(const TaskDataset& dataset, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t take = std::min(quota_, dataset.train.size());
    const auto idx = rng.sample_indices(dataset.train.size(), take);
    for (std::size_t i : idx) {
        MemoryEntry entry;
        entry.input.assign(dataset.train.inputs.row(i),
                           dataset.train.inputs.row(i) + dataset.train.inputs.cols);
        entry.label = dataset.train.labels[i];
        entry.task_index = dataset.task_index;
        entry.insertion_seq = next_seq_++;
        entries_.push_back(std::move(entry));
    }
    while (entries_.size() > capacity_) entries_.pop_front();
}

Minibatch MemoryBuffer::gather(const std::vector<std::size_t>& idx) const {
    Minibatch out;
    out.inputs = Matrix(idx.size(), entries_.front().input.size());
    out.labels.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const MemoryEntry& e = entries_[idx[r]];
        std::copy(e.input.begin(), e.input.end(), out.inputs.row(r));
        out.labels.push_back(e.label);
    }
    return out;
}

Minibatch MemoryBuffer::sample_batch(std::size_t size, Rng& rng) const {
    if (entries_.empty()) throw std::logic_error("sample_batch on empty memory");
    if (size == 0) throw std::invalid_argument("sample_batch size must be positive");
    if (size >= entries_.size()) return as_full_batch();
    // sample_indices returns ascending positions, i.e. insertion order.
    return gather(rng.sample_indices(entries_.size(), size));
}

Minibatch MemoryBuffer::sample_batch(std::size_t size, std::uint64_t seed) const {
    Rng rng(seed);
    return sample_batch(size, rng);
}

Minibatch MemoryBuffer::as_full_batch() const {
    if (entries_.empty()) throw std::logic_error("as_full_batch on empty memory");
    std::vector<std::size_t> idx(entries_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return gather(idx);
}

void MemoryBuffer::dump_csv(const std::string& path, int client_id) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    const std::size_t dim = entries_.empty() ? 0 : entries_.front().input.size();
    std::string header = "client_id,task_index,split,label";
    for (std::size_t d = 1; d <= dim; ++d) header += ",f" + std::to_string(d);
    out << header << ",insertion_seq\n";
    char buf[40];
    for (const MemoryEntry& e : entries_) {
        out << client_id << ',' << e.task_index << ",train," << e.label;
        for (double v : e.input) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << ',' << e.insertion_seq << "\n";
    }
}

}  // namespace fedmes
