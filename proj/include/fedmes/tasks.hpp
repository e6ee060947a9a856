#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fedmes/nn.hpp"

namespace fedmes {

// One task of one client: held-out split kept separate, class_ids records
// which global classes this task draws from.
struct TaskDataset {
    Minibatch train;
    Minibatch test;
    std::set<int> class_ids;
    int task_index = 1;  // 1-based position in the stream
};

struct TaskSequence {
    int client_id = 0;
    std::vector<TaskDataset> tasks;
};

enum class StreamGenerator { kGaussianBlobs, kRotatedTwoMoons, kCsvSource };

// Recipe for a federated continual stream: every client gets its own list of
// T tasks, each over a small class subset drawn from a shared global pool.
struct StreamSpec {
    std::size_t n_clients = 1;
    std::size_t tasks = 1;
    int classes_lo = 2;  // classes per task, inclusive range
    int classes_hi = 5;
    std::size_t samples_per_class_train = 50;
    std::size_t samples_per_class_test = 25;
    StreamGenerator generator = StreamGenerator::kGaussianBlobs;
    std::uint64_t seed = 1;
    std::size_t num_classes = 10;  // size of the global class pool
    std::size_t input_dim = 10;    // feature dimension (rotated moons force 2)
    double separation = 4.0;       // centroid distance in units of noise sigma
};

// Synthesizes the per-client streams. Client c draws from seed ^ splitmix64(c)
// so clients are heterogeneous but individually reproducible.
std::vector<TaskSequence> generate_streams(const StreamSpec& spec);

// Reads streams from the CSV interchange format. The StreamSpec argument
// supplies the class pool size used for label validation; geometry fields
// are ignored.
std::vector<TaskSequence> load_csv_stream(const std::string& path, const StreamSpec& spec);

// Writes streams as CSV with header client_id,task_index,split,label,f1..fd.
// Output is byte-identical across runs for the same streams.
void export_csv_stream(const std::vector<TaskSequence>& streams, const std::string& path);

}  // namespace fedmes
