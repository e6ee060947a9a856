#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedmes/inference.hpp"
#include "fedmes/metrics.hpp"
#include "fedmes/trainer.hpp"

namespace fedmes {

struct MemoryConfig {
    std::size_t capacity = 150;
    std::size_t per_task = 0;  // 0 = floor(capacity / T), at least 1
};

// Everything one (method, seed) experiment needs. Client count and task
// count live here; the stream spec's copies are overwritten before use.
struct ExperimentPlan {
    std::size_t n_clients = 5;
    std::size_t tasks = 4;
    std::size_t rounds_per_task = 10;
    ModelSpec model;
    TrainerConfig trainer;
    InferenceConfig inference;
    MemoryConfig memory;
    StreamSpec stream;
    std::string csv_path;    // consulted when stream.generator == kCsvSource
    std::uint64_t master_seed = 1;
    std::string trace_path;  // when set, per-step diagnostics as JSON lines
};

struct ServerState {
    ParamVector global;
    int round = 0;  // communication rounds completed, across tasks
    int task = 0;   // tasks completed
};

// Unweighted mean, summed in index order (the federation always fills the
// vector by client id, so the reduction order is canonical).
ParamVector aggregate(const std::vector<ParamVector>& uploads);

// Streams per-round step diagnostics to a JSON-lines file. Lines are written
// in client order after each round regardless of worker scheduling.
class TraceWriter {
public:
    explicit TraceWriter(const std::string& path);
    ~TraceWriter();
    void write_round(int client_id, int task, int round,
                     const std::vector<StepDiagnostics>& steps);

private:
    struct Impl;
    Impl* impl_;
};

// One task of Algorithm-style training: rounds_per_task iterations of
// broadcast, parallel local rounds, mean aggregation; afterwards every client
// banks its memory sample of the task. With zero rounds the global model is
// untouched but memory is still appended.
void run_task(const Objective& objective, ServerState& server, std::vector<ClientState>& clients,
              int task_index, const ExperimentPlan& plan, const std::vector<TaskSequence>& streams,
              TraceWriter* trace = nullptr);

struct ExperimentResult {
    AccuracyTensor tensor;
    MetricsReport report;
    ParamVector final_global;
    std::vector<ParamVector> final_client_params;
};

// Full run: builds the streams, trains task after task, and evaluates every
// client on all tasks seen so far after each task. Inference never receives
// a task identity; fedmes combines the retrieval vote with the softmax,
// every other method scores with its model alone.
ExperimentResult run_experiment(const ExperimentPlan& plan);

// Worker cap for the per-round client loop: FEDMES_THREADS if set, else the
// hardware concurrency. Results do not depend on the value.
std::size_t max_worker_threads();

}  // namespace fedmes
