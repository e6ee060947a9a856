#include "fedmes/federation.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "fedmes/errors.hpp"

namespace fedmes {
namespace {

enum : std::uint64_t {
    kTagInit = 0x11,
    kTagRound = 0x22,
    kTagMemory = 0x33,
};

bool trains_broadcast_copy(Method m) {
    return m == Method::kFedAvg || m == Method::kFedAgem;
}

bool uses_retrieval_at_inference(Method m) { return m == Method::kFedMeS; }

// fedavg and ditto are memory-free baselines; banking samples for them would
// hand their local steps the correction branch and turn both into the
// projection method.
bool banks_episodic_memory(Method m) {
    return m == Method::kFedMeS || m == Method::kFedMeSNoLip || m == Method::kFedAgem;
}

// Runs fn(0..n-1) on up to max_worker_threads() workers; rethrows the first
// exception. Work items are independent, so scheduling cannot change results.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(n, max_worker_threads());
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::mutex mu;
    std::exception_ptr first_error;
    std::size_t next = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (next >= n || first_error) return;
                    i = next++;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void check_finite_params(const ParamVector& params, int client_id, int task, int round) {
    for (double v : params) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("numeric divergence in client " + std::to_string(client_id) +
                                     " parameters at task " + std::to_string(task) + ", round " +
                                     std::to_string(round));
        }
    }
}

std::size_t resolve_quota(const MemoryConfig& memory, std::size_t tasks) {
    if (memory.per_task > 0) return memory.per_task;
    return std::max<std::size_t>(1, memory.capacity / std::max<std::size_t>(1, tasks));
}

}  // namespace

std::size_t max_worker_threads() {
    if (const char* env = std::getenv("FEDMES_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) {
            throw config_error("FEDMES_THREADS must be a positive integer, got '" +
                               std::string(env) + "'");
        }
        return static_cast<std::size_t>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

ParamVector aggregate(const std::vector<ParamVector>& uploads) {
    if (uploads.empty()) throw std::invalid_argument("aggregate with no uploads");
    const std::size_t len = uploads.front().size();
    ParamVector mean(len, 0.0);
    for (const ParamVector& u : uploads) {
        if (u.size() != len) {
            throw std::invalid_argument("aggregate: upload length " + std::to_string(u.size()) +
                                        " does not match " + std::to_string(len));
        }
        for (std::size_t i = 0; i < len; ++i) mean[i] += u[i];
    }
    const double n = static_cast<double>(uploads.size());
    for (double& v : mean) v /= n;
    return mean;
}

struct TraceWriter::Impl {
    std::ofstream out;
};

TraceWriter::TraceWriter(const std::string& path) : impl_(new Impl) {
    impl_->out.open(path, std::ios::binary);
    if (!impl_->out) {
        delete impl_;
        throw std::runtime_error("cannot open trace file " + path);
    }
}

TraceWriter::~TraceWriter() { delete impl_; }

void TraceWriter::write_round(int client_id, int task, int round,
                              const std::vector<StepDiagnostics>& steps) {
    int step_index = 0;
    for (const StepDiagnostics& d : steps) {
        nlohmann::json line = {
            {"client", client_id},
            {"task", task},
            {"round", round},
            {"step", step_index++},
            {"inner_product", d.inner_product},
            {"branch", d.branch == StepBranch::kTransfer ? "transfer" : "correction"},
            {"lambda", d.lambda_used},
            {"loss_before", d.loss_before},
            {"loss_after", d.loss_after},
        };
        impl_->out << line.dump() << "\n";
    }
}

void run_task(const Objective& objective, ServerState& server, std::vector<ClientState>& clients,
              int task_index, const ExperimentPlan& plan, const std::vector<TaskSequence>& streams,
              TraceWriter* trace) {
    const std::size_t n = clients.size();
    if (streams.size() != n) {
        throw std::invalid_argument("have " + std::to_string(streams.size()) + " streams for " +
                                    std::to_string(n) + " clients");
    }
    const std::size_t t_idx = static_cast<std::size_t>(task_index - 1);

    for (std::size_t r = 1; r <= plan.rounds_per_task; ++r) {
        const ParamVector broadcast = server.global;
        std::vector<ParamVector> uploads(n);
        std::vector<std::vector<StepDiagnostics>> diags(trace != nullptr ? n : 0);
        parallel_for(n, [&](std::size_t k) {
            ClientState& client = clients[k];
            if (trains_broadcast_copy(plan.trainer.method)) client.params = broadcast;
            const std::uint64_t seed =
                derive_seed(plan.master_seed, kTagRound, k, static_cast<std::uint64_t>(task_index), r);
            uploads[k] = run_local_round(objective, client, broadcast,
                                         streams[k].tasks[t_idx], plan.trainer, seed,
                                         trace != nullptr ? &diags[k] : nullptr);
            client.opt.rounds_completed++;
            check_finite_params(uploads[k], client.client_id, task_index, static_cast<int>(r));
        });
        server.global = aggregate(uploads);
        server.round++;
        check_finite_params(server.global, -1, task_index, static_cast<int>(r));
        if (trace != nullptr) {
            for (std::size_t k = 0; k < n; ++k) {
                trace->write_round(clients[k].client_id, task_index, static_cast<int>(r), diags[k]);
            }
        }
    }

    // Memory is banked after the task's rounds finish, so training within a
    // task never replays the task's own data.
    for (std::size_t k = 0; k < n; ++k) {
        if (banks_episodic_memory(plan.trainer.method)) {
            clients[k].memory.append_task_samples(
                streams[k].tasks[t_idx],
                derive_seed(plan.master_seed, kTagMemory, k, static_cast<std::uint64_t>(task_index)));
        }
        // Methods without a personal model deploy the fresh aggregate.
        if (trains_broadcast_copy(plan.trainer.method)) clients[k].params = server.global;
    }
    server.task = task_index;
}

ExperimentResult run_experiment(const ExperimentPlan& plan) {
    if (plan.n_clients == 0) throw config_error("n_clients must be positive");
    if (plan.tasks == 0) throw config_error("tasks must be positive");

    StreamSpec stream = plan.stream;
    stream.n_clients = plan.n_clients;
    stream.tasks = plan.tasks;
    const std::vector<TaskSequence> streams =
        stream.generator == StreamGenerator::kCsvSource
            ? load_csv_stream(plan.csv_path, stream)
            : generate_streams(stream);
    if (streams.size() != plan.n_clients) {
        throw config_error("stream source provides " + std::to_string(streams.size()) +
                           " clients, plan expects " + std::to_string(plan.n_clients));
    }
    for (const TaskSequence& seq : streams) {
        if (seq.tasks.size() != plan.tasks) {
            throw config_error("client " + std::to_string(seq.client_id) + " has " +
                               std::to_string(seq.tasks.size()) + " tasks, plan expects " +
                               std::to_string(plan.tasks));
        }
    }

    NetworkObjective objective(plan.model);
    ServerState server;
    server.global = init_params(plan.model, derive_seed(plan.master_seed, kTagInit));

    const std::size_t quota = resolve_quota(plan.memory, plan.tasks);
    std::vector<ClientState> clients;
    for (std::size_t k = 0; k < plan.n_clients; ++k) {
        ClientState c;
        c.client_id = static_cast<int>(k);
        c.params = server.global;
        c.memory = MemoryBuffer(plan.memory.capacity, quota);
        clients.push_back(std::move(c));
    }

    std::unique_ptr<TraceWriter> trace;
    if (!plan.trace_path.empty()) trace = std::make_unique<TraceWriter>(plan.trace_path);

    ExperimentResult result;
    result.tensor = AccuracyTensor(plan.tasks, plan.n_clients);
    for (std::size_t t = 1; t <= plan.tasks; ++t) {
        for (ClientState& c : clients) c.current_task = static_cast<int>(t);
        run_task(objective, server, clients, static_cast<int>(t), plan, streams, trace.get());

        parallel_for(plan.n_clients, [&](std::size_t k) {
            const ClientState& client = clients[k];
            std::vector<RLPair> pairs;
            if (uses_retrieval_at_inference(plan.trainer.method) && !client.memory.empty()) {
                pairs = build_rl_pairs(plan.model, client.params, client.memory);
            }
            for (std::size_t i = 1; i <= t; ++i) {
                const double acc = evaluate_accuracy(plan.model, client.params, pairs,
                                                     streams[k].tasks[i - 1].test, plan.inference);
                result.tensor.set(t, i, k, acc);
            }
        });
    }

    result.report = build_report(result.tensor);
    result.final_global = server.global;
    for (const ClientState& c : clients) result.final_client_params.push_back(c.params);
    return result;
}

}  // namespace fedmes
