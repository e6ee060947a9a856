#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fedmes {

// a(t, i, k): accuracy of client k on task i's test split, measured after
// training task t. Tasks t and i are 1-based to match the usual continual
// learning notation; clients k are 0-based like everywhere else in the code.
// Only the lower triangle i <= t is defined.
class AccuracyTensor {
public:
    AccuracyTensor() = default;
    AccuracyTensor(std::size_t tasks, std::size_t clients);

    std::size_t tasks() const { return tasks_; }
    std::size_t clients() const { return clients_; }

    void set(std::size_t t, std::size_t i, std::size_t k, double accuracy);
    double get(std::size_t t, std::size_t i, std::size_t k) const;

    // Cell-wise equality; two never-measured cells (NaN sentinels) compare
    // equal, which a defaulted operator== would get wrong.
    bool operator==(const AccuracyTensor& other) const;

private:
    std::size_t index(std::size_t t, std::size_t i, std::size_t k) const;

    std::size_t tasks_ = 0;
    std::size_t clients_ = 0;
    std::vector<double> cells_;  // NaN marks entries never measured
};

// Mean accuracy of client k over tasks 1..t, measured after task t.
double avg_accuracy_at(const AccuracyTensor& tensor, std::size_t k, std::size_t t);

// Mean of avg_accuracy_at over all tasks for one client.
double acc_client(const AccuracyTensor& tensor, std::size_t k);

// Mean of avg_accuracy_at over all clients at one task checkpoint.
double acc_task(const AccuracyTensor& tensor, std::size_t t);

// Grand mean over clients and task checkpoints.
double acc_all(const AccuracyTensor& tensor);

// Mean drop from each earlier task's best checkpoint to its accuracy after
// task t: (1/(t-1)) * sum_i [max_{j in i..t-1} a(j,i,k) - a(t,i,k)].
// Negative contributions (backward transfer) are kept, not clamped.
// By convention the rate after the first task is 0.
double forgetting_rate(const AccuracyTensor& tensor, std::size_t k, std::size_t t);

struct MetricsReport {
    double acc_all = 0.0;
    std::vector<double> acc_client;                // [clients]
    std::vector<double> acc_task;                  // [tasks], index t-1
    std::vector<std::vector<double>> forgetting;   // [tasks][clients]
    std::vector<double> forgetting_task_mean;      // mean over clients per task
    double forgetting_final_mean = 0.0;            // headline FR: mean_k F_T^k
};

MetricsReport build_report(const AccuracyTensor& tensor);

// Long-format CSV: header t,i,k,accuracy, one row per defined cell.
void write_tensor_csv(const AccuracyTensor& tensor, const std::string& path);

// Serialized via nlohmann::json in the runner; kept out of this header so
// metrics stays independent of the JSON library.

}  // namespace fedmes
