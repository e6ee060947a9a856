#include "fedmes/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fedmes {
namespace {

void check_value(double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) {
        throw std::invalid_argument("accuracy " + std::to_string(accuracy) + " outside [0, 1]");
    }
}

}  // namespace

AccuracyTensor::AccuracyTensor(std::size_t tasks, std::size_t clients)
    : tasks_(tasks),
      clients_(clients),
      cells_(tasks * tasks * clients, std::numeric_limits<double>::quiet_NaN()) {
    if (tasks == 0 || clients == 0) {
        throw std::invalid_argument("tensor needs at least one task and one client");
    }
}

std::size_t AccuracyTensor::index(std::size_t t, std::size_t i, std::size_t k) const {
    if (t < 1 || t > tasks_ || i < 1 || i > t || k >= clients_) {
        throw std::out_of_range("tensor cell (t=" + std::to_string(t) + ", i=" +
                                std::to_string(i) + ", k=" + std::to_string(k) +
                                ") outside the defined region");
    }
    return ((t - 1) * tasks_ + (i - 1)) * clients_ + k;
}

void AccuracyTensor::set(std::size_t t, std::size_t i, std::size_t k, double accuracy) {
    check_value(accuracy);
    cells_[index(t, i, k)] = accuracy;
}

double AccuracyTensor::get(std::size_t t, std::size_t i, std::size_t k) const {
    const double v = cells_[index(t, i, k)];
    if (std::isnan(v)) {
        throw std::logic_error("tensor cell (t=" + std::to_string(t) + ", i=" + std::to_string(i) +
                               ", k=" + std::to_string(k) + ") was never measured");
    }
    return v;
}

bool AccuracyTensor::operator==(const AccuracyTensor& other) const {
    if (tasks_ != other.tasks_ || clients_ != other.clients_) return false;
    for (std::size_t idx = 0; idx < cells_.size(); ++idx) {
        const bool a_unset = std::isnan(cells_[idx]);
        const bool b_unset = std::isnan(other.cells_[idx]);
        if (a_unset != b_unset) return false;
        if (!a_unset && cells_[idx] != other.cells_[idx]) return false;
    }
    return true;
}

double avg_accuracy_at(const AccuracyTensor& tensor, std::size_t k, std::size_t t) {
    double total = 0.0;
    for (std::size_t i = 1; i <= t; ++i) total += tensor.get(t, i, k);
    return total / static_cast<double>(t);
}

double acc_client(const AccuracyTensor& tensor, std::size_t k) {
    double total = 0.0;
    for (std::size_t t = 1; t <= tensor.tasks(); ++t) total += avg_accuracy_at(tensor, k, t);
    return total / static_cast<double>(tensor.tasks());
}

double acc_task(const AccuracyTensor& tensor, std::size_t t) {
    double total = 0.0;
    for (std::size_t k = 0; k < tensor.clients(); ++k) total += avg_accuracy_at(tensor, k, t);
    return total / static_cast<double>(tensor.clients());
}

double acc_all(const AccuracyTensor& tensor) {
    double total = 0.0;
    for (std::size_t k = 0; k < tensor.clients(); ++k) {
        for (std::size_t t = 1; t <= tensor.tasks(); ++t) {
            total += avg_accuracy_at(tensor, k, t);
        }
    }
    return total / static_cast<double>(tensor.clients() * tensor.tasks());
}

double forgetting_rate(const AccuracyTensor& tensor, std::size_t k, std::size_t t) {
    if (t < 1 || t > tensor.tasks()) throw std::out_of_range("forgetting_rate: bad task index");
    if (t == 1) return 0.0;
    double total = 0.0;
    for (std::size_t i = 1; i <= t - 1; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = i; j <= t - 1; ++j) best = std::max(best, tensor.get(j, i, k));
        total += best - tensor.get(t, i, k);
    }
    return total / static_cast<double>(t - 1);
}

MetricsReport build_report(const AccuracyTensor& tensor) {
    MetricsReport report;
    report.acc_all = acc_all(tensor);
    for (std::size_t k = 0; k < tensor.clients(); ++k) {
        report.acc_client.push_back(acc_client(tensor, k));
    }
    for (std::size_t t = 1; t <= tensor.tasks(); ++t) {
        report.acc_task.push_back(acc_task(tensor, t));
    }
    report.forgetting.resize(tensor.tasks());
    for (std::size_t t = 1; t <= tensor.tasks(); ++t) {
        double mean = 0.0;
        for (std::size_t k = 0; k < tensor.clients(); ++k) {
            const double f = forgetting_rate(tensor, k, t);
            report.forgetting[t - 1].push_back(f);
            mean += f;
        }
        report.forgetting_task_mean.push_back(mean / static_cast<double>(tensor.clients()));
    }
    report.forgetting_final_mean = report.forgetting_task_mean.back();
    return report;
}

void write_tensor_csv(const AccuracyTensor& tensor, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "t,i,k,accuracy\n";
    char buf[40];
    for (std::size_t t = 1; t <= tensor.tasks(); ++t) {
        for (std::size_t i = 1; i <= t; ++i) {
            for (std::size_t k = 0; k < tensor.clients(); ++k) {
                std::snprintf(buf, sizeof(buf), "%.17g", tensor.get(t, i, k));
                out << t << ',' << i << ',' << k << ',' << buf << "\n";
            }
        }
    }
}

}  // namespace fedmes
