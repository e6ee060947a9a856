#include "fedmes/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedmes/errors.hpp"
#include "fedmes/rng.hpp"

namespace fedmes {
namespace {

// Purpose tags for seed derivation; arbitrary distinct constants.
enum : std::uint64_t {
    kTagCentroid = 0xC3,
    kTagClassPick = 0xC7,
    kTagTrain = 0x71,
    kTagTest = 0x7E,
};

void validate(const StreamSpec& spec) {
    if (spec.n_clients == 0) throw config_error("n_clients must be positive");
    if (spec.tasks == 0) throw config_error("tasks must be positive");
    if (spec.classes_lo < 2) throw config_error("classes_per_task lower bound must be >= 2");
    if (spec.classes_hi < spec.classes_lo) {
        throw config_error("classes_per_task range is inverted");
    }
    if (static_cast<std::size_t>(spec.classes_hi) > spec.num_classes) {
        throw config_error("classes_per_task upper bound " + std::to_string(spec.classes_hi) +
                           " exceeds class pool of " + std::to_string(spec.num_classes));
    }
    if (spec.samples_per_class_train == 0 || spec.samples_per_class_test == 0) {
        throw config_error("samples per class must be positive");
    }
    if (spec.generator == StreamGenerator::kRotatedTwoMoons && spec.input_dim != 2) {
        throw config_error("rotated_two_moons requires input_dim=2");
    }
    if (spec.separation <= 0.0) throw config_error("separation must be positive");
}

// Shared class geometry: every client sees class c the same way.
std::vector<std::vector<double>> blob_centroids(const StreamSpec& spec) {
    std::vector<std::vector<double>> centroids(spec.num_classes);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        Rng rng(derive_seed(spec.seed, kTagCentroid, c));
        std::vector<double> dir(spec.input_dim);
        double norm = 0.0;
        for (double& v : dir) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : dir) v = v / norm * spec.separation;
        centroids[c] = std::move(dir);
    }
    return centroids;
}

void sample_blob(const std::vector<double>& centroid, Rng& rng, double* out) {
    for (std::size_t d = 0; d < centroid.size(); ++d) out[d] = centroid[d] + rng.normal();
}

// One crescent per class: the upper half-circle of radius `separation`,
// rotated by the class angle, with isotropic jitter.
void sample_moon(int label, const StreamSpec& spec, Rng& rng, double* out) {
    const double angle = rng.uniform() * 3.14159265358979323846;
    const double rotation =
        2.0 * 3.14159265358979323846 * static_cast<double>(label) / static_cast<double>(spec.num_classes);
    const double r = spec.separation;
    const double x = r * std::cos(angle);
    const double y = r * std::sin(angle);
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    const double sigma = 0.05 * spec.separation;
    out[0] = c * x - s * y + sigma * rng.normal();
    out[1] = s * x + c * y + sigma * rng.normal();
}

Minibatch draw_split(const StreamSpec& spec, const std::vector<int>& class_ids,
                     std::size_t per_class, std::uint64_t seed,
                     const std::vector<std::vector<double>>& centroids) {
    Rng rng(seed);
    Minibatch out;
    out.inputs = Matrix(class_ids.size() * per_class, spec.input_dim);
    out.labels.reserve(out.inputs.rows);
    std::size_t row = 0;
    for (int c : class_ids) {
        for (std::size_t s = 0; s < per_class; ++s, ++row) {
            if (spec.generator == StreamGenerator::kGaussianBlobs) {
                sample_blob(centroids[static_cast<std::size_t>(c)], rng, out.inputs.row(row));
            } else {
                sample_moon(c, spec, rng, out.inputs.row(row));
            }
            out.labels.push_back(c);
        }
    }
    return out;
}

void append_double(std::string& line, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    line += buf;
}

}  // namespace

std::vector<TaskSequence> generate_streams(const StreamSpec& spec) {
    validate(spec);
    if (spec.generator == StreamGenerator::kCsvSource) {
        throw config_error("csv_source streams are loaded, not generated");
    }
    const auto centroids = spec.generator == StreamGenerator::kGaussianBlobs
                               ? blob_centroids(spec)
                               : std::vector<std::vector<double>>{};

    std::vector<TaskSequence> streams(spec.n_clients);
    for (std::size_t k = 0; k < spec.n_clients; ++k) {
        const std::uint64_t client_seed = spec.seed ^ splitmix64(k);
        TaskSequence& seq = streams[k];
        seq.client_id = static_cast<int>(k);
        seq.tasks.resize(spec.tasks);
        for (std::size_t t = 1; t <= spec.tasks; ++t) {
            Rng pick(derive_seed(client_seed, kTagClassPick, t));
            const int span = spec.classes_hi - spec.classes_lo + 1;
            const std::size_t n_cls =
                static_cast<std::size_t>(spec.classes_lo) + pick.below(static_cast<std::uint64_t>(span));
            const auto chosen = pick.sample_indices(spec.num_classes, n_cls);

            TaskDataset& task = seq.tasks[t - 1];
            task.task_index = static_cast<int>(t);
            std::vector<int> class_list;
            for (std::size_t c : chosen) {
                task.class_ids.insert(static_cast<int>(c));
                class_list.push_back(static_cast<int>(c));
            }
            task.train = draw_split(spec, class_list, spec.samples_per_class_train,
                                    derive_seed(client_seed, kTagTrain, t), centroids);
            task.test = draw_split(spec, class_list, spec.samples_per_class_test,
                                   derive_seed(client_seed, kTagTest, t), centroids);
        }
    }
    return streams;
}

void export_csv_stream(const std::vector<TaskSequence>& streams, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");

    std::size_t dim = 0;
    for (const auto& seq : streams) {
        for (const auto& task : seq.tasks) {
            if (task.train.size() > 0) dim = task.train.inputs.cols;
            if (task.test.size() > 0) dim = task.test.inputs.cols;
        }
    }
    std::string header = "client_id,task_index,split,label";
    for (std::size_t d = 1; d <= dim; ++d) header += ",f" + std::to_string(d);
    out << header << "\n";

    auto write_split = [&](int client_id, int task_index, const char* split, const Minibatch& mb) {
        for (std::size_t r = 0; r < mb.size(); ++r) {
            std::string line = std::to_string(client_id) + "," + std::to_string(task_index) +
                               "," + split + "," + std::to_string(mb.labels[r]);
            for (std::size_t d = 0; d < mb.inputs.cols; ++d) {
                line += ',';
                append_double(line, mb.inputs(r, d));
            }
            out << line << "\n";
        }
    };
    for (const auto& seq : streams) {
        for (const auto& task : seq.tasks) {
            write_split(seq.client_id, task.task_index, "train", task.train);
            write_split(seq.client_id, task.task_index, "test", task.test);
        }
    }
}

std::vector<TaskSequence> load_csv_stream(const std::string& path, const StreamSpec& spec) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file, expected header");
    if (line.rfind("client_id,task_index,split,label", 0) != 0) {
        throw std::runtime_error(path + ":1: header must start with client_id,task_index,split,label");
    }

    struct Row {
        int label;
        std::vector<double> features;
    };
    // client -> task -> split -> rows
    std::map<int, std::map<int, std::map<std::string, std::vector<Row>>>> table;
    std::size_t dim = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        const std::string where = path + ":" + std::to_string(line_no);
        if (fields.size() < 5) throw std::runtime_error(where + ": expected at least 5 columns");

        Row row;
        int client_id = 0;
        int task_index = 0;
        try {
            client_id = std::stoi(fields[0]);
            task_index = std::stoi(fields[1]);
            row.label = std::stoi(fields[3]);
            for (std::size_t f = 4; f < fields.size(); ++f) {
                std::size_t used = 0;
                row.features.push_back(std::stod(fields[f], &used));
                if (used != fields[f].size()) throw std::invalid_argument(fields[f]);
            }
        } catch (const std::exception&) {
            throw std::runtime_error(where + ": malformed numeric field");
        }
        const std::string& split = fields[2];
        if (split != "train" && split != "test") {
            throw std::runtime_error(where + ": split must be train or test, got '" + split + "'");
        }
        if (row.label < 0 || static_cast<std::size_t>(row.label) >= spec.num_classes) {
            throw std::runtime_error(where + ": label " + std::to_string(row.label) +
                                     " outside class pool of " + std::to_string(spec.num_classes));
        }
        if (task_index < 1) throw std::runtime_error(where + ": task_index must be >= 1");
        if (dim == 0) {
            dim = row.features.size();
            if (dim == 0) throw std::runtime_error(where + ": no feature columns");
        } else if (row.features.size() != dim) {
            throw std::runtime_error(where + ": row has " + std::to_string(row.features.size()) +
                                     " features, expected " + std::to_string(dim));
        }
        table[client_id][task_index][split].push_back(std::move(row));
    }

    std::vector<TaskSequence> streams;
    for (auto& [client_id, by_task] : table) {
        TaskSequence seq;
        seq.client_id = client_id;
        int expected = 1;
        for (auto& [task_index, by_split] : by_task) {
            if (task_index != expected) {
                throw std::runtime_error(path + ": client " + std::to_string(client_id) +
                                         " has non-contiguous task indices (missing task " +
                                         std::to_string(expected) + ")");
            }
            ++expected;
            TaskDataset task;
            task.task_index = task_index;
            for (const char* split : {"train", "test"}) {
                auto it = by_split.find(split);
                const auto& rows = it == by_split.end() ? std::vector<Row>{} : it->second;
                Minibatch mb;
                mb.inputs = Matrix(rows.size(), dim);
                mb.labels.reserve(rows.size());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    std::copy(rows[r].features.begin(), rows[r].features.end(), mb.inputs.row(r));
                    mb.labels.push_back(rows[r].label);
                    task.class_ids.insert(rows[r].label);
                }
                (std::string(split) == "train" ? task.train : task.test) = std::move(mb);
            }
            seq.tasks.push_back(std::move(task));
        }
        streams.push_back(std::move(seq));
    }
    return streams;
}

}  // namespace fedmes
