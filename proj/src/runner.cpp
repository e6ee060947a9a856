#include "fedmes/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "fedmes/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedmes {
namespace {

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw config_error(where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return it.key() == k; });
        if (!known) throw config_error("unknown key '" + where + "." + it.key() + "'");
    }
}

// Typed getters that turn json type errors into config errors naming the key.
template <typename T>
T get_as(const json& obj, const std::string& where, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error("key '" + where + "." + key + "' has the wrong type");
    }
}

std::uint64_t get_u64(const json& value, const std::string& what) {
    if (value.is_number_unsigned()) return value.get<std::uint64_t>();
    if (value.is_number_integer() && value.get<std::int64_t>() >= 0) {
        return static_cast<std::uint64_t>(value.get<std::int64_t>());
    }
    throw config_error(what + " must be a non-negative integer");
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::kRelu;
    if (name == "tanh") return Activation::kTanh;
    throw config_error("unknown activation '" + name + "' (expected relu or tanh)");
}

StreamGenerator generator_from_name(const std::string& name) {
    if (name == "gaussian_blobs") return StreamGenerator::kGaussianBlobs;
    if (name == "rotated_two_moons") return StreamGenerator::kRotatedTwoMoons;
    if (name == "csv_source") return StreamGenerator::kCsvSource;
    throw config_error("unknown generator '" + name + "'");
}

std::string generator_name(StreamGenerator g) {
    switch (g) {
        case StreamGenerator::kGaussianBlobs: return "gaussian_blobs";
        case StreamGenerator::kRotatedTwoMoons: return "rotated_two_moons";
        case StreamGenerator::kCsvSource: return "csv_source";
    }
    return "gaussian_blobs";
}

StreamSpec parse_stream(const json& obj, const std::string& where) {
    expect_keys(obj, where,
                {"generator", "classes_per_task", "samples_per_class_train",
                 "samples_per_class_test", "num_classes", "input_dim", "separation", "seed"});
    StreamSpec spec;
    spec.generator =
        generator_from_name(get_as<std::string>(obj, where, "generator", "gaussian_blobs"));
    if (obj.contains("classes_per_task")) {
        const json& range = obj.at("classes_per_task");
        if (!range.is_array() || range.size() != 2) {
            throw config_error("'" + where + ".classes_per_task' must be a [lo, hi] pair");
        }
        spec.classes_lo = static_cast<int>(get_u64(range[0], where + ".classes_per_task[0]"));
        spec.classes_hi = static_cast<int>(get_u64(range[1], where + ".classes_per_task[1]"));
    }
    spec.samples_per_class_train =
        get_as<std::size_t>(obj, where, "samples_per_class_train", spec.samples_per_class_train);
    spec.samples_per_class_test =
        get_as<std::size_t>(obj, where, "samples_per_class_test", spec.samples_per_class_test);
    spec.num_classes = get_as<std::size_t>(obj, where, "num_classes", spec.num_classes);
    spec.input_dim = get_as<std::size_t>(obj, where, "input_dim", spec.input_dim);
    spec.separation = get_as<double>(obj, where, "separation", spec.separation);
    if (obj.contains("seed")) spec.seed = get_u64(obj.at("seed"), where + ".seed");
    return spec;
}

ModelSpec parse_model(const json& obj, const std::string& where, const StreamSpec& stream) {
    expect_keys(obj, where, {"input_dim", "hidden_dims", "num_classes", "activation"});
    ModelSpec model;
    model.input_dim = get_as<std::size_t>(obj, where, "input_dim", stream.input_dim);
    model.num_classes = get_as<std::size_t>(obj, where, "num_classes", stream.num_classes);
    model.hidden_dims =
        get_as<std::vector<std::size_t>>(obj, where, "hidden_dims", {32});
    model.activation =
        activation_from_name(get_as<std::string>(obj, where, "activation", "relu"));
    if (model.input_dim == 0) throw config_error("model.input_dim must be positive");
    if (model.num_classes < 2) throw config_error("model.num_classes must be at least 2");
    for (std::size_t h : model.hidden_dims) {
        if (h == 0) throw config_error("model.hidden_dims entries must be positive");
    }
    return model;
}

TrainerConfig parse_trainer(const json& obj, const std::string& where) {
    expect_keys(obj, where,
                {"eta1", "eta2", "lambda", "batch_size", "local_epochs", "mem_batch",
                 "optimizer", "adam", "adam_lr_decay"});
    TrainerConfig trainer;
    trainer.eta1 = get_as<double>(obj, where, "eta1", trainer.eta1);
    trainer.eta2 = get_as<double>(obj, where, "eta2", trainer.eta2);
    if (trainer.eta1 <= 0.0 || trainer.eta2 <= 0.0) {
        throw config_error("step sizes eta1/eta2 must be positive");
    }
    if (obj.contains("lambda")) {
        const json& lam = obj.at("lambda");
        if (lam.is_string() && lam.get<std::string>() == "dynamic") {
            trainer.lambda_dynamic = true;
        } else if (lam.is_number()) {
            trainer.lambda_dynamic = false;
            trainer.lambda_fixed = lam.get<double>();
            if (trainer.lambda_fixed < 0.0 || trainer.lambda_fixed > 2.0) {
                throw config_error("fixed lambda must lie in [0, 2]");
            }
        } else {
            throw config_error("'" + where + ".lambda' must be \"dynamic\" or a number");
        }
    }
    trainer.batch_size = get_as<std::size_t>(obj, where, "batch_size", trainer.batch_size);
    if (trainer.batch_size == 0) throw config_error("batch_size must be positive");
    trainer.local_epochs = get_as<std::size_t>(obj, where, "local_epochs", trainer.local_epochs);
    if (obj.contains("mem_batch")) {
        const json& mb = obj.at("mem_batch");
        if (mb.is_string() && mb.get<std::string>() == "full") {
            trainer.mem_batch_size = 0;
        } else if (mb.is_number()) {
            trainer.mem_batch_size = get_u64(mb, where + ".mem_batch");
            if (trainer.mem_batch_size == 0) {
                throw config_error("sampled mem_batch size must be positive");
            }
        } else {
            throw config_error("'" + where + ".mem_batch' must be \"full\" or a size");
        }
    }
    const std::string opt = get_as<std::string>(obj, where, "optimizer", "sgd");
    if (opt == "sgd") {
        trainer.optimizer = OptimizerKind::kSgd;
    } else if (opt == "adam") {
        trainer.optimizer = OptimizerKind::kAdam;
    } else {
        throw config_error("unknown optimizer '" + opt + "' (expected sgd or adam)");
    }
    if (obj.contains("adam")) {
        const json& adam = obj.at("adam");
        expect_keys(adam, where + ".adam", {"beta1", "beta2", "epsilon"});
        trainer.adam.beta1 = get_as<double>(adam, where + ".adam", "beta1", trainer.adam.beta1);
        trainer.adam.beta2 = get_as<double>(adam, where + ".adam", "beta2", trainer.adam.beta2);
        trainer.adam.epsilon =
            get_as<double>(adam, where + ".adam", "epsilon", trainer.adam.epsilon);
    }
    trainer.adam_lr_decay = get_as<double>(obj, where, "adam_lr_decay", trainer.adam_lr_decay);
    if (trainer.adam_lr_decay <= 0.0 || trainer.adam_lr_decay > 1.0) {
        throw config_error("adam_lr_decay must lie in (0, 1]");
    }
    return trainer;
}

void append_fixed(std::string& line, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    line += buf;
}

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;  // sample stddev; 0 for a single observation
};

Stats mean_std(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

}  // namespace

std::string method_name(Method m) {
    switch (m) {
        case Method::kFedMeS: return "fedmes";
        case Method::kFedMeSNoLip: return "fedmes_nolip";
        case Method::kFedAvg: return "fedavg";
        case Method::kDitto: return "ditto";
        case Method::kFedAgem: return "fedagem";
    }
    return "fedmes";
}

Method method_from_name(const std::string& name) {
    if (name == "fedmes") return Method::kFedMeS;
    if (name == "fedmes_nolip") return Method::kFedMeSNoLip;
    if (name == "fedavg") return Method::kFedAvg;
    if (name == "ditto") return Method::kDitto;
    if (name == "fedagem") return Method::kFedAgem;
    throw config_error("unknown method '" + name + "'");
}

RunConfig parse_config_json(const json& j) {
    expect_keys(j, "config",
                {"n_clients", "tasks", "rounds_per_task", "model", "stream", "trainer", "memory",
                 "inference", "methods", "seeds", "output_dir", "emit_curves", "trace_steps",
                 "csv_path"});
    RunConfig config;
    ExperimentPlan& plan = config.plan;

    plan.n_clients = get_as<std::size_t>(j, "config", "n_clients", plan.n_clients);
    plan.tasks = get_as<std::size_t>(j, "config", "tasks", plan.tasks);
    plan.rounds_per_task = get_as<std::size_t>(j, "config", "rounds_per_task", plan.rounds_per_task);
    if (plan.n_clients == 0) throw config_error("n_clients must be positive");
    if (plan.tasks == 0) throw config_error("tasks must be positive");

    plan.stream = j.contains("stream") ? parse_stream(j.at("stream"), "stream") : StreamSpec{};
    plan.model = parse_model(j.contains("model") ? j.at("model") : json::object(), "model",
                             plan.stream);
    plan.trainer =
        j.contains("trainer") ? parse_trainer(j.at("trainer"), "trainer") : TrainerConfig{};

    if (j.contains("memory")) {
        const json& mem = j.at("memory");
        expect_keys(mem, "memory", {"capacity", "per_task"});
        plan.memory.capacity = get_as<std::size_t>(mem, "memory", "capacity", plan.memory.capacity);
        plan.memory.per_task = get_as<std::size_t>(mem, "memory", "per_task", plan.memory.per_task);
        if (plan.memory.capacity == 0) throw config_error("memory.capacity must be positive");
    }
    if (j.contains("inference")) {
        const json& inf = j.at("inference");
        expect_keys(inf, "inference", {"theta", "k"});
        plan.inference.theta = get_as<double>(inf, "inference", "theta", plan.inference.theta);
        plan.inference.k = get_as<std::size_t>(inf, "inference", "k", plan.inference.k);
        if (plan.inference.theta < 0.0 || plan.inference.theta > 1.0) {
            throw config_error("inference.theta must lie in [0, 1]");
        }
        if (plan.inference.k == 0) throw config_error("inference.k must be positive");
    }
    plan.csv_path = get_as<std::string>(j, "config", "csv_path", "");
    if (plan.stream.generator == StreamGenerator::kCsvSource && plan.csv_path.empty()) {
        throw config_error("generator csv_source requires csv_path");
    }
    if (plan.stream.generator != StreamGenerator::kCsvSource) {
        if (plan.model.input_dim != plan.stream.input_dim) {
            throw config_error("model.input_dim " + std::to_string(plan.model.input_dim) +
                               " does not match stream.input_dim " +
                               std::to_string(plan.stream.input_dim));
        }
        if (plan.model.num_classes != plan.stream.num_classes) {
            throw config_error("model.num_classes " + std::to_string(plan.model.num_classes) +
                               " does not match stream.num_classes " +
                               std::to_string(plan.stream.num_classes));
        }
    }

    if (j.contains("methods")) {
        config.methods.clear();
        for (const json& m : j.at("methods")) {
            if (!m.is_string()) throw config_error("'methods' entries must be strings");
            config.methods.push_back(method_from_name(m.get<std::string>()));
        }
    }
    if (config.methods.empty()) throw config_error("'methods' must not be empty");
    if (j.contains("seeds")) {
        config.seeds.clear();
        for (const json& s : j.at("seeds")) config.seeds.push_back(get_u64(s, "seeds entry"));
    }
    if (config.seeds.empty()) throw config_error("'seeds' must not be empty");

    config.output_dir = get_as<std::string>(j, "config", "output_dir", config.output_dir);
    config.emit_curves = get_as<bool>(j, "config", "emit_curves", config.emit_curves);
    if (get_as<bool>(j, "config", "trace_steps", false)) plan.trace_path = "auto";
    return config;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error(path + ": " + e.what());
    }
    return parse_config_json(j);
}

json to_json(const RunConfig& config) {
    const ExperimentPlan& plan = config.plan;
    json j;
    j["n_clients"] = plan.n_clients;
    j["tasks"] = plan.tasks;
    j["rounds_per_task"] = plan.rounds_per_task;
    j["model"] = {{"input_dim", plan.model.input_dim},
                  {"hidden_dims", plan.model.hidden_dims},
                  {"num_classes", plan.model.num_classes},
                  {"activation", plan.model.activation == Activation::kRelu ? "relu" : "tanh"}};
    j["stream"] = {{"generator", generator_name(plan.stream.generator)},
                   {"classes_per_task", {plan.stream.classes_lo, plan.stream.classes_hi}},
                   {"samples_per_class_train", plan.stream.samples_per_class_train},
                   {"samples_per_class_test", plan.stream.samples_per_class_test},
                   {"num_classes", plan.stream.num_classes},
                   {"input_dim", plan.stream.input_dim},
                   {"separation", plan.stream.separation}};
    j["trainer"] = {{"eta1", plan.trainer.eta1},
                    {"eta2", plan.trainer.eta2},
                    {"batch_size", plan.trainer.batch_size},
                    {"local_epochs", plan.trainer.local_epochs},
                    {"optimizer",
                     plan.trainer.optimizer == OptimizerKind::kSgd ? "sgd" : "adam"},
                    {"adam_lr_decay", plan.trainer.adam_lr_decay}};
    if (plan.trainer.lambda_dynamic) {
        j["trainer"]["lambda"] = "dynamic";
    } else {
        j["trainer"]["lambda"] = plan.trainer.lambda_fixed;
    }
    if (plan.trainer.mem_batch_size == 0) {
        j["trainer"]["mem_batch"] = "full";
    } else {
        j["trainer"]["mem_batch"] = plan.trainer.mem_batch_size;
    }
    j["memory"] = {{"capacity", plan.memory.capacity}, {"per_task", plan.memory.per_task}};
    j["inference"] = {{"theta", plan.inference.theta}, {"k", plan.inference.k}};
    json methods = json::array();
    for (Method m : config.methods) methods.push_back(method_name(m));
    j["methods"] = methods;
    j["seeds"] = config.seeds;
    j["output_dir"] = config.output_dir;
    j["emit_curves"] = config.emit_curves;
    if (!plan.csv_path.empty()) j["csv_path"] = plan.csv_path;
    if (!plan.trace_path.empty()) j["trace_steps"] = true;
    return j;
}

nlohmann::json metrics_to_json(const MetricsReport& report, Method method, std::uint64_t seed) {
    json j;
    j["method"] = method_name(method);
    j["seed"] = seed;
    j["acc_all"] = report.acc_all;
    j["acc_client"] = report.acc_client;
    j["acc_task"] = report.acc_task;
    j["forgetting"] = report.forgetting;
    j["forgetting_task_mean"] = report.forgetting_task_mean;
    j["forgetting_final_mean"] = report.forgetting_final_mean;
    return j;
}

int run(const RunConfig& config, std::ostream& log) {
    fs::create_directories(config.output_dir);
    bool any_failed = false;
    std::vector<SummaryRow> summary;

    for (Method method : config.methods) {
        std::vector<double> accs;
        std::vector<double> frs;
        // Per-task curves across seeds, filled only when requested.
        std::vector<std::vector<double>> acc_curves(config.plan.tasks);
        std::vector<std::vector<double>> fr_curves(config.plan.tasks);

        for (std::uint64_t seed : config.seeds) {
            ExperimentPlan plan = config.plan;
            plan.trainer.method = method;
            plan.master_seed = seed;
            plan.stream.seed = seed;
            const fs::path cell_dir =
                fs::path(config.output_dir) / method_name(method) / ("seed" + std::to_string(seed));
            fs::create_directories(cell_dir);
            if (plan.trace_path == "auto") plan.trace_path = (cell_dir / "trace.jsonl").string();

            try {
                const ExperimentResult result = run_experiment(plan);
                {
                    std::ofstream out(cell_dir / "metrics.json", std::ios::binary);
                    out << metrics_to_json(result.report, method, seed).dump(2) << "\n";
                }
                write_tensor_csv(result.tensor, (cell_dir / "accuracy_tensor.csv").string());
                accs.push_back(result.report.acc_all);
                frs.push_back(result.report.forgetting_final_mean);
                for (std::size_t t = 0; t < config.plan.tasks; ++t) {
                    acc_curves[t].push_back(result.report.acc_task[t]);
                    fr_curves[t].push_back(result.report.forgetting_task_mean[t]);
                }
                log << method_name(method) << " seed " << seed << ": acc_all "
                    << result.report.acc_all << ", fr " << result.report.forgetting_final_mean
                    << "\n";
            } catch (const std::exception& e) {
                any_failed = true;
                log << method_name(method) << " seed " << seed << " failed: " << e.what() << "\n";
            }
        }

        if (!accs.empty()) {
            const Stats acc = mean_std(accs);
            const Stats fr = mean_std(frs);
            summary.push_back(
                SummaryRow{method_name(method), acc.mean, acc.stddev, fr.mean, fr.stddev});
            if (config.emit_curves) {
                std::ofstream out(fs::path(config.output_dir) / method_name(method) / "curves.csv",
                                  std::ios::binary);
                out << "task,acc_task_mean,acc_task_std,fr_mean,fr_std\n";
                for (std::size_t t = 0; t < config.plan.tasks; ++t) {
                    const Stats a = mean_std(acc_curves[t]);
                    const Stats f = mean_std(fr_curves[t]);
                    std::string line = std::to_string(t + 1) + ",";
                    append_fixed(line, a.mean);
                    line += ",";
                    append_fixed(line, a.stddev);
                    line += ",";
                    append_fixed(line, f.mean);
                    line += ",";
                    append_fixed(line, f.stddev);
                    out << line << "\n";
                }
            }
        }
    }

    std::ofstream out(fs::path(config.output_dir) / "summary.csv", std::ios::binary);
    out << "method,acc_all_mean,acc_all_std,fr_mean,fr_std\n";
    for (const SummaryRow& row : summary) {
        std::string line = row.method + ",";
        append_fixed(line, row.acc_all_mean);
        line += ",";
        append_fixed(line, row.acc_all_std);
        line += ",";
        append_fixed(line, row.fr_mean);
        line += ",";
        append_fixed(line, row.fr_std);
        out << line << "\n";
    }
    return any_failed ? 2 : 0;
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "method,acc_all_mean,acc_all_std,fr_mean,fr_std") {
        throw std::runtime_error(path + ": unexpected summary header");
    }
    std::vector<SummaryRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 5) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 5 columns");
        }
        SummaryRow row;
        row.method = fields[0];
        try {
            row.acc_all_mean = std::stod(fields[1]);
            row.acc_all_std = std::stod(fields[2]);
            row.fr_mean = std::stod(fields[3]);
            row.fr_std = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed number");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int compare(const std::vector<std::string>& summary_paths, std::ostream& out) {
    if (summary_paths.size() < 2) {
        throw config_error("compare needs at least two summary files");
    }
    std::vector<std::vector<SummaryRow>> tables;
    for (const std::string& path : summary_paths) tables.push_back(read_summary_csv(path));

    // Methods in first-file order, then any extras in later files.
    std::vector<std::string> methods;
    for (const auto& table : tables) {
        for (const SummaryRow& row : table) {
            if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
                methods.push_back(row.method);
            }
        }
    }
    auto find_row = [](const std::vector<SummaryRow>& table, const std::string& m) {
        for (const SummaryRow& row : table) {
            if (row.method == m) return &row;
        }
        return static_cast<const SummaryRow*>(nullptr);
    };

    char buf[64];
    out << "method";
    for (std::size_t f = 0; f < tables.size(); ++f) {
        std::snprintf(buf, sizeof(buf), "  acc[%zu]     fr[%zu]   ", f + 1, f + 1);
        out << buf;
    }
    out << " d_acc      d_fr\n";
    for (const std::string& m : methods) {
        std::snprintf(buf, sizeof(buf), "%-12s", m.c_str());
        out << buf;
        const SummaryRow* first = find_row(tables.front(), m);
        const SummaryRow* last = find_row(tables.back(), m);
        for (const auto& table : tables) {
            if (const SummaryRow* row = find_row(table, m)) {
                std::snprintf(buf, sizeof(buf), "  %8.4f  %8.4f", row->acc_all_mean, row->fr_mean);
            } else {
                std::snprintf(buf, sizeof(buf), "  %8s  %8s", "-", "-");
            }
            out << buf;
        }
        if (first != nullptr && last != nullptr) {
            std::snprintf(buf, sizeof(buf), "  %+8.4f  %+8.4f",
                          last->acc_all_mean - first->acc_all_mean, last->fr_mean - first->fr_mean);
            out << buf;
        }
        out << "\n";
    }
    return 0;
}

int gen_data(const std::string& spec_path, const std::string& out_csv, std::ostream& log) {
    std::ifstream in(spec_path);
    if (!in) throw config_error("cannot open stream spec " + spec_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error(spec_path + ": " + e.what());
    }
    const std::size_t n_clients = get_as<std::size_t>(j, "stream_spec", "n_clients", 1);
    const std::size_t tasks = get_as<std::size_t>(j, "stream_spec", "tasks", 1);
    json stream_part = j;
    stream_part.erase("n_clients");
    stream_part.erase("tasks");
    StreamSpec spec = parse_stream(stream_part, "stream_spec");
    spec.n_clients = n_clients;
    spec.tasks = tasks;

    const auto streams = generate_streams(spec);
    export_csv_stream(streams, out_csv);
    std::size_t rows = 0;
    for (const auto& seq : streams) {
        for (const auto& task : seq.tasks) rows += task.train.size() + task.test.size();
    }
    log << "wrote " << rows << " rows for " << streams.size() << " clients to " << out_csv << "\n";
    return 0;
}

}  // namespace fedmes
