#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedmes/errors.hpp"
#include "fedmes/tasks.hpp"

using namespace fedmes;

namespace {

StreamSpec small_spec() {
    StreamSpec spec;
    spec.n_clients = 2;
    spec.tasks = 3;
    spec.classes_lo = 2;
    spec.classes_hi = 2;
    spec.samples_per_class_train = 10;
    spec.samples_per_class_test = 4;
    spec.num_classes = 10;
    spec.input_dim = 3;
    spec.seed = 1;
    return spec;
}

bool batches_equal(const Minibatch& a, const Minibatch& b) {
    return a.labels == b.labels && a.inputs.rows == b.inputs.rows &&
           a.inputs.cols == b.inputs.cols && a.inputs.data == b.inputs.data;
}

bool streams_equal(const std::vector<TaskSequence>& a, const std::vector<TaskSequence>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t c = 0; c < a.size(); ++c) {
        if (a[c].client_id != b[c].client_id || a[c].tasks.size() != b[c].tasks.size()) return false;
        for (std::size_t t = 0; t < a[c].tasks.size(); ++t) {
            const TaskDataset& x = a[c].tasks[t];
            const TaskDataset& y = b[c].tasks[t];
            if (x.task_index != y.task_index || x.class_ids != y.class_ids) return false;
            if (!batches_equal(x.train, y.train) || !batches_equal(x.test, y.test)) return false;
        }
    }
    return true;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

struct TempPath {
    std::string path;
    explicit TempPath(const std::string& name) : path("/tmp/fedmes_tasks_" + name) {}
    ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("same spec generates identical streams") {
    StreamSpec spec = small_spec();
    CHECK(streams_equal(generate_streams(spec), generate_streams(spec)));
}

TEST_CASE("generated streams have the requested shape") {
    StreamSpec spec = small_spec();
    std::vector<TaskSequence> streams = generate_streams(spec);
    REQUIRE(streams.size() == 2);
    for (std::size_t c = 0; c < streams.size(); ++c) {
        CHECK(streams[c].client_id == static_cast<int>(c));
        REQUIRE(streams[c].tasks.size() == 3);
        for (std::size_t t = 0; t < 3; ++t) {
            const TaskDataset& task = streams[c].tasks[t];
            CHECK(task.task_index == static_cast<int>(t) + 1);
            CHECK(task.class_ids.size() == 2);
            CHECK(task.train.size() == 2 * 10);
            CHECK(task.test.size() == 2 * 4);
            CHECK(task.train.inputs.cols == 3);
            for (int label : task.train.labels) {
                CHECK(task.class_ids.count(label) == 1);
                CHECK(label >= 0);
                CHECK(label < 10);
            }
            for (int label : task.test.labels) CHECK(task.class_ids.count(label) == 1);
            for (double v : task.train.inputs.data) CHECK(std::isfinite(v));
            for (double v : task.test.inputs.data) CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("widely separated blobs are classifiable by nearest centroid") {
    StreamSpec spec = small_spec();
    spec.separation = 10.0;
    spec.samples_per_class_train = 50;
    std::vector<TaskSequence> streams = generate_streams(spec);
    const TaskDataset& task = streams[0].tasks[0];

    // centroid estimates from the train split itself
    std::map<int, std::vector<double>> centroid;
    std::map<int, int> count;
    for (std::size_t r = 0; r < task.train.size(); ++r) {
        int y = task.train.labels[r];
        auto& c = centroid[y];
        c.resize(spec.input_dim, 0.0);
        for (std::size_t d = 0; d < spec.input_dim; ++d) c[d] += task.train.inputs(r, d);
        ++count[y];
    }
    for (auto& [y, c] : centroid) {
        for (double& v : c) v /= count[y];
    }

    int hits = 0;
    for (std::size_t r = 0; r < task.train.size(); ++r) {
        int best = -1;
        double best_d = 0.0;
        for (const auto& [y, c] : centroid) {
            double d = 0.0;
            for (std::size_t col = 0; col < spec.input_dim; ++col) {
                double diff = task.train.inputs(r, col) - c[col];
                d += diff * diff;
            }
            if (best < 0 || d < best_d) {
                best = y;
                best_d = d;
            }
        }
        hits += (best == task.train.labels[r]);
    }
    CHECK(static_cast<double>(hits) / task.train.size() >= 0.99);
}

TEST_CASE("train and test splits never share a row") {
    std::vector<TaskSequence> streams = generate_streams(small_spec());
    for (const TaskSequence& seq : streams) {
        for (const TaskDataset& task : seq.tasks) {
            std::set<std::vector<double>> train_rows;
            for (std::size_t r = 0; r < task.train.size(); ++r) {
                const double* row = task.train.inputs.row(r);
                train_rows.insert(std::vector<double>(row, row + task.train.inputs.cols));
            }
            for (std::size_t r = 0; r < task.test.size(); ++r) {
                const double* row = task.test.inputs.row(r);
                CHECK(train_rows.count(std::vector<double>(row, row + task.test.inputs.cols)) == 0);
            }
        }
    }
}

TEST_CASE("two clients rarely draw the same first-task class pair") {
    // with pairs from a 10-class pool, a collision has probability 1/45;
    // 1000 seeds should see roughly 22, and independence keeps it far from
    // 0 or from the ~1000 a shared draw would give
    StreamSpec spec = small_spec();
    spec.tasks = 1;
    spec.samples_per_class_train = 1;
    spec.samples_per_class_test = 1;
    int collisions = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        spec.seed = 1000 + s;
        std::vector<TaskSequence> streams = generate_streams(spec);
        if (streams[0].tasks[0].class_ids == streams[1].tasks[0].class_ids) ++collisions;
    }
    CHECK(collisions >= 5);
    CHECK(collisions <= 45);
}

TEST_CASE("adding clients never perturbs existing streams") {
    StreamSpec spec = small_spec();
    std::vector<TaskSequence> two = generate_streams(spec);
    spec.n_clients = 4;
    std::vector<TaskSequence> four = generate_streams(spec);
    CHECK(streams_equal(two, {four[0], four[1]}));
}

TEST_CASE("rotated moons force two dimensions") {
    StreamSpec spec = small_spec();
    spec.generator = StreamGenerator::kRotatedTwoMoons;
    spec.input_dim = 2;
    std::vector<TaskSequence> streams = generate_streams(spec);
    CHECK(streams[0].tasks[0].train.inputs.cols == 2);

    spec.input_dim = 3;
    CHECK_THROWS_AS(generate_streams(spec), config_error);
}

TEST_CASE("invalid specs are rejected") {
    StreamSpec spec = small_spec();
    spec.classes_hi = 11;  // exceeds the 10-class pool
    CHECK_THROWS_AS(generate_streams(spec), config_error);

    spec = small_spec();
    spec.classes_lo = 1;
    CHECK_THROWS_AS(generate_streams(spec), config_error);

    spec = small_spec();
    spec.generator = StreamGenerator::kCsvSource;
    CHECK_THROWS_AS(generate_streams(spec), config_error);

    spec = small_spec();
    spec.separation = 0.0;
    CHECK_THROWS_AS(generate_streams(spec), config_error);
}

TEST_CASE("csv export and reload round-trips a generated stream") {
    StreamSpec spec = small_spec();
    std::vector<TaskSequence> streams = generate_streams(spec);
    TempPath tmp("roundtrip.csv");
    export_csv_stream(streams, tmp.path);
    std::vector<TaskSequence> loaded = load_csv_stream(tmp.path, spec);
    CHECK(streams_equal(streams, loaded));

    // export is byte-stable
    TempPath tmp2("roundtrip2.csv");
    export_csv_stream(generate_streams(spec), tmp2.path);
    CHECK(read_file(tmp.path) == read_file(tmp2.path));
}

TEST_CASE("empty stream exports a header-only file") {
    TempPath tmp("empty.csv");
    export_csv_stream({}, tmp.path);
    CHECK(read_file(tmp.path) == "client_id,task_index,split,label\n");
}

TEST_CASE("hand-written csv loads exactly") {
    TempPath tmp("hand.csv");
    std::ofstream out(tmp.path);
    out << "client_id,task_index,split,label,f1,f2\n";
    out << "0,1,train,0,1.5,-2\n";
    out << "0,1,train,1,0.25,3\n";
    out << "0,1,test,0,1,1\n";
    out << "0,1,test,1,0,0\n";
    out.close();

    StreamSpec spec;
    spec.num_classes = 2;
    std::vector<TaskSequence> streams = load_csv_stream(tmp.path, spec);
    REQUIRE(streams.size() == 1);
    REQUIRE(streams[0].tasks.size() == 1);
    const TaskDataset& task = streams[0].tasks[0];
    CHECK(task.train.size() == 2);
    CHECK(task.test.size() == 2);
    CHECK(task.train.inputs(0, 0) == 1.5);
    CHECK(task.train.inputs(0, 1) == -2.0);
    CHECK(task.train.labels == std::vector<int>{0, 1});
    CHECK(task.class_ids == std::set<int>{0, 1});
}

TEST_CASE("csv loader reports the offending line") {
    StreamSpec spec;
    spec.num_classes = 2;

    TempPath bad_field("bad_field.csv");
    {
        std::ofstream out(bad_field.path);
        out << "client_id,task_index,split,label,f1\n";
        out << "0,1,train,0,1.0\n";
        out << "0,1,train,oops,2.0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv_stream(bad_field.path, spec), doctest::Contains(":3"),
                         std::runtime_error);

    TempPath bad_label("bad_label.csv");
    {
        std::ofstream out(bad_label.path);
        out << "client_id,task_index,split,label,f1\n";
        out << "0,1,train,7,1.0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv_stream(bad_label.path, spec), doctest::Contains("label"),
                         std::runtime_error);

    TempPath ragged("ragged.csv");
    {
        std::ofstream out(ragged.path);
        out << "client_id,task_index,split,label,f1,f2\n";
        out << "0,1,train,0,1.0,2.0\n";
        out << "0,1,train,1,1.0\n";
    }
    CHECK_THROWS_AS(load_csv_stream(ragged.path, spec), std::runtime_error);

    CHECK_THROWS_AS(load_csv_stream("/tmp/fedmes_tasks_does_not_exist.csv", spec),
                    std::runtime_error);
}
