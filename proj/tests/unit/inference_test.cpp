#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fedmes/inference.hpp"
#include "fedmes/memory.hpp"
#include "fedmes/rng.hpp"

using namespace fedmes;

namespace {

RLPair make_pair(std::vector<double> embedding, int label, std::uint64_t seq) {
    RLPair p;
    p.embedding = std::move(embedding);
    p.label = label;
    p.insertion_seq = seq;
    return p;
}

// exhaustive reference: full stable sort by (distance, insertion_seq)
std::vector<std::uint64_t> oracle_knn(const std::vector<RLPair>& pairs,
                                      const std::vector<double>& query, std::size_t k) {
    std::vector<std::pair<double, std::uint64_t>> ranked;
    for (const RLPair& p : pairs) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < query.size(); ++i) {
            double diff = p.embedding[i] - query[i];
            d2 += diff * diff;
        }
        ranked.emplace_back(d2, p.insertion_seq);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].second);
    return out;
}

TaskDataset tiny_task(std::size_t rows, std::size_t dim) {
    TaskDataset task;
    task.task_index = 1;
    task.train.inputs = Matrix(rows, dim);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t d = 0; d < dim; ++d) task.train.inputs(r, d) = 0.1 * (r + 1) + 0.01 * d;
        task.train.labels.push_back(static_cast<int>(r % 2));
        task.class_ids.insert(static_cast<int>(r % 2));
    }
    return task;
}

}  // namespace

TEST_CASE("rl pairs mirror the memory and track the parameters") {
    ModelSpec spec{2, {3}, 2, Activation::kTanh};
    ParamVector params = init_params(spec, 5);

    MemoryBuffer empty_mem(4, 2);
    CHECK(build_rl_pairs(spec, params, empty_mem).empty());

    MemoryBuffer memory(8, 3);
    memory.append_task_samples(tiny_task(3, 2), 7);
    std::vector<RLPair> pairs = build_rl_pairs(spec, params, memory);
    REQUIRE(pairs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(pairs[i].label == memory.entries()[i].label);
        CHECK(pairs[i].insertion_seq == memory.entries()[i].insertion_seq);
        CHECK(pairs[i].embedding.size() == spec.embed_dim());
    }

    // new parameters, new representations
    ParamVector other = init_params(spec, 6);
    std::vector<RLPair> pairs2 = build_rl_pairs(spec, other, memory);
    bool any_diff = false;
    for (std::size_t i = 0; i < 3; ++i) any_diff |= (pairs[i].embedding != pairs2[i].embedding);
    CHECK(any_diff);
}

TEST_CASE("knn basics: exact hit, clamping, empty input") {
    std::vector<RLPair> pairs = {make_pair({0.0, 0.0}, 1, 0), make_pair({3.0, 4.0}, 0, 1)};
    std::vector<double> query = {0.0, 0.0};

    std::vector<Neighbor> one = knn_query(pairs, query, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].pair.insertion_seq == 0);
    CHECK(one[0].distance == 0.0);

    std::vector<Neighbor> all = knn_query(pairs, query, 10);
    REQUIRE(all.size() == 2);
    CHECK(all[1].distance == doctest::Approx(5.0).epsilon(1e-12));

    CHECK(knn_query(std::vector<RLPair>{}, query, 3).empty());
    CHECK_THROWS_AS(knn_query(pairs, query, 0), std::invalid_argument);
}

TEST_CASE("knn ties resolve toward the older entry") {
    std::vector<RLPair> pairs = {make_pair({1.0, 0.0}, 0, 5), make_pair({-1.0, 0.0}, 1, 2),
                                 make_pair({0.0, 1.0}, 2, 9)};
    std::vector<double> origin = {0.0, 0.0};
    std::vector<Neighbor> picked = knn_query(pairs, origin, 2);
    REQUIRE(picked.size() == 2);
    CHECK(picked[0].pair.insertion_seq == 2);
    CHECK(picked[1].pair.insertion_seq == 5);
}

TEST_CASE("knn agrees with the exhaustive sort on random instances") {
    Rng rng(909);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 1 + rng.below(12);
        std::size_t dim = 1 + rng.below(4);
        std::size_t k = 1 + rng.below(n + 2);
        std::vector<RLPair> pairs;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> e(dim);
            // snapped to a lattice so exact distance ties actually happen
            for (double& v : e) v = std::round(rng.normal() * 2.0) / 2.0;
            pairs.push_back(make_pair(std::move(e), static_cast<int>(rng.below(4)), i));
        }
        std::vector<double> query(dim);
        for (double& v : query) v = std::round(rng.normal() * 2.0) / 2.0;

        std::vector<Neighbor> got = knn_query(pairs, query, k);
        std::vector<std::uint64_t> expect = oracle_knn(pairs, query, k);
        REQUIRE(got.size() == expect.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].pair.insertion_seq == expect[i]);
        }
        for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].distance <= got[i].distance);
    }
}

TEST_CASE("gaussian vote hand cases") {
    Neighbor a{make_pair({0.0}, 0, 0), 0.0};
    Neighbor b{make_pair({0.0}, 1, 1), 0.0};

    // unanimous neighbors take the whole mass
    std::vector<Neighbor> unanimous = {a, Neighbor{make_pair({0.0}, 0, 2), 1.7}};
    std::vector<double> v1 = gaussian_vote(unanimous, 3);
    CHECK(v1[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v1[1] == 0.0);
    CHECK(v1[2] == 0.0);

    // equal distances split evenly
    std::vector<double> v2 = gaussian_vote(std::vector<Neighbor>{a, b}, 2);
    CHECK(v2[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(v2[1] == doctest::Approx(0.5).epsilon(1e-12));

    // weights exp(0)=1 and exp(-ln 2)=0.5 give a 2:1 split
    Neighbor far_b{make_pair({0.0}, 1, 1), std::log(2.0)};
    std::vector<double> v3 = gaussian_vote(std::vector<Neighbor>{a, far_b}, 2);
    CHECK(v3[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(v3[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(gaussian_vote(std::vector<Neighbor>{}, 2), std::logic_error);
    Neighbor bad{make_pair({0.0}, 7, 0), 0.0};
    CHECK_THROWS_AS(gaussian_vote(std::vector<Neighbor>{bad}, 2), std::invalid_argument);
}

TEST_CASE("longer distance never raises a class's vote share") {
    Neighbor fixed{make_pair({0.0}, 0, 0), 0.3};
    double prev_share = 1.0;
    for (double d : {0.0, 0.5, 1.0, 2.0, 5.0}) {
        Neighbor moving{make_pair({0.0}, 1, 1), d};
        std::vector<double> v = gaussian_vote(std::vector<Neighbor>{fixed, moving}, 2);
        CHECK(v[1] <= prev_share + 1e-15);
        prev_share = v[1];
    }
}

TEST_CASE("predict blends the vote with the model softmax") {
    // linear 1-input model with logits (0, ln 4): softmax (0.2, 0.8)
    ModelSpec spec{1, {}, 2, Activation::kRelu};
    ParamVector params = {0.0, std::log(4.0), 0.0, 0.0};
    std::vector<double> x = {1.0};

    // single class-0 pair at the query point: vote (1, 0)
    std::vector<RLPair> pairs = {make_pair({1.0}, 0, 0)};

    InferenceConfig config;
    config.k = 1;

    config.theta = 0.5;
    std::vector<double> blend = predict(spec, params, pairs, x, config);
    CHECK(blend[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(blend[1] == doctest::Approx(0.4).epsilon(1e-12));

    config.theta = 0.0;  // pure model
    std::vector<double> model_only = predict(spec, params, pairs, x, config);
    CHECK(model_only[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(model_only[1] == doctest::Approx(0.8).epsilon(1e-12));

    config.theta = 1.0;  // pure retrieval
    std::vector<double> vote_only = predict(spec, params, pairs, x, config);
    CHECK(vote_only[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(vote_only[1] == doctest::Approx(0.0).epsilon(1e-12));

    // no pairs: softmax regardless of theta
    std::vector<double> fallback = predict(spec, params, {}, x, config);
    CHECK(fallback[0] == doctest::Approx(0.2).epsilon(1e-12));

    config.theta = 1.5;
    CHECK_THROWS_AS(predict(spec, params, pairs, x, config), std::invalid_argument);
}

TEST_CASE("predict always yields a distribution") {
    ModelSpec spec{2, {4}, 3, Activation::kRelu};
    ParamVector params = init_params(spec, 3);
    MemoryBuffer memory(6, 3);
    memory.append_task_samples(tiny_task(3, 2), 5);
    std::vector<RLPair> pairs = build_rl_pairs(spec, params, memory);

    Rng rng(12);
    for (double theta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        InferenceConfig config;
        config.theta = theta;
        config.k = 2;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x = {rng.normal(), rng.normal()};
            std::vector<double> p = predict(spec, params, pairs, x, config);
            double sum = 0.0;
            for (double v : p) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("label prediction breaks ties toward the smaller class") {
    ModelSpec spec{1, {}, 2, Activation::kRelu};
    ParamVector params = {0.0, 0.0, 0.0, 0.0};  // uniform softmax

    // two pairs, classes 0/1, equidistant: vote (0.5, 0.5); softmax (0.5, 0.5)
    std::vector<RLPair> pairs = {make_pair({1.0}, 1, 0), make_pair({-1.0}, 0, 1)};
    InferenceConfig config;
    config.theta = 0.5;
    config.k = 2;
    std::vector<double> x = {0.0};
    CHECK(predict_label(spec, params, pairs, x, config) == 0);
}

TEST_CASE("accuracy evaluation matches per-row prediction") {
    ModelSpec spec{2, {5}, 3, Activation::kTanh};
    ParamVector params = init_params(spec, 21);
    MemoryBuffer memory(9, 4);
    memory.append_task_samples(tiny_task(4, 2), 3);
    std::vector<RLPair> pairs = build_rl_pairs(spec, params, memory);

    Minibatch test;
    test.inputs = Matrix(6, 2);
    Rng rng(8);
    for (double& v : test.inputs.data) v = rng.normal();
    for (int r = 0; r < 6; ++r) test.labels.push_back(static_cast<int>(rng.below(3)));

    InferenceConfig config;
    config.theta = 0.5;
    config.k = 3;
    int hits = 0;
    for (std::size_t r = 0; r < 6; ++r) {
        const double* row = test.inputs.row(r);
        std::vector<double> x(row, row + 2);
        hits += (predict_label(spec, params, pairs, x, config) == test.labels[r]);
    }
    CHECK(evaluate_accuracy(spec, params, pairs, test, config) ==
          doctest::Approx(hits / 6.0).epsilon(1e-12));
}
