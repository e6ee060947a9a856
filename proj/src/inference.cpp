#include "fedmes/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedmes {
namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// Combines one row's logits and embedding into the final distribution.
std::vector<double> combine(std::span<const double> logits, std::span<const double> embedding,
                            std::span<const RLPair> pairs, std::size_t num_classes,
                            const InferenceConfig& config) {
    std::vector<double> model_probs = softmax(logits);
    if (pairs.empty()) return model_probs;
    const auto neighbors = knn_query(pairs, embedding, config.k);
    const auto vote = gaussian_vote(neighbors, num_classes);
    std::vector<double> out(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        out[c] = config.theta * vote[c] + (1.0 - config.theta) * model_probs[c];
    }
    return out;
}

int argmax_smallest(const std::vector<double>& probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
        if (probs[c] > probs[best]) best = c;
    }
    return static_cast<int>(best);
}

void check_config(const InferenceConfig& config) {
    if (config.theta < 0.0 || config.theta > 1.0) {
        throw std::invalid_argument("theta must lie in [0, 1]");
    }
    if (config.k == 0) throw std::invalid_argument("k must be positive");
}

}  // namespace

std::vector<RLPair> build_rl_pairs(const ModelSpec& spec, const ParamVector& params,
                                   const MemoryBuffer& memory) {
    std::vector<RLPair> pairs;
    if (memory.empty()) return pairs;
    const Minibatch all = memory.as_full_batch();
    const ForwardResult fwd = forward(spec, params, all.inputs);
    pairs.reserve(memory.size());
    std::size_t row = 0;
    for (const MemoryEntry& entry : memory.entries()) {
        RLPair p;
        p.embedding.assign(fwd.embeddings.row(row), fwd.embeddings.row(row) + fwd.embeddings.cols);
        p.label = entry.label;
        p.insertion_seq = entry.insertion_seq;
        pairs.push_back(std::move(p));
        ++row;
    }
    return pairs;
}

std::vector<Neighbor> knn_query(std::span<const RLPair> pairs,
                                std::span<const double> query_embedding, std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be positive");
    std::vector<Neighbor> scored;
    scored.reserve(pairs.size());
    for (const RLPair& p : pairs) {
        if (p.embedding.size() != query_embedding.size()) {
            throw std::invalid_argument("embedding length " + std::to_string(p.embedding.size()) +
                                        " does not match query length " +
                                        std::to_string(query_embedding.size()));
        }
        scored.push_back(Neighbor{p, euclidean(p.embedding, query_embedding)});
    }
    const std::size_t take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          if (a.distance != b.distance) return a.distance < b.distance;
                          return a.pair.insertion_seq < b.pair.insertion_seq;
                      });
    scored.resize(take);
    return scored;
}

std::vector<double> gaussian_vote(std::span<const Neighbor> neighbors, std::size_t num_classes) {
    if (neighbors.empty()) throw std::logic_error("gaussian_vote with no neighbors");
    std::vector<double> scores(num_classes, 0.0);
    double total = 0.0;
    for (const Neighbor& n : neighbors) {
        if (n.pair.label < 0 || static_cast<std::size_t>(n.pair.label) >= num_classes) {
            throw std::invalid_argument("neighbor label " + std::to_string(n.pair.label) +
                                        " outside [0, " + std::to_string(num_classes) + ")");
        }
        const double w = std::exp(-n.distance);
        scores[static_cast<std::size_t>(n.pair.label)] += w;
        total += w;
    }
    for (double& s : scores) s /= total;
    return scores;
}

std::vector<double> predict(const ModelSpec& spec, const ParamVector& params,
                            std::span<const RLPair> pairs, std::span<const double> x,
                            const InferenceConfig& config) {
    check_config(config);
    if (x.size() != spec.input_dim) {
        throw std::invalid_argument("query has " + std::to_string(x.size()) +
                                    " features, spec expects " + std::to_string(spec.input_dim));
    }
    Matrix one(1, spec.input_dim);
    std::copy(x.begin(), x.end(), one.row(0));
    const ForwardResult fwd = forward(spec, params, one);
    return combine(std::span<const double>(fwd.logits.row(0), spec.num_classes),
                   std::span<const double>(fwd.embeddings.row(0), fwd.embeddings.cols), pairs,
                   spec.num_classes, config);
}

int predict_label(const ModelSpec& spec, const ParamVector& params, std::span<const RLPair> pairs,
                  std::span<const double> x, const InferenceConfig& config) {
    return argmax_smallest(predict(spec, params, pairs, x, config));
}

double evaluate_accuracy(const ModelSpec& spec, const ParamVector& params,
                         std::span<const RLPair> pairs, const Minibatch& test,
                         const InferenceConfig& config) {
    check_config(config);
    if (test.size() == 0) throw std::invalid_argument("evaluate_accuracy on empty test split");
    const ForwardResult fwd = forward(spec, params, test.inputs);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < test.size(); ++r) {
        const auto probs =
            combine(std::span<const double>(fwd.logits.row(r), spec.num_classes),
                    std::span<const double>(fwd.embeddings.row(r), fwd.embeddings.cols), pairs,
                    spec.num_classes, config);
        if (argmax_smallest(probs) == test.labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace fedmes
