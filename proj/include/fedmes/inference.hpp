#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedmes/memory.hpp"
#include "fedmes/nn.hpp"

namespace fedmes {

// Representation-label pair extracted from one memory entry.
struct RLPair {
    std::vector<double> embedding;
    int label = 0;
    std::uint64_t insertion_seq = 0;
};

struct Neighbor {
    RLPair pair;
    double distance = 0.0;
};

struct InferenceConfig {
    double theta = 0.5;  // weight of the retrieval vote vs the model softmax
    std::size_t k = 9;   // neighbors consulted
};

// Embeds every memory entry under the current parameters. Call again after
// the parameters change; the pairs are snapshots, not views.
std::vector<RLPair> build_rl_pairs(const ModelSpec& spec, const ParamVector& params,
                                   const MemoryBuffer& memory);

// The min(k, |pairs|) nearest pairs by Euclidean distance, ascending; exact
// ties broken toward the smaller insertion_seq. Empty input returns empty.
std::vector<Neighbor> knn_query(std::span<const RLPair> pairs,
                                std::span<const double> query_embedding, std::size_t k);

// Distance-weighted class scores: each neighbor votes exp(-distance) for its
// label; scores are normalized to a distribution over num_classes.
std::vector<double> gaussian_vote(std::span<const Neighbor> neighbors, std::size_t num_classes);

// Task-oblivious prediction: theta * retrieval vote + (1 - theta) * model
// softmax. With no pairs (empty memory, or a method that does not use the
// retrieval path) this is the plain softmax.
std::vector<double> predict(const ModelSpec& spec, const ParamVector& params,
                            std::span<const RLPair> pairs, std::span<const double> x,
                            const InferenceConfig& config);

// Argmax of predict(); ties resolve to the smallest class index.
int predict_label(const ModelSpec& spec, const ParamVector& params, std::span<const RLPair> pairs,
                  std::span<const double> x, const InferenceConfig& config);

// Fraction of test rows whose predicted label matches. Shares the prediction
// path with predict() but batches the forward pass.
double evaluate_accuracy(const ModelSpec& spec, const ParamVector& params,
                         std::span<const RLPair> pairs, const Minibatch& test,
                         const InferenceConfig& config);

}  // namespace fedmes
