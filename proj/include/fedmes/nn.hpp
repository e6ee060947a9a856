#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedmes/matrix.hpp"

namespace fedmes {

// Flat parameter vector of a ModelSpec; layout is layer by layer, weight
// matrix (row-major, [fan_in x fan_out]) followed by its bias.
using ParamVector = std::vector<double>;

enum class Activation { kRelu, kTanh };

// Architecture of the dense classifier. An empty hidden_dims gives a plain
// linear softmax model whose embedding is the raw input.
struct ModelSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t num_classes = 2;
    Activation activation = Activation::kRelu;

    // [input_dim, hidden..., num_classes]
    std::vector<std::size_t> layer_widths() const;

    // Width of the representation used for retrieval: the last hidden
    // activation, or the input itself when there are no hidden layers.
    std::size_t embed_dim() const;
};

std::size_t parameter_count(const ModelSpec& spec);

struct Minibatch {
    Matrix inputs;            // [batch x input_dim]
    std::vector<int> labels;  // class indices in [0, num_classes)

    std::size_t size() const { return labels.size(); }
};

struct ForwardResult {
    Matrix logits;      // [batch x num_classes]
    Matrix embeddings;  // [batch x embed_dim]
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

ForwardResult forward(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs);

// Mean softmax cross-entropy over the batch.
double loss(const ModelSpec& spec, const ParamVector& params, const Minibatch& batch);

// Analytic gradient of loss(). When loss_out is non-null the batch loss from
// the same forward pass is stored there, saving a second pass.
ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Minibatch& batch,
                 double* loss_out = nullptr);

// Central-difference gradient estimate; intended as a test oracle.
ParamVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params,
                             const Minibatch& batch, double h);

// Numerically stable cross-entropy of one logit row against a label.
double cross_entropy_logits(std::span<const double> logits, int label);

// Stable softmax (max-subtracted) of one logit row.
std::vector<double> softmax(std::span<const double> logits);

// Rows `take` (by index) of a batch, in the order given.
Minibatch gather_rows(const Minibatch& batch, std::span<const std::size_t> take);

}  // namespace fedmes
