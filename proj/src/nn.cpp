#include "fedmes/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedmes/rng.hpp"

namespace fedmes {
namespace {

double activate(double z, Activation act) {
    return act == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the post-activation value: for relu a > 0
// exactly when z > 0 (subgradient 0 at the kink), and tanh' = 1 - tanh^2.
double activate_prime(double a, Activation act) {
    return act == Activation::kRelu ? (a > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

struct LayerView {
    const double* w;  // [fan_in x fan_out], row-major
    const double* b;  // [fan_out]
    std::size_t fan_in;
    std::size_t fan_out;
};

std::vector<LayerView> layer_views(const ModelSpec& spec, const ParamVector& params) {
    if (params.size() != parameter_count(spec)) {
        throw std::invalid_argument("params length " + std::to_string(params.size()) +
                                    ", spec expects " + std::to_string(parameter_count(spec)));
    }
    const auto widths = spec.layer_widths();
    std::vector<LayerView> layers;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        LayerView v{params.data() + offset, nullptr, widths[l], widths[l + 1]};
        offset += v.fan_in * v.fan_out;
        v.b = params.data() + offset;
        offset += v.fan_out;
        layers.push_back(v);
    }
    return layers;
}

// out = in * W + b
Matrix affine(const Matrix& in, const LayerView& layer) {
    Matrix out(in.rows, layer.fan_out);
    for (std::size_t r = 0; r < in.rows; ++r) {
        const double* x = in.row(r);
        double* y = out.row(r);
        for (std::size_t j = 0; j < layer.fan_out; ++j) y[j] = layer.b[j];
        for (std::size_t i = 0; i < layer.fan_in; ++i) {
            const double xi = x[i];
            const double* wrow = layer.w + i * layer.fan_out;
            for (std::size_t j = 0; j < layer.fan_out; ++j) y[j] += xi * wrow[j];
        }
    }
    return out;
}

void check_inputs(const ModelSpec& spec, const Matrix& inputs) {
    if (inputs.cols != spec.input_dim) {
        throw std::invalid_argument("inputs have " + std::to_string(inputs.cols) +
                                    " columns, spec expects input_dim=" +
                                    std::to_string(spec.input_dim));
    }
    for (double v : inputs.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite value in inputs");
    }
}

void check_labels(const ModelSpec& spec, const Minibatch& batch) {
    if (batch.inputs.rows != batch.labels.size()) {
        throw std::invalid_argument("batch has " + std::to_string(batch.inputs.rows) +
                                    " input rows but " + std::to_string(batch.labels.size()) +
                                    " labels");
    }
    for (int y : batch.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(spec.num_classes) + ")");
        }
    }
}

void check_finite(const Matrix& m, const char* what) {
    for (double v : m.data) {
        if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite ") + what);
    }
}

}  // namespace

std::vector<std::size_t> ModelSpec::layer_widths() const {
    std::vector<std::size_t> widths;
    widths.push_back(input_dim);
    widths.insert(widths.end(), hidden_dims.begin(), hidden_dims.end());
    widths.push_back(num_classes);
    return widths;
}

std::size_t ModelSpec::embed_dim() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
}

std::size_t parameter_count(const ModelSpec& spec) {
    const auto widths = spec.layer_widths();
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        total += (widths[l] + 1) * widths[l + 1];
    }
    return total;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    const auto widths = spec.layer_widths();
    ParamVector params(parameter_count(spec), 0.0);
    Rng rng(seed);
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const double bound = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
        const std::size_t n_weights = widths[l] * widths[l + 1];
        for (std::size_t i = 0; i < n_weights; ++i) {
            params[offset + i] = rng.uniform(-bound, bound);
        }
        offset += n_weights + widths[l + 1];  // biases stay zero
    }
    return params;
}

ForwardResult forward(const ModelSpec& spec, const ParamVector& params, const Matrix& inputs) {
    check_inputs(spec, inputs);
    const auto layers = layer_views(spec, params);

    Matrix act = inputs;
    Matrix embeddings = inputs;  // stays the input when there are no hidden layers
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        Matrix z = affine(act, layers[l]);
        for (double& v : z.data) v = activate(v, spec.activation);
        act = std::move(z);
    }
    if (!spec.hidden_dims.empty()) embeddings = act;
    Matrix logits = affine(act, layers.back());
    check_finite(logits, "logits");
    return ForwardResult{std::move(logits), std::move(embeddings)};
}

double cross_entropy_logits(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(logits.size()) + ")");
    }
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    return std::log(sum) - (logits[static_cast<std::size_t>(label)] - zmax);
}

std::vector<double> softmax(std::span<const double> logits) {
    const double zmax = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        probs[j] = std::exp(logits[j] - zmax);
        sum += probs[j];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

double loss(const ModelSpec& spec, const ParamVector& params, const Minibatch& batch) {
    check_labels(spec, batch);
    if (batch.size() == 0) throw std::invalid_argument("loss on empty batch");
    const ForwardResult fwd = forward(spec, params, batch.inputs);
    double total = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        total += cross_entropy_logits(
            std::span<const double>(fwd.logits.row(r), spec.num_classes), batch.labels[r]);
    }
    return total / static_cast<double>(batch.size());
}

ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Minibatch& batch,
                 double* loss_out) {
    check_labels(spec, batch);
    if (batch.size() == 0) throw std::invalid_argument("grad on empty batch");
    check_inputs(spec, batch.inputs);
    const auto layers = layer_views(spec, params);
    const std::size_t n_layers = layers.size();
    const double batch_n = static_cast<double>(batch.size());

    // Forward pass, caching post-activation values per layer. acts[l] is the
    // input to layer l; acts[n_layers] holds the logits.
    std::vector<Matrix> acts(n_layers + 1);
    acts[0] = batch.inputs;
    for (std::size_t l = 0; l < n_layers; ++l) {
        Matrix z = affine(acts[l], layers[l]);
        if (l + 1 < n_layers) {
            for (double& v : z.data) v = activate(v, spec.activation);
        }
        acts[l + 1] = std::move(z);
    }
    const Matrix& logits = acts[n_layers];
    check_finite(logits, "logits");

    if (loss_out != nullptr) {
        double total = 0.0;
        for (std::size_t r = 0; r < batch.size(); ++r) {
            total += cross_entropy_logits(
                std::span<const double>(logits.row(r), spec.num_classes), batch.labels[r]);
        }
        *loss_out = total / batch_n;
    }

    // delta = d(mean CE)/d(logits) = (softmax - onehot) / batch
    Matrix delta(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const auto probs = softmax(std::span<const double>(logits.row(r), logits.cols));
        for (std::size_t j = 0; j < logits.cols; ++j) {
            const double onehot = (static_cast<std::size_t>(batch.labels[r]) == j) ? 1.0 : 0.0;
            delta(r, j) = (probs[j] - onehot) / batch_n;
        }
    }

    ParamVector g(params.size(), 0.0);
    std::vector<std::size_t> offsets(n_layers);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        offsets[l] = offset;
        offset += (layers[l].fan_in + 1) * layers[l].fan_out;
    }

    // Backward pass.
    for (std::size_t l = n_layers; l-- > 0;) {
        const LayerView& layer = layers[l];
        const Matrix& in = acts[l];
        double* gw = g.data() + offsets[l];
        double* gb = gw + layer.fan_in * layer.fan_out;
        for (std::size_t r = 0; r < delta.rows; ++r) {
            const double* x = in.row(r);
            const double* d = delta.row(r);
            for (std::size_t i = 0; i < layer.fan_in; ++i) {
                double* gwrow = gw + i * layer.fan_out;
                for (std::size_t j = 0; j < layer.fan_out; ++j) gwrow[j] += x[i] * d[j];
            }
            for (std::size_t j = 0; j < layer.fan_out; ++j) gb[j] += d[j];
        }
        if (l == 0) break;
        // Propagate: delta_prev = (delta * W^T) .* act'(z_{l-1}); the cached
        // activation is post-nonlinearity, and for relu sign(a)==sign(z).
        Matrix prev(delta.rows, layer.fan_in);
        for (std::size_t r = 0; r < delta.rows; ++r) {
            const double* d = delta.row(r);
            const double* a = in.row(r);
            double* p = prev.row(r);
            for (std::size_t i = 0; i < layer.fan_in; ++i) {
                double acc = 0.0;
                const double* wrow = layer.w + i * layer.fan_out;
                for (std::size_t j = 0; j < layer.fan_out; ++j) acc += d[j] * wrow[j];
                p[i] = acc * activate_prime(a[i], spec.activation);
            }
        }
        delta = std::move(prev);
    }
    for (double v : g) {
        if (!std::isfinite(v)) throw std::runtime_error("non-finite gradient");
    }
    return g;
}

ParamVector finite_diff_grad(const ModelSpec& spec, const ParamVector& params,
                             const Minibatch& batch, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite difference step must be positive");
    ParamVector probe = params;
    ParamVector g(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + h;
        const double up = loss(spec, probe, batch);
        probe[i] = params[i] - h;
        const double down = loss(spec, probe, batch);
        probe[i] = params[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

Minibatch gather_rows(const Minibatch& batch, std::span<const std::size_t> take) {
    Minibatch out;
    out.inputs = Matrix(take.size(), batch.inputs.cols);
    out.labels.resize(take.size());
    for (std::size_t r = 0; r < take.size(); ++r) {
        const std::size_t src = take[r];
        std::copy(batch.inputs.row(src), batch.inputs.row(src) + batch.inputs.cols,
                  out.inputs.row(r));
        out.labels[r] = batch.labels[src];
    }
    return out;
}

}  // namespace fedmes
