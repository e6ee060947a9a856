#include "fedmes/trainer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedmes {
namespace {

double dot(const ParamVector& a, const ParamVector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void check_same_length(const ParamVector& a, const ParamVector& b, const char* what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": length mismatch " +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
}

// Applies one optimizer update along `direction` with base step size eta.
void apply_update(ClientState& client, const ParamVector& direction, double eta,
                  const TrainerConfig& config) {
    ParamVector& w = client.params;
    if (config.optimizer == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= eta * direction[i];
        return;
    }
    OptimizerState& opt = client.opt;
    if (opt.m.size() != w.size()) {
        opt.m.assign(w.size(), 0.0);
        opt.v.assign(w.size(), 0.0);
        opt.adam_steps = 0;
    }
    const AdamParams& p = config.adam;
    const double eta_eff =
        eta * std::pow(config.adam_lr_decay, static_cast<double>(opt.rounds_completed));
    ++opt.adam_steps;
    const double bc1 = 1.0 - std::pow(p.beta1, static_cast<double>(opt.adam_steps));
    const double bc2 = 1.0 - std::pow(p.beta2, static_cast<double>(opt.adam_steps));
    for (std::size_t i = 0; i < w.size(); ++i) {
        opt.m[i] = p.beta1 * opt.m[i] + (1.0 - p.beta1) * direction[i];
        opt.v[i] = p.beta2 * opt.v[i] + (1.0 - p.beta2) * direction[i] * direction[i];
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        w[i] -= eta_eff * mhat / (std::sqrt(vhat) + p.epsilon);
    }
}

}  // namespace

double NetworkObjective::loss(const ParamVector& w, const Minibatch& batch) const {
    return fedmes::loss(spec_, w, batch);
}

ParamVector NetworkObjective::gradient(const ParamVector& w, const Minibatch& batch,
                                       double* loss_out) const {
    return fedmes::grad(spec_, w, batch, loss_out);
}

ConvexProbe::ConvexProbe(Matrix hessian, std::vector<double> target, double c, double L)
    : hessian_(std::move(hessian)), target_(std::move(target)), c_(c), big_l_(L) {
    if (hessian_.rows != hessian_.cols || hessian_.rows != target_.size()) {
        throw std::invalid_argument("probe hessian/target dimensions disagree");
    }
    if (c_ <= 0.0 || big_l_ < c_) throw std::invalid_argument("probe needs 0 < c <= L");
}

ConvexProbe ConvexProbe::from_spectrum(const std::vector<double>& eigenvalues,
                                       std::vector<double> target, std::uint64_t rotation_seed) {
    const std::size_t n = eigenvalues.size();
    if (n == 0 || n != target.size()) {
        throw std::invalid_argument("probe spectrum/target dimensions disagree");
    }
    double c = eigenvalues[0];
    double L = eigenvalues[0];
    for (double e : eigenvalues) {
        c = std::min(c, e);
        L = std::max(L, e);
    }

    // Random orthogonal Q via Gram-Schmidt on a seeded Gaussian matrix.
    Rng rng(rotation_seed);
    Matrix q(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.normal();
        for (std::size_t prev = 0; prev < col; ++prev) {
            double proj = 0.0;
            for (std::size_t i = 0; i < n; ++i) proj += v[i] * q(i, prev);
            for (std::size_t i = 0; i < n; ++i) v[i] -= proj * q(i, prev);
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("degenerate rotation draw, change seed");
        for (std::size_t i = 0; i < n; ++i) q(i, col) = v[i] / norm;
    }

    Matrix h(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += q(i, k) * eigenvalues[k] * q(j, k);
            h(i, j) = acc;
        }
    }
    return ConvexProbe(std::move(h), std::move(target), c, L);
}

double ConvexProbe::loss(const ParamVector& w, const Minibatch&) const {
    if (w.size() != target_.size()) {
        throw std::invalid_argument("probe got " + std::to_string(w.size()) +
                                    " params, expects " + std::to_string(target_.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < target_.size(); ++i) {
        double hx = 0.0;
        for (std::size_t j = 0; j < target_.size(); ++j) {
            hx += hessian_(i, j) * (w[j] - target_[j]);
        }
        acc += (w[i] - target_[i]) * hx;
    }
    return 0.5 * acc;
}

ParamVector ConvexProbe::gradient(const ParamVector& w, const Minibatch& batch,
                                  double* loss_out) const {
    if (loss_out != nullptr) *loss_out = loss(w, batch);
    ParamVector g(target_.size(), 0.0);
    for (std::size_t i = 0; i < target_.size(); ++i) {
        for (std::size_t j = 0; j < target_.size(); ++j) {
            g[i] += hessian_(i, j) * (w[j] - target_[j]);
        }
    }
    return g;
}

double compute_lambda(const Objective& objective, const ParamVector& global_params,
                      const Minibatch& dataset) {
    const double l = objective.loss(global_params, dataset);
    if (l < 0.0) throw std::runtime_error("negative loss in compute_lambda");
    if (l == 0.0) return 2.0;
    return 2.0 / (1.0 + std::exp(-1.0 / l));
}

bool check_transfer_condition(const ParamVector& g_cur, const ParamVector& g_mem) {
    check_same_length(g_cur, g_mem, "check_transfer_condition");
    // A zero-norm memory gradient yields inner product 0, which passes.
    return dot(g_cur, g_mem) >= 0.0;
}

ParamVector project_gradient(const ParamVector& g_cur, const ParamVector& g_mem) {
    check_same_length(g_cur, g_mem, "project_gradient");
    const double mem_sq = dot(g_mem, g_mem);
    if (mem_sq == 0.0) throw std::invalid_argument("project_gradient: zero memory gradient");
    const double coeff = dot(g_cur, g_mem) / mem_sq;
    ParamVector out(g_cur.size());
    for (std::size_t i = 0; i < g_cur.size(); ++i) out[i] = g_cur[i] - coeff * g_mem[i];
    return out;
}

StepDiagnostics local_step(const Objective& objective, ClientState& client,
                           const ParamVector& global_params, const Minibatch& batch,
                           const TrainerConfig& config, double lambda, Rng& rng) {
    check_same_length(client.params, global_params, "local_step params");
    StepDiagnostics diag;
    ParamVector g_cur = objective.gradient(client.params, batch, &diag.loss_before);

    bool transfer = true;
    ParamVector g_mem;
    if (!client.memory.empty()) {
        const Minibatch mem_batch = config.mem_batch_size == 0
                                        ? client.memory.as_full_batch()
                                        : client.memory.sample_batch(config.mem_batch_size, rng);
        g_mem = objective.gradient(client.params, mem_batch, nullptr);
        diag.inner_product = dot(g_cur, g_mem);
        transfer = diag.inner_product >= 0.0;
    }

    if (transfer) {
        diag.branch = StepBranch::kTransfer;
        diag.lambda_used = lambda;
        if (lambda != 0.0) {
            for (std::size_t i = 0; i < g_cur.size(); ++i) {
                g_cur[i] += lambda * (client.params[i] - global_params[i]);
            }
        }
        apply_update(client, g_cur, config.eta1, config);
    } else {
        // Correction step: projected task gradient, no pull toward the
        // global model, its own step size.
        diag.branch = StepBranch::kCorrection;
        diag.lambda_used = 0.0;
        const ParamVector corrected = project_gradient(g_cur, g_mem);
        apply_update(client, corrected, config.eta2, config);
    }
    diag.loss_after = objective.loss(client.params, batch);
    return diag;
}

double resolve_lambda(const Objective& objective, const ParamVector& global_params,
                      const TaskDataset& task_data, const TrainerConfig& config) {
    switch (config.method) {
        case Method::kFedAvg:
        case Method::kFedAgem:
            return 0.0;
        case Method::kDitto:
            return config.lambda_fixed;
        case Method::kFedMeS:
        case Method::kFedMeSNoLip:
            break;
    }
    if (!config.lambda_dynamic) return config.lambda_fixed;
    return compute_lambda(objective, global_params, task_data.train);
}

ParamVector run_local_round(const Objective& objective, ClientState& client,
                            const ParamVector& global_params, const TaskDataset& task_data,
                            const TrainerConfig& config, std::uint64_t seed,
                            std::vector<StepDiagnostics>* diagnostics) {
    if (config.batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    const std::size_t n = task_data.train.size();
    if (config.local_epochs == 0 || n == 0) return client.params;

    const double lambda = resolve_lambda(objective, global_params, task_data, config);
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const Minibatch batch = gather_rows(
                task_data.train, std::span<const std::size_t>(order.data() + start, stop - start));
            StepDiagnostics diag = local_step(objective, client, global_params, batch, config,
                                              lambda, rng);
            if (diagnostics != nullptr) diagnostics->push_back(diag);
        }
    }
    return client.params;
}

}  // namespace fedmes
