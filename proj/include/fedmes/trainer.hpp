#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "fedmes/memory.hpp"
#include "fedmes/nn.hpp"
#include "fedmes/rng.hpp"
#include "fedmes/tasks.hpp"

namespace fedmes {

enum class Method { kFedMeS, kFedMeSNoLip, kFedAvg, kDitto, kFedAgem };

enum class OptimizerKind { kSgd, kAdam };

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Knobs for one client's local optimization.
//   eta1 / eta2     step sizes for the plain and the corrected update
//   lambda_dynamic  recompute the proximal weight from the global model's
//                   loss each round (2*sigmoid(1/loss)); otherwise use
//                   lambda_fixed. fedavg and fedagem always run with 0.
//   mem_batch_size  0 evaluates the memory gradient on the full buffer,
//                   otherwise on a sampled batch of that size
struct TrainerConfig {
    Method method = Method::kFedMeS;
    double eta1 = 0.05;
    double eta2 = 0.05;
    bool lambda_dynamic = true;
    double lambda_fixed = 0.1;
    std::size_t batch_size = 40;
    std::size_t local_epochs = 10;
    std::size_t mem_batch_size = 0;
    OptimizerKind optimizer = OptimizerKind::kSgd;
    AdamParams adam;
    double adam_lr_decay = 0.95;  // multiplicative, per communication round
};

struct OptimizerState {
    std::vector<double> m;  // adam first moment (lazily sized)
    std::vector<double> v;  // adam second moment
    std::uint64_t adam_steps = 0;
    std::uint64_t rounds_completed = 0;  // drives the adam decay schedule
};

struct ClientState {
    int client_id = 0;
    ParamVector params;
    OptimizerState opt;
    MemoryBuffer memory;
    int current_task = 1;
};

enum class StepBranch { kTransfer, kCorrection };

// One record per parameter update, for the JSONL trace and for tests.
struct StepDiagnostics {
    double inner_product = 0.0;  // <g_cur, g_mem>; 0 when memory is empty
    StepBranch branch = StepBranch::kTransfer;
    double lambda_used = 0.0;  // proximal weight applied (0 on correction steps)
    double loss_before = 0.0;
    double loss_after = 0.0;
};

// Loss surface the trainer optimizes. The network binds a ModelSpec; the
// quadratic probe below exists for closed-form convergence tests.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::size_t param_count() const = 0;
    virtual double loss(const ParamVector& w, const Minibatch& batch) const = 0;
    virtual ParamVector gradient(const ParamVector& w, const Minibatch& batch,
                                 double* loss_out = nullptr) const = 0;
};

class NetworkObjective : public Objective {
public:
    explicit NetworkObjective(ModelSpec spec) : spec_(std::move(spec)) {}
    const ModelSpec& spec() const { return spec_; }
    std::size_t param_count() const override { return parameter_count(spec_); }
    double loss(const ParamVector& w, const Minibatch& batch) const override;
    ParamVector gradient(const ParamVector& w, const Minibatch& batch,
                         double* loss_out) const override;

private:
    ModelSpec spec_;
};

// Quadratic fixture 0.5 (w-a)^T H (w-a) with SPD H; ignores batch contents.
// c and L are the extreme eigenvalues of H (strong convexity / smoothness).
class ConvexProbe : public Objective {
public:
    ConvexProbe(Matrix hessian, std::vector<double> target, double c, double L);

    // H = Q diag(eigenvalues) Q^T with a seeded random rotation Q, so the
    // spectrum (and hence c and L) is exact by construction.
    static ConvexProbe from_spectrum(const std::vector<double>& eigenvalues,
                                     std::vector<double> target, std::uint64_t rotation_seed);

    std::size_t param_count() const override { return target_.size(); }
    double loss(const ParamVector& w, const Minibatch& batch) const override;
    ParamVector gradient(const ParamVector& w, const Minibatch& batch,
                         double* loss_out) const override;

    const Matrix& hessian() const { return hessian_; }
    const std::vector<double>& target() const { return target_; }
    double strong_convexity() const { return c_; }
    double smoothness() const { return big_l_; }

private:
    Matrix hessian_;
    std::vector<double> target_;
    double c_ = 0.0;
    double big_l_ = 0.0;
};

// Loss-adaptive proximal weight 2*sigmoid(1 / loss(global on dataset)); the
// exact-fit limit (loss 0) maps to 2, large losses approach 1 from above.
double compute_lambda(const Objective& objective, const ParamVector& global_params,
                      const Minibatch& dataset);

// True when the current-task gradient does not conflict with the memory
// gradient: <g_cur, g_mem> >= 0. A zero memory gradient never conflicts.
bool check_transfer_condition(const ParamVector& g_cur, const ParamVector& g_mem);

// Projects g_cur onto the half-space of directions that do not increase the
// memory loss: g_cur - (<g_cur, g_mem>/<g_mem, g_mem>) g_mem.
ParamVector project_gradient(const ParamVector& g_cur, const ParamVector& g_mem);

// One parameter update. Takes the transfer branch (task gradient plus
// lambda-weighted pull toward the global model, step eta1) when the memory is
// empty or the condition holds; otherwise applies the projected gradient with
// step eta2 and no proximal term.
StepDiagnostics local_step(const Objective& objective, ClientState& client,
                           const ParamVector& global_params, const Minibatch& batch,
                           const TrainerConfig& config, double lambda, Rng& rng);

// local_epochs passes of shuffled mini-batches over the task's training
// split. The proximal weight is resolved once per round: dynamic for fedmes
// variants, fixed for ditto, zero for fedavg/fedagem. Returns the updated
// parameters (the vector the client uploads). Appends one record per step to
// *diagnostics when provided.
ParamVector run_local_round(const Objective& objective, ClientState& client,
                            const ParamVector& global_params, const TaskDataset& task_data,
                            const TrainerConfig& config, std::uint64_t seed,
                            std::vector<StepDiagnostics>* diagnostics = nullptr);

// The proximal weight run_local_round would use for this round.
double resolve_lambda(const Objective& objective, const ParamVector& global_params,
                      const TaskDataset& task_data, const TrainerConfig& config);

}  // namespace fedmes
