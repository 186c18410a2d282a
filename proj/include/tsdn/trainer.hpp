#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "tsdn/checkpoint.hpp"
#include "tsdn/data.hpp"
#include "tsdn/losses.hpp"
#include "tsdn/network.hpp"

namespace tsdn {

enum class LrSchedule { StepHalving, Cosine };

struct TrainConfig {
    std::uint64_t total_iterations = 500000;
    double lr_init = 1e-4;           // 2e-4 for the real-noise (cosine) regime
    LrSchedule schedule = LrSchedule::StepHalving;
    std::uint64_t step_period = 100000;
    double lr_min = 1e-6;            // cosine floor
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    LossConfig loss;
    std::uint64_t checkpoint_every = 10000;
    std::uint64_t log_every = 100;

    void validate() const {
        if (total_iterations < 1) throw ShapeError("train config: total_iterations must be >= 1");
        if (lr_init <= 0 || lr_min <= 0 || adam_eps <= 0)
            throw ShapeError("train config: rates must be positive");
        if (schedule == LrSchedule::StepHalving && step_period > total_iterations)
            throw ShapeError("train config: step period exceeds total iterations");
        if (schedule == LrSchedule::StepHalving && step_period < 1)
            throw ShapeError("train config: step period must be >= 1");
        loss.validate();
    }
};

// Learning rate at an iteration. Step: lr_init * 0.5^floor(it/period).
// Cosine: lr_min + 0.5*(lr_init - lr_min)*(1 + cos(pi*it/T)), clamped at T.
double lr_at(const TrainConfig& cfg, std::uint64_t iteration);

// One bias-corrected Adam update over all parameters; grads are read from the
// parameters' grad buffers. Increments state.t.
template <typename S>
void adam_step(ModelParams<S>& params, AdamState<S>& state, S lr, S beta1, S beta2, S eps) {
    std::size_t count = 0;
    for_each_param(params, [&count](const std::string&, const Tensor<S>&) { ++count; });
    if (state.m.size() != count || state.v.size() != count)
        throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) +
                         " moment arrays for " + std::to_string(count) + " parameters");
    state.t += 1;
    const S bc1 = S(1) - std::pow(beta1, S(state.t));
    const S bc2 = S(1) - std::pow(beta2, S(state.t));
    std::size_t i = 0;
    for_each_param(params, [&](const std::string& name, Tensor<S>& p) {
        if (!p.grad)
            throw ShapeError("adam_step: parameter " + name + " has no gradient buffer");
        if (state.m[i].size() != p.numel())
            throw ShapeError("adam_step: moment shape mismatch for " + name);
        auto& m = state.m[i];
        auto& v = state.v[i];
        const ArrayX<S>& g = *p.grad;
        m = beta1 * m + (S(1) - beta1) * g;
        v = beta2 * v + (S(1) - beta2) * g.square();
        p.array() -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
        ++i;
    });
}

struct TrainResult {
    std::uint64_t iterations_run = 0;
    double final_loss = 0;
};

// Per-iteration hook (iteration, loss, lr); return false to stop early.
using TrainHook = std::function<bool(std::uint64_t, double, double)>;

// Runs the optimization loop from the stream's current position until
// cfg.total_iterations, appending "iteration,loss,lr" records to log_path
// (empty = no log) and checkpointing to ckpt_path every checkpoint_every
// iterations and at the end (empty = no checkpoints). A non-finite loss
// aborts with NumericError naming the iteration.
TrainResult train(ModelParams<float>& params, AdamState<float>& adam, TrainingStream& stream,
                  const TrainConfig& cfg, const std::string& ckpt_path,
                  const std::string& log_path, const TrainHook& hook = nullptr);

}  // namespace tsdn
