#include "tsdn/trainer.hpp"

#include <cmath>
#include <fstream>

namespace tsdn {

double lr_at(const TrainConfig& cfg, std::uint64_t iteration) {
    if (cfg.schedule == LrSchedule::StepHalving) {
        const std::uint64_t halvings = iteration / cfg.step_period;
        return cfg.lr_init * std::pow(0.5, static_cast<double>(halvings));
    }
    const double t = std::min<double>(static_cast<double>(iteration),
                                      static_cast<double>(cfg.total_iterations));
    const double phase = t / static_cast<double>(cfg.total_iterations);
    constexpr double pi = 3.14159265358979323846;
    return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + std::cos(pi * phase));
}

TrainResult train(ModelParams<float>& params, AdamState<float>& adam, TrainingStream& stream,
                  const TrainConfig& cfg, const std::string& ckpt_path,
                  const std::string& log_path, const TrainHook& hook) {
    cfg.validate();
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::app);
        if (!log) throw IoError("cannot write " + log_path);
    }

    TrainResult result;
    for (std::uint64_t it = stream.iteration(); it < cfg.total_iterations; ++it) {
        TrainingStream::Batch batch = stream.next();

        GradTape<float> tape;
        attach(params, tape);
        auto [x1, x2] = forward(params, batch.noisy);
        Tensor<float> loss = total_loss(x1, x2, batch.clean, cfg.loss);
        const double loss_v = loss.item();
        if (!std::isfinite(loss_v)) {
            detach(params);
            throw NumericError("train: non-finite loss at iteration " + std::to_string(it));
        }
        zero_grad(params);
        backward(loss);
        detach(params);

        const double lr = lr_at(cfg, it);
        adam_step<float>(params, adam, static_cast<float>(lr), static_cast<float>(cfg.beta1),
                         static_cast<float>(cfg.beta2), static_cast<float>(cfg.adam_eps));

        result.iterations_run += 1;
        result.final_loss = loss_v;
        const std::uint64_t done = it + 1;
        if (log.is_open() && (done % cfg.log_every == 0 || done == cfg.total_iterations))
            log << done << "," << loss_v << "," << lr << "\n" << std::flush;
        if (!ckpt_path.empty() &&
            (done % cfg.checkpoint_every == 0 || done == cfg.total_iterations))
            save_checkpoint(ckpt_path, params, &adam, done, cfg.seed);
        if (hook && !hook(done, loss_v, lr)) break;
    }
    return result;
}

}  // namespace tsdn
