#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tsdn/checkpoint.hpp"
#include "tsdn/data.hpp"
#include "tsdn/gradcheck.hpp"
#include "tsdn/metrics.hpp"
#include "tsdn/network.hpp"
#include "tsdn/trainer.hpp"

namespace {

using namespace tsdn;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

struct TrainCli {
    std::string config_file;
    std::string data_dir;
    std::string out_ckpt;
    std::string resume;
    std::string log_path;
    bool color = false;
    double sigma_min = 0.0;
    double sigma_max = 50.0;
    std::uint64_t iters = 500000;
    std::uint64_t seed = 0;
    std::string loss = "mse";
    int batch = 4;
    int patch = 128;
    double lr = 0.0;  // 0: pick the regime default below
    std::string schedule;
    double lr_min = 1e-6;
    int k = 5;
    int m = 2;
    int width = 64;
    int growth = 32;
    int ratio = 8;
    std::string policy = "double";
    std::uint64_t checkpoint_every = 10000;
    std::uint64_t log_every = 100;
};

// Flat key=value config file ('#' comments allowed). Keys mirror the train
// flags; values from the command line take precedence.
void apply_config_file(TrainCli& t, const CLI::App& cmd) {
    std::ifstream in(t.config_file);
    if (!in) throw IoError("cannot open config file " + t.config_file);
    const auto explicit_flag = [&cmd](const std::string& name) {
        return cmd.count(name) > 0;
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw Error(t.config_file + ":" + std::to_string(lineno) +
                        ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        const auto set_u64 = [&](std::uint64_t& field) { field = std::stoull(value); };
        const auto set_int = [&](int& field) { field = std::stoi(value); };
        const auto set_double = [&](double& field) { field = std::stod(value); };

        if (key == "data") {
            if (!explicit_flag("--data")) t.data_dir = value;
        } else if (key == "out") {
            if (!explicit_flag("--out")) t.out_ckpt = value;
        } else if (key == "color") {
            if (!explicit_flag("--color") && !explicit_flag("--gray"))
                t.color = (value == "1" || value == "true");
        } else if (key == "sigma-min") {
            if (!explicit_flag("--sigma-min")) set_double(t.sigma_min);
        } else if (key == "sigma-max") {
            if (!explicit_flag("--sigma-max")) set_double(t.sigma_max);
        } else if (key == "iters") {
            if (!explicit_flag("--iters")) set_u64(t.iters);
        } else if (key == "seed") {
            if (!explicit_flag("--seed")) set_u64(t.seed);
        } else if (key == "loss") {
            if (!explicit_flag("--loss")) t.loss = value;
        } else if (key == "batch") {
            if (!explicit_flag("--batch")) set_int(t.batch);
        } else if (key == "patch") {
            if (!explicit_flag("--patch")) set_int(t.patch);
        } else if (key == "lr") {
            if (!explicit_flag("--lr")) set_double(t.lr);
        } else if (key == "schedule") {
            if (!explicit_flag("--schedule")) t.schedule = value;
        } else if (key == "lr-min") {
            if (!explicit_flag("--lr-min")) set_double(t.lr_min);
        } else if (key == "k") {
            if (!explicit_flag("--k")) set_int(t.k);
        } else if (key == "m") {
            if (!explicit_flag("--m")) set_int(t.m);
        } else if (key == "width") {
            if (!explicit_flag("--width")) set_int(t.width);
        } else if (key == "growth") {
            if (!explicit_flag("--growth")) set_int(t.growth);
        } else if (key == "ratio") {
            if (!explicit_flag("--ratio")) set_int(t.ratio);
        } else if (key == "policy") {
            if (!explicit_flag("--policy")) t.policy = value;
        } else if (key == "checkpoint-every") {
            if (!explicit_flag("--checkpoint-every")) set_u64(t.checkpoint_every);
        } else if (key == "log-every") {
            if (!explicit_flag("--log-every")) set_u64(t.log_every);
        } else if (key == "log") {
            if (!explicit_flag("--log")) t.log_path = value;
        } else if (key == "resume") {
            if (!explicit_flag("--resume")) t.resume = value;
        } else {
            throw Error(t.config_file + ":" + std::to_string(lineno) + ": unknown key '" +
                        key + "'");
        }
    }
}

int cmd_train(const TrainCli& a) {
    ModelConfig mcfg;
    mcfg.modules_per_stage = a.k;
    mcfg.sampling_pairs = a.m;
    mcfg.base_width = a.width;
    mcfg.growth = a.growth;
    mcfg.attention_ratio = a.ratio;
    mcfg.image_channels = a.color ? 3 : 1;
    if (a.policy == "constant")
        mcfg.scale_policy = ScalePolicy::Constant;
    else if (a.policy != "double")
        throw ShapeError("train: unknown --policy '" + a.policy + "'");

    TrainConfig tcfg;
    tcfg.total_iterations = a.iters;
    tcfg.seed = a.seed;
    tcfg.checkpoint_every = a.checkpoint_every;
    tcfg.log_every = a.log_every;
    if (a.loss == "mse") {
        tcfg.loss.mode = LossMode::Mse;
    } else if (a.loss == "charbonnier") {
        tcfg.loss.mode = LossMode::CharbonnierEdge;
    } else {
        throw ShapeError("train: unknown --loss '" + a.loss + "'");
    }
    // Regime defaults: MSE trains at 1e-4 with step halving, the
    // Charbonnier+edge regime at 2e-4 with cosine annealing to 1e-6.
    const bool charb = tcfg.loss.mode == LossMode::CharbonnierEdge;
    tcfg.lr_init = a.lr > 0 ? a.lr : (charb ? 2e-4 : 1e-4);
    std::string sched = a.schedule.empty() ? (charb ? "cosine" : "step") : a.schedule;
    if (sched == "step")
        tcfg.schedule = LrSchedule::StepHalving;
    else if (sched == "cosine")
        tcfg.schedule = LrSchedule::Cosine;
    else
        throw ShapeError("train: unknown --schedule '" + sched + "'");
    tcfg.lr_min = a.lr_min;
    tcfg.step_period = std::min<std::uint64_t>(100000, tcfg.total_iterations);
    tcfg.validate();

    StreamConfig scfg;
    scfg.patch = a.patch;
    scfg.batch = a.batch;
    scfg.channels = mcfg.image_channels;
    scfg.noise = NoiseSpec{a.sigma_min, a.sigma_max};
    scfg.seed = a.seed;

    ModelParams<float> params;
    AdamState<float> adam;
    std::uint64_t start_iteration = 0;
    if (!a.resume.empty()) {
        const Checkpoint ckpt = load_checkpoint(a.resume);
        params = restore_model(ckpt);
        adam = restore_adam(ckpt, params);
        start_iteration = ckpt.iteration;
        scfg.channels = ckpt.config.image_channels;
        scfg.seed = ckpt.rng_seed;
        tcfg.seed = ckpt.rng_seed;
        std::printf("resuming from %s at iteration %" PRIu64 "\n", a.resume.c_str(),
                    start_iteration);
    } else {
        params = build<float>(mcfg, a.seed);
        adam = make_adam_state(params);
    }

    TrainingStream stream(a.data_dir, scfg);
    stream.seek(start_iteration);
    std::printf("training on %zu images, %" PRIu64 " iterations, %lld parameters\n",
                stream.file_count(), tcfg.total_iterations,
                static_cast<long long>(param_count(params)));

    const std::string log_path = a.log_path.empty() ? a.out_ckpt + ".log" : a.log_path;
    TrainResult result = train(params, adam, stream, tcfg, a.out_ckpt, log_path,
                               [&tcfg](std::uint64_t it, double loss, double lr) {
                                   if (it % tcfg.log_every == 0)
                                       std::printf("iter %" PRIu64 "  loss %.6g  lr %.3g\n",
                                                   it, loss, lr);
                                   return true;
                               });
    std::printf("done: %" PRIu64 " iterations, final loss %.6g, checkpoint %s\n",
                result.iterations_run, result.final_loss, a.out_ckpt.c_str());
    return kExitOk;
}

int cmd_denoise(const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path, bool save_stage1) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const ModelParams<float> params = restore_model(ckpt);
    const Image input = load_image(in_path);
    if (input.channels != params.config.image_channels)
        throw ShapeError("denoise: model expects " +
                         std::to_string(params.config.image_channels) +
                         "-channel images, " + in_path + " has " +
                         std::to_string(input.channels));
    const Tensor<float> y = to_tensor<float>(input);
    auto [x1, x2] = forward(params, y);
    save_image(from_tensor(x2), out_path);
    if (save_stage1) {
        std::filesystem::path p(out_path);
        const std::string stage1_path =
            (p.parent_path() / (p.stem().string() + ".stage1" + p.extension().string()))
                .string();
        save_image(from_tensor(x1), stage1_path);
        std::printf("wrote %s and %s\n", out_path.c_str(), stage1_path.c_str());
    } else {
        std::printf("wrote %s\n", out_path.c_str());
    }
    return kExitOk;
}

int cmd_add_noise(const std::string& in_path, const std::string& out_path, double sigma,
                  std::uint64_t seed) {
    const Image input = load_image(in_path);
    Rng rng(seed);
    save_image(add_awgn(input, sigma, rng), out_path);
    std::printf("wrote %s (sigma %.3g)\n", out_path.c_str(), sigma);
    return kExitOk;
}

int cmd_eval(const std::string& denoised, const std::string& reference,
             const std::string& report_path) {
    const MetricReport report = evaluate_dir(denoised, reference);
    const std::string text = format_report(report);
    std::fputs(text.c_str(), stdout);
    if (!report_path.empty()) write_report(report, report_path);
    return kExitOk;
}

int cmd_gradcheck() {
    const auto reports = run_gradcheck_suite();
    bool ok = true;
    for (const auto& r : reports) {
        std::printf("%-32s max rel err %.3e\n", r.name.c_str(), r.max_rel_err);
        ok = ok && r.max_rel_err < 1e-4;
    }
    std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
    return ok ? kExitOk : kExitNumeric;
}

int cmd_info(const std::string& ckpt_path) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    long long count = 0;
    for (const auto& arr : ckpt.params) count += arr.shape.numel();
    const ModelConfig& c = ckpt.config;
    std::printf("checkpoint:        %s\n", ckpt_path.c_str());
    std::printf("modules_per_stage: %d\n", c.modules_per_stage);
    std::printf("sampling_pairs:    %d\n", c.sampling_pairs);
    std::printf("base_width:        %d\n", c.base_width);
    std::printf("image_channels:    %d\n", c.image_channels);
    std::printf("growth:            %d\n", c.growth);
    std::printf("attention_ratio:   %d\n", c.attention_ratio);
    std::printf("scale_policy:      %s\n",
                c.scale_policy == ScalePolicy::Double ? "double" : "constant");
    std::printf("dilations:         ");
    for (std::size_t i = 0; i < c.dilations.size(); ++i)
        std::printf("%d%s", c.dilations[i], i + 1 < c.dilations.size() ? "," : "\n");
    std::printf("param_count:       %lld\n", count);
    std::printf("iteration:         %" PRIu64 "\n", ckpt.iteration);
    std::printf("optimizer_state:   %s\n", ckpt.has_optimizer ? "yes" : "no");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage residual dense attention denoiser"};
    app.require_subcommand(1);

    TrainCli t;
    CLI::App* train_cmd = app.add_subcommand("train", "Train a denoising model");
    train_cmd->add_option("--config", t.config_file,
                          "Flat key=value config file; flags override");
    train_cmd->add_option("--data", t.data_dir, "Directory of training images");
    train_cmd->add_option("--out", t.out_ckpt, "Output checkpoint path");
    auto* gray = train_cmd->add_flag("--gray", "Grayscale model (default)");
    train_cmd->add_flag("--color", t.color, "Color model")->excludes(gray);
    train_cmd->add_option("--sigma-min", t.sigma_min, "Min noise level (0-255 scale)");
    train_cmd->add_option("--sigma-max", t.sigma_max, "Max noise level (0-255 scale)");
    train_cmd->add_option("--iters", t.iters, "Total iterations");
    train_cmd->add_option("--seed", t.seed, "Random seed");
    train_cmd->add_option("--loss", t.loss, "Loss mode: mse | charbonnier");
    train_cmd->add_option("--batch", t.batch, "Batch size");
    train_cmd->add_option("--patch", t.patch, "Patch size");
    train_cmd->add_option("--lr", t.lr, "Initial learning rate (default per loss mode)");
    train_cmd->add_option("--schedule", t.schedule, "step | cosine (default per loss mode)");
    train_cmd->add_option("--lr-min", t.lr_min, "Cosine floor");
    train_cmd->add_option("--k", t.k, "Attention modules per stage");
    train_cmd->add_option("--m", t.m, "Down/upsampling pairs in stage 1");
    train_cmd->add_option("--width", t.width, "Base feature width");
    train_cmd->add_option("--growth", t.growth, "Dense block growth rate");
    train_cmd->add_option("--ratio", t.ratio, "Channel attention reduction ratio");
    train_cmd->add_option("--policy", t.policy,
                          "Channel policy across scales: double | constant");
    train_cmd->add_option("--checkpoint-every", t.checkpoint_every, "Checkpoint interval");
    train_cmd->add_option("--log-every", t.log_every, "Log interval");
    train_cmd->add_option("--log", t.log_path, "Training log path (default <out>.log)");
    train_cmd->add_option("--resume", t.resume, "Resume from checkpoint");

    std::string dn_ckpt, dn_in, dn_out;
    bool dn_stage1 = false;
    CLI::App* denoise_cmd = app.add_subcommand("denoise", "Denoise one image");
    denoise_cmd->add_option("--ckpt", dn_ckpt, "Checkpoint path")->required();
    denoise_cmd->add_option("--in", dn_in, "Input image")->required();
    denoise_cmd->add_option("--out", dn_out, "Output image")->required();
    denoise_cmd->add_flag("--save-stage1", dn_stage1, "Also write the stage-1 estimate");

    std::string an_in, an_out;
    double an_sigma = 25.0;
    std::uint64_t an_seed = 0;
    CLI::App* addnoise_cmd = app.add_subcommand("add-noise", "Add Gaussian noise to an image");
    addnoise_cmd->add_option("--in", an_in, "Input image")->required();
    addnoise_cmd->add_option("--out", an_out, "Output image")->required();
    addnoise_cmd->add_option("--sigma", an_sigma, "Noise std on the 0-255 scale")->required();
    addnoise_cmd->add_option("--seed", an_seed, "Random seed");

    std::string ev_den, ev_ref, ev_report;
    CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM over paired directories");
    eval_cmd->add_option("--denoised", ev_den, "Denoised image directory")->required();
    eval_cmd->add_option("--reference", ev_ref, "Reference image directory")->required();
    eval_cmd->add_option("--report", ev_report, "CSV report path");

    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "Finite-difference check of every op");

    std::string info_ckpt;
    CLI::App* info_cmd = app.add_subcommand("info", "Describe a checkpoint");
    info_cmd->add_option("--ckpt", info_ckpt, "Checkpoint path")->required();

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) {
            if (!t.config_file.empty()) apply_config_file(t, *train_cmd);
            if (t.data_dir.empty())
                throw CLI::RequiredError("--data (flag or config file)");
            if (t.out_ckpt.empty())
                throw CLI::RequiredError("--out (flag or config file)");
            return cmd_train(t);
        }
        if (denoise_cmd->parsed()) return cmd_denoise(dn_ckpt, dn_in, dn_out, dn_stage1);
        if (addnoise_cmd->parsed()) return cmd_add_noise(an_in, an_out, an_sigma, an_seed);
        if (eval_cmd->parsed()) return cmd_eval(ev_den, ev_ref, ev_report);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck();
        if (info_cmd->parsed()) return cmd_info(info_ckpt);
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
}
