#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsdn/network.hpp"

namespace tsdn {

// Adam moment accumulators, aligned with the model's parameter order.
template <typename S>
struct AdamState {
    std::vector<ArrayX<S>> m;
    std::vector<ArrayX<S>> v;
    std::uint64_t t = 0;
};

template <typename S>
AdamState<S> make_adam_state(const ModelParams<S>& params) {
    AdamState<S> st;
    for_each_param(params, [&st](const std::string&, const Tensor<S>& p) {
        st.m.push_back(ArrayX<S>::Zero(p.numel()));
        st.v.push_back(ArrayX<S>::Zero(p.numel()));
    });
    return st;
}

// Versioned binary snapshot: model config, named float32 parameter arrays
// with shape headers, optional optimizer state, iteration counter, rng seed.
// All integers and floats are little-endian; round-trips are bit-exact.
struct Checkpoint {
    static constexpr char kMagic[4] = {'T', 'S', 'D', 'N'};
    static constexpr std::uint32_t kVersion = 1;

    struct NamedArray {
        std::string name;
        Shape4 shape;
        std::vector<float> values;
    };

    ModelConfig config;
    std::uint64_t iteration = 0;
    std::uint64_t rng_seed = 0;
    std::vector<NamedArray> params;
    bool has_optimizer = false;
    std::uint64_t adam_t = 0;
    std::vector<std::vector<float>> adam_m;
    std::vector<std::vector<float>> adam_v;
};

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const AdamState<float>* adam, std::uint64_t iteration,
                     std::uint64_t rng_seed);

Checkpoint load_checkpoint(const std::string& path);

// Rebuilds live model parameters (and optimizer state if present) from a
// loaded checkpoint; validates names and shapes against the config.
ModelParams<float> restore_model(const Checkpoint& ckpt);
AdamState<float> restore_adam(const Checkpoint& ckpt, const ModelParams<float>& params);

}  // namespace tsdn
