#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tsdn/blocks.hpp"

namespace tsdn {

enum class ScalePolicy { Double, Constant };

// Architecture hyperparameters. Defaults are the 5x5 two-pair configuration.
struct ModelConfig {
    int modules_per_stage = 5;  // k: RDAMs in stage 1, HDRDAMs in stage 2
    int sampling_pairs = 2;     // m: down/up pairs in stage 1
    int base_width = 64;        // C
    int image_channels = 1;     // 1 grayscale, 3 color
    int growth = 32;            // g: channels added per dense layer
    std::array<int, kDenseLayers> dilations = {1, 2, 3, 4, 4, 3, 2, 1};
    int attention_ratio = 8;    // rho, for channel attention
    ScalePolicy scale_policy = ScalePolicy::Double;

    void validate() const {
        if (modules_per_stage < 1)
            throw ShapeError("model config: modules_per_stage must be >= 1");
        if (sampling_pairs < 0) throw ShapeError("model config: sampling_pairs must be >= 0");
        if (modules_per_stage < 2 * sampling_pairs + 1)
            throw ShapeError("model config: need modules_per_stage >= 2*sampling_pairs + 1, got " +
                             std::to_string(modules_per_stage) + " vs " +
                             std::to_string(sampling_pairs) + " pairs");
        if (image_channels != 1 && image_channels != 3)
            throw ShapeError("model config: image_channels must be 1 or 3");
        if (base_width < 1 || growth < 1)
            throw ShapeError("model config: base_width and growth must be >= 1");
        if (attention_ratio < 1 || base_width % attention_ratio != 0)
            throw ShapeError("model config: base_width " + std::to_string(base_width) +
                             " not divisible by attention_ratio " +
                             std::to_string(attention_ratio));
        for (int r : dilations)
            if (r < 1 || r > 4)
                throw ShapeError("model config: dilation rate " + std::to_string(r) +
                                 " outside [1,4]");
    }

    Index width_at_scale(int s) const {
        return scale_policy == ScalePolicy::Double ? Index(base_width) << s
                                                   : Index(base_width);
    }
};

template <typename S>
struct ModelParams {
    ModelConfig config;
    ConvParams<S> head1, tail1, head2, tail2;  // 3x3 between image and feature width
    SpatialAttentionParams<S> sab0;
    ChannelAttentionParams<S> cab0;
    std::vector<RdamParams<S>> rdams;    // k modules, encoder/decoder order
    std::vector<ConvParams<S>> sconvs;   // m downsampling 2x2 stride-2 convs
    std::vector<ConvParams<S>> tconvs;   // m upsampling 2x2 stride-2 transposed convs
    std::vector<HdrdamParams<S>> hdrdams;  // k modules, flat chain
};

namespace detail {

// Scale (0 = full resolution) of each stage-1 RDAM: one at scale 0, one after
// each downsampling, any extra modules flat at the deepest scale, then one
// after each upsampling.
inline std::vector<int> stage1_scales(const ModelConfig& cfg) {
    std::vector<int> scales;
    scales.push_back(0);
    for (int j = 1; j <= cfg.sampling_pairs; ++j) scales.push_back(j);
    const int extra = cfg.modules_per_stage - (2 * cfg.sampling_pairs + 1);
    for (int e = 0; e < extra; ++e) scales.push_back(cfg.sampling_pairs);
    for (int j = cfg.sampling_pairs - 1; j >= 0; --j) scales.push_back(j);
    return scales;
}

}  // namespace detail

template <typename S>
ModelParams<S> build(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    ModelParams<S> p;
    p.config = config;
    const Index c0 = config.base_width;
    p.head1 = make_conv<S>(c0, config.image_channels, 3, 3, rng, 1, 1, 1);
    p.tail1 = make_conv<S>(config.image_channels, c0, 3, 3, rng, 1, 1, 1);
    p.head2 = make_conv<S>(c0, config.image_channels, 3, 3, rng, 1, 1, 1);
    p.tail2 = make_conv<S>(config.image_channels, c0, 3, 3, rng, 1, 1, 1);
    p.sab0 = make_spatial_attention<S>(rng);
    p.cab0 = make_channel_attention<S>(c0, config.attention_ratio, rng);

    for (int scale : detail::stage1_scales(config))
        p.rdams.push_back(make_rdam<S>(config.width_at_scale(scale), config.growth, rng));
    for (int j = 1; j <= config.sampling_pairs; ++j)
        p.sconvs.push_back(make_conv<S>(config.width_at_scale(j),
                                        config.width_at_scale(j - 1), 2, 2, rng,
                                        /*stride=*/2));
    for (int j = config.sampling_pairs; j >= 1; --j)
        p.tconvs.push_back(make_conv<S>(config.width_at_scale(j - 1),
                                        config.width_at_scale(j), 2, 2, rng,
                                        /*stride=*/2));
    for (int i = 0; i < config.modules_per_stage; ++i)
        p.hdrdams.push_back(make_hdrdam<S>(c0, config.growth, config.dilations,
                                           config.attention_ratio, rng));
    return p;
}

// ---------------------------------------------------------------------------
// Named parameter traversal. Fixed order: it defines the initialization
// stream, checkpoint layout, and optimizer-state alignment.

template <typename S, typename Fn>
void for_each_param_conv(ConvParams<S>& c, const std::string& prefix, Fn&& fn) {
    fn(prefix + ".weight", c.weight);
    fn(prefix + ".bias", c.bias);
}

template <typename S, typename Fn>
void for_each_param(ModelParams<S>& p, Fn&& fn) {
    for_each_param_conv(p.head1, "head1", fn);
    for_each_param_conv(p.tail1, "tail1", fn);
    for_each_param_conv(p.head2, "head2", fn);
    for_each_param_conv(p.tail2, "tail2", fn);
    for_each_param_conv(p.sab0.conv, "sab0.conv", fn);
    for_each_param_conv(p.cab0.reduce, "cab0.reduce", fn);
    for_each_param_conv(p.cab0.expand, "cab0.expand", fn);
    for (std::size_t i = 0; i < p.rdams.size(); ++i) {
        const std::string base = "rdam" + std::to_string(i);
        for (int l = 0; l < kDenseLayers; ++l)
            for_each_param_conv(p.rdams[i].db.layers[l],
                                base + ".db.layer" + std::to_string(l), fn);
        for_each_param_conv(p.rdams[i].db.fusion, base + ".db.fusion", fn);
        for_each_param_conv(p.rdams[i].sab.conv, base + ".sab.conv", fn);
    }
    for (std::size_t i = 0; i < p.sconvs.size(); ++i)
        for_each_param_conv(p.sconvs[i], "sconv" + std::to_string(i), fn);
    for (std::size_t i = 0; i < p.tconvs.size(); ++i)
        for_each_param_conv(p.tconvs[i], "tconv" + std::to_string(i), fn);
    for (std::size_t i = 0; i < p.hdrdams.size(); ++i) {
        const std::string base = "hdrdam" + std::to_string(i);
        for (int l = 0; l < kDenseLayers; ++l)
            for_each_param_conv(p.hdrdams[i].db.layers[l],
                                base + ".db.layer" + std::to_string(l), fn);
        for_each_param_conv(p.hdrdams[i].db.fusion, base + ".db.fusion", fn);
        for_each_param_conv(p.hdrdams[i].cab.reduce, base + ".cab.reduce", fn);
        for_each_param_conv(p.hdrdams[i].cab.expand, base + ".cab.expand", fn);
    }
}

template <typename S, typename Fn>
void for_each_param(const ModelParams<S>& p, Fn&& fn) {
    for_each_param(const_cast<ModelParams<S>&>(p),
                   [&fn](const std::string& name, Tensor<S>& t) {
                       fn(name, static_cast<const Tensor<S>&>(t));
                   });
}

template <typename S>
std::int64_t param_count(const ModelParams<S>& p) {
    std::int64_t count = 0;
    for_each_param(p, [&count](const std::string&, const Tensor<S>& t) { count += t.numel(); });
    return count;
}

template <typename S>
void attach(ModelParams<S>& p, GradTape<S>& tape) {
    for_each_param(p, [&tape](const std::string&, Tensor<S>& t) { tape.watch(t); });
}

template <typename S>
void detach(ModelParams<S>& p) {
    for_each_param(p, [](const std::string&, Tensor<S>& t) { t.tape = nullptr; });
}

template <typename S>
void zero_grad(ModelParams<S>& p) {
    for_each_param(p, [](const std::string&, Tensor<S>& t) {
        if (t.grad) t.grad->setZero();
    });
}

// ---------------------------------------------------------------------------
// Forward passes

// Stage 1: spatial-attention front, RDAM encoder-decoder with 2x2 sampling
// and symmetric skip additions, residual head connection into the tail conv.
// Requires spatial dims divisible by 2^m; returns (x1, last RDAM output).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> stage1_forward(const ModelParams<S>& p, const Tensor<S>& y) {
    const ModelConfig& cfg = p.config;
    const Index div = Index(1) << cfg.sampling_pairs;
    if (y.shape.h % div != 0 || y.shape.w % div != 0)
        throw ShapeError("stage1_forward: spatial dims of " + y.shape.str() +
                         " not divisible by " + std::to_string(div));

    Tensor<S> o_conv1 = conv2d(y, p.head1);
    Tensor<S> cur = rdam(spatial_attention(o_conv1, p.sab0), p.rdams[0]);

    const int m = cfg.sampling_pairs;
    std::vector<Tensor<S>> enc;  // per-scale outputs kept for the skip additions
    enc.push_back(cur);
    std::size_t module = 1;
    for (int j = 1; j <= m; ++j) {
        cur = rdam(conv2d(cur, p.sconvs[j - 1]), p.rdams[module++]);
        if (j < m) enc.push_back(cur);
    }
    const int extra = cfg.modules_per_stage - (2 * m + 1);
    for (int e = 0; e < extra; ++e) cur = rdam(cur, p.rdams[module++]);
    for (int j = m; j >= 1; --j) {
        cur = rdam(add(conv_transpose2d(cur, p.tconvs[m - j]), enc[j - 1]), p.rdams[module++]);
    }

    Tensor<S> x1 = conv2d(add(cur, o_conv1), p.tail1);
    return {x1, cur};
}

// Stage 2: channel-attention front, flat HDRDAM chain with symmetric skip
// additions, fed by the cross-stage feature map from stage 1.
template <typename S>
Tensor<S> stage2_forward(const ModelParams<S>& p, const Tensor<S>& y,
                         const Tensor<S>& o_rdam_last) {
    Tensor<S> o_conv2 = conv2d(y, p.head2);
    if (o_rdam_last.shape != o_conv2.shape)
        throw ShapeError("stage2_forward: cross-stage skip " + o_rdam_last.shape.str() +
                         " vs head features " + o_conv2.shape.str());

    const int k = p.config.modules_per_stage;
    std::vector<Tensor<S>> outs;
    outs.reserve(k);
    Tensor<S> cur = hdrdam(add(channel_attention(o_conv2, p.cab0), o_rdam_last),
                           p.hdrdams[0]);
    outs.push_back(cur);
    for (int i = 2; i <= k; ++i) {
        const int partner = k + 1 - i;  // symmetric skip source (1-based)
        Tensor<S> in = (partner >= 1 && partner <= i - 2)
                           ? add(cur, outs[partner - 1])
                           : cur;
        cur = hdrdam(in, p.hdrdams[i - 1]);
        outs.push_back(cur);
    }
    return conv2d(add(cur, o_conv2), p.tail2);
}

// Whole-model forward. Reflect-pads the input to a multiple of 2^m, runs both
// stages, and crops the outputs back, so any H,W >= 1 is accepted. x2 is the
// final denoised output; x1 is the stage-1 estimate.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> forward(const ModelParams<S>& p, const Tensor<S>& y) {
    if (y.shape.c != p.config.image_channels)
        throw ShapeError("forward: input " + y.shape.str() + " vs model expecting " +
                         std::to_string(p.config.image_channels) + " channels");
    const Index div = Index(1) << p.config.sampling_pairs;
    const Index ph = (div - y.shape.h % div) % div;
    const Index pw = (div - y.shape.w % div) % div;
    Tensor<S> yp = (ph > 0 || pw > 0) ? pad(y, 0, ph, 0, pw, PadMode::Reflect) : y;

    auto [x1p, o_last] = stage1_forward(p, yp);
    Tensor<S> x2p = stage2_forward(p, yp, o_last);
    if (ph > 0 || pw > 0) {
        return {crop(x1p, 0, 0, y.shape.h, y.shape.w),
                crop(x2p, 0, 0, y.shape.h, y.shape.w)};
    }
    return {x1p, x2p};
}

}  // namespace tsdn
