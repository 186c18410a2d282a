#pragma once

#include <array>
#include <vector>

#include "tsdn/conv.hpp"
#include "tsdn/tensor.hpp"

namespace tsdn {

inline constexpr int kDenseLayers = 8;

// Eight 3x3 conv+ReLU layers, each consuming the concatenation of the block
// input and every earlier layer output, fused back to the block width by a
// 1x1 conv. Layer i (1-based) sees width + (i-1)*growth input channels.
template <typename S>
struct DenseBlockParams {
    std::vector<ConvParams<S>> layers;  // kDenseLayers entries, out_ch = growth
    ConvParams<S> fusion;               // 1x1, width + 8*growth -> width
    Index growth = 0;

    Index width() const { return fusion.out_channels(); }
};

template <typename S>
DenseBlockParams<S> make_dense_block(Index width, Index growth, Rng& rng) {
    DenseBlockParams<S> p;
    p.growth = growth;
    p.layers.reserve(kDenseLayers);
    for (int i = 0; i < kDenseLayers; ++i)
        p.layers.push_back(make_conv<S>(growth, width + i * growth, 3, 3, rng,
                                        /*stride=*/1, /*dilation=*/1, /*padding=*/1));
    p.fusion = make_conv<S>(width, width + kDenseLayers * growth, 1, 1, rng);
    return p;
}

// Same wiring with per-layer dilation rates in [1,4]; padding tracks the rate
// so every inner layer preserves the spatial dims. Varying the rates avoids
// the gridding artifact of stacked equal-rate dilated convolutions.
template <typename S>
DenseBlockParams<S> make_hybrid_dense_block(Index width, Index growth,
                                            const std::array<int, kDenseLayers>& rates,
                                            Rng& rng) {
    for (int r : rates)
        if (r < 1 || r > 4)
            throw ShapeError("hybrid dense block: dilation rate " + std::to_string(r) +
                             " outside [1,4]");
    DenseBlockParams<S> p;
    p.growth = growth;
    p.layers.reserve(kDenseLayers);
    for (int i = 0; i < kDenseLayers; ++i)
        p.layers.push_back(make_conv<S>(growth, width + i * growth, 3, 3, rng,
                                        /*stride=*/1, rates[i], /*padding=*/rates[i]));
    p.fusion = make_conv<S>(width, width + kDenseLayers * growth, 1, 1, rng);
    return p;
}

template <typename S>
Tensor<S> dense_block(const Tensor<S>& x, const DenseBlockParams<S>& p) {
    if (x.shape.c != p.width())
        throw ShapeError("dense_block: input " + x.shape.str() + " vs block width " +
                         std::to_string(p.width()));
    Tensor<S> acc = x;
    for (const auto& layer : p.layers) {
        Tensor<S> y = relu(conv2d(acc, layer));
        acc = concat_channels<S>({acc, y});
    }
    return conv2d(acc, p.fusion);  // linear fusion, no activation
}

template <typename S>
Tensor<S> hybrid_dilated_dense_block(const Tensor<S>& x, const DenseBlockParams<S>& p) {
    return dense_block(x, p);
}

// ---------------------------------------------------------------------------
// Spatial attention: per-pixel gate from channel-pooled statistics.

template <typename S>
struct SpatialAttentionParams {
    ConvParams<S> conv;  // 7x7, 2 -> 1 channels, pad 3
};

template <typename S>
SpatialAttentionParams<S> make_spatial_attention(Rng& rng) {
    return SpatialAttentionParams<S>{make_conv<S>(1, 2, 7, 7, rng, 1, 1, 3)};
}

// sigmoid(conv7x7(concat(channel_mean, channel_max))), shape (N,1,H,W).
template <typename S>
Tensor<S> spatial_attention_map(const Tensor<S>& x, const SpatialAttentionParams<S>& p) {
    Tensor<S> pooled = concat_channels<S>({channel_mean(x), channel_max(x)});
    return sigmoid(conv2d(pooled, p.conv));
}

template <typename S>
Tensor<S> spatial_attention(const Tensor<S>& x, const SpatialAttentionParams<S>& p) {
    return mul_broadcast(x, spatial_attention_map(x, p));
}

// ---------------------------------------------------------------------------
// Channel attention: squeeze-excitation gate per channel.

template <typename S>
struct ChannelAttentionParams {
    ConvParams<S> reduce;  // 1x1, C -> C/ratio
    ConvParams<S> expand;  // 1x1, C/ratio -> C
    Index ratio = 8;
};

template <typename S>
ChannelAttentionParams<S> make_channel_attention(Index channels, Index ratio, Rng& rng) {
    if (ratio < 1 || channels % ratio != 0)
        throw ShapeError("channel attention: " + std::to_string(channels) +
                         " channels not divisible by ratio " + std::to_string(ratio));
    ChannelAttentionParams<S> p;
    p.ratio = ratio;
    p.reduce = make_conv<S>(channels / ratio, channels, 1, 1, rng);
    p.expand = make_conv<S>(channels, channels / ratio, 1, 1, rng);
    return p;
}

// sigmoid(expand(relu(reduce(gap(x))))), shape (N,C,1,1).
template <typename S>
Tensor<S> channel_attention_vector(const Tensor<S>& x, const ChannelAttentionParams<S>& p) {
    return sigmoid(conv2d(relu(conv2d(spatial_gap(x), p.reduce)), p.expand));
}

template <typename S>
Tensor<S> channel_attention(const Tensor<S>& x, const ChannelAttentionParams<S>& p) {
    return mul_broadcast(x, channel_attention_vector(x, p));
}

// ---------------------------------------------------------------------------
// Composite attention modules

// Residual dense attention module: SAB(DB(x)) + x.
template <typename S>
struct RdamParams {
    DenseBlockParams<S> db;
    SpatialAttentionParams<S> sab;
};

template <typename S>
RdamParams<S> make_rdam(Index width, Index growth, Rng& rng) {
    return RdamParams<S>{make_dense_block<S>(width, growth, rng),
                         make_spatial_attention<S>(rng)};
}

template <typename S>
Tensor<S> rdam(const Tensor<S>& x, const RdamParams<S>& p) {
    return add(spatial_attention(dense_block(x, p.db), p.sab), x);
}

// Hybrid dilated residual dense attention module: CAB(HDDB(x)) + x.
template <typename S>
struct HdrdamParams {
    DenseBlockParams<S> db;
    ChannelAttentionParams<S> cab;
};

template <typename S>
HdrdamParams<S> make_hdrdam(Index width, Index growth,
                            const std::array<int, kDenseLayers>& rates, Index ratio,
                            Rng& rng) {
    return HdrdamParams<S>{make_hybrid_dense_block<S>(width, growth, rates, rng),
                           make_channel_attention<S>(width, ratio, rng)};
}

template <typename S>
Tensor<S> hdrdam(const Tensor<S>& x, const HdrdamParams<S>& p) {
    return add(channel_attention(hybrid_dilated_dense_block(x, p.db), p.cab), x);
}

}  // namespace tsdn
