#pragma once

#include <cmath>

#include "tsdn/conv.hpp"
#include "tsdn/tensor.hpp"

namespace tsdn {

enum class LossMode { Mse, CharbonnierEdge };

struct LossConfig {
    LossMode mode = LossMode::Mse;
    double epsilon = 1e-3;
    double lambda_edge = 0.1;

    void validate() const {
        if (epsilon <= 0) throw ShapeError("loss config: epsilon must be > 0");
        if (lambda_edge < 0) throw ShapeError("loss config: lambda_edge must be >= 0");
    }
};

// Mean of (x - gt)^2 over batch and elements, as a (1,1,1,1) scalar.
// Gradient w.r.t. x is 2(x - gt)/numel.
template <typename S>
Tensor<S> mse_loss(const Tensor<S>& x, const Tensor<S>& gt) {
    if (x.shape != gt.shape)
        throw ShapeError("mse_loss: shape mismatch " + x.shape.str() + " vs " +
                         gt.shape.str());
    Tensor<S> out(Shape4{1, 1, 1, 1});
    const Index n = x.numel();
    (*out.data)[0] = (x.array() - gt.array()).square().sum() / S(n);
    out.requires_grad = x.requires_grad || gt.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x, &gt})) {
        tape->record(out, [xd = x.data, gd = gt.data, gx = x.grad, gg = gt.grad,
                           n](const ArrayX<S>& g) {
            const ArrayX<S> d = (xd->array() - gd->array()) * (S(2) / S(n)) * g[0];
            if (gx) *gx += d;
            if (gg) *gg -= d;
        });
    }
    return out;
}

// Per-channel 3x3 Laplacian (4-neighbor kernel), reflect padding, shape
// preserved. Fixed weights, so gradients flow only to the input.
template <typename S>
Tensor<S> laplacian(const Tensor<S>& x) {
    const Index c = x.shape.c;
    ConvParams<S> p;
    p.weight = Tensor<S>(Shape4{c, c, 3, 3});
    p.bias = Tensor<S>(Shape4{1, c, 1, 1});
    p.pad_h = p.pad_w = 1;
    p.pad_mode = PadMode::Reflect;
    for (Index i = 0; i < c; ++i) {
        p.weight.at(i, i, 0, 1) = S(1);
        p.weight.at(i, i, 1, 0) = S(1);
        p.weight.at(i, i, 1, 1) = S(-4);
        p.weight.at(i, i, 1, 2) = S(1);
        p.weight.at(i, i, 2, 1) = S(1);
    }
    return conv2d(x, p);
}

// sqrt(sum_i d_i^2 + eps^2) per batch element, averaged over the batch.
// Smooth everywhere; equals eps exactly when x == gt.
template <typename S>
Tensor<S> charbonnier_dist(const Tensor<S>& x, const Tensor<S>& gt, S eps) {
    if (x.shape != gt.shape)
        throw ShapeError("charbonnier_dist: shape mismatch " + x.shape.str() + " vs " +
                         gt.shape.str());
    const Index nb = x.shape.n;
    const Index per = x.shape.c * x.shape.h * x.shape.w;
    Tensor<S> out(Shape4{1, 1, 1, 1});
    auto roots = std::make_shared<ArrayX<S>>(nb);
    S total = 0;
    for (Index n = 0; n < nb; ++n) {
        const S ss =
            (x.data->segment(n * per, per) - gt.data->segment(n * per, per)).square().sum();
        (*roots)[n] = std::sqrt(ss + eps * eps);
        total += (*roots)[n];
    }
    (*out.data)[0] = total / S(nb);
    out.requires_grad = x.requires_grad || gt.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x, &gt})) {
        tape->record(out, [xd = x.data, gd = gt.data, gx = x.grad, gg = gt.grad, roots, nb,
                           per](const ArrayX<S>& g) {
            for (Index n = 0; n < nb; ++n) {
                const S s = g[0] / (S(nb) * (*roots)[n]);
                const ArrayX<S> d =
                    (xd->segment(n * per, per) - gd->segment(n * per, per)) * s;
                if (gx) gx->segment(n * per, per) += d;
                if (gg) gg->segment(n * per, per) -= d;
            }
        });
    }
    return out;
}

// Charbonnier distance plus weighted Charbonnier distance between Laplacian
// responses: sqrt(|x-gt|^2 + eps^2) + lambda * sqrt(|Lap(x)-Lap(gt)|^2 + eps^2).
template <typename S>
Tensor<S> charbonnier_edge_loss(const Tensor<S>& x, const Tensor<S>& gt,
                                const LossConfig& cfg) {
    cfg.validate();
    const S eps = static_cast<S>(cfg.epsilon);
    Tensor<S> base = charbonnier_dist(x, gt, eps);
    Tensor<S> edge = charbonnier_dist(laplacian(x), laplacian(gt), eps);
    return add(base, scale(edge, static_cast<S>(cfg.lambda_edge)));
}

// Sum of the per-stage loss over both stage outputs in the configured mode.
template <typename S>
Tensor<S> total_loss(const Tensor<S>& x1, const Tensor<S>& x2, const Tensor<S>& gt,
                     const LossConfig& cfg) {
    if (cfg.mode == LossMode::Mse) return add(mse_loss(x1, gt), mse_loss(x2, gt));
    return add(charbonnier_edge_loss(x1, gt, cfg), charbonnier_edge_loss(x2, gt, cfg));
}

}  // namespace tsdn
