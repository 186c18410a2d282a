#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsdn/errors.hpp"

namespace tsdn {

using Index = Eigen::Index;

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

// (batch, channels, height, width), row-major within (C,H,W) per batch element.
struct Shape4 {
    Index n = 0;
    Index c = 0;
    Index h = 0;
    Index w = 0;

    Index numel() const { return n * c * h * w; }
    Index hw() const { return h * w; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

template <typename S>
class GradTape;

// Dense rank-4 tensor. A value handle: copies share the underlying buffers,
// matching how recorded operations reference their operands.
template <typename S>
struct Tensor {
    Shape4 shape{};
    std::shared_ptr<ArrayX<S>> data;
    std::shared_ptr<ArrayX<S>> grad;  // null until watched or recorded
    bool requires_grad = false;
    GradTape<S>* tape = nullptr;

    Tensor() = default;

    explicit Tensor(Shape4 s)
        : shape(s), data(std::make_shared<ArrayX<S>>(ArrayX<S>::Zero(s.numel()))) {
        check_shape(s);
    }

    Tensor(Shape4 s, std::vector<S> values) : shape(s) {
        check_shape(s);
        if (static_cast<Index>(values.size()) != s.numel())
            throw ShapeError("tensor init: " + std::to_string(values.size()) +
                             " values for shape " + s.str());
        data = std::make_shared<ArrayX<S>>(
            Eigen::Map<const ArrayX<S>>(values.data(), s.numel()));
    }

    static Tensor full(Shape4 s, S v) {
        Tensor t(s);
        t.array().setConstant(v);
        return t;
    }

    Index numel() const { return shape.numel(); }

    Eigen::Map<ArrayX<S>> array() { return {data->data(), data->size()}; }
    Eigen::Map<const ArrayX<S>> array() const { return {data->data(), data->size()}; }

    Index offset(Index n, Index c, Index h, Index w) const {
        return ((n * shape.c + c) * shape.h + h) * shape.w + w;
    }
    S& at(Index n, Index c, Index h, Index w) { return (*data)[offset(n, c, h, w)]; }
    S at(Index n, Index c, Index h, Index w) const { return (*data)[offset(n, c, h, w)]; }

    S item() const {
        if (numel() != 1) throw ShapeError("item(): tensor has shape " + shape.str());
        return (*data)[0];
    }

    bool all_finite() const {
        return array().isFinite().all();
    }

    // Detached deep copy (fresh buffers, no tape, no grad).
    Tensor clone() const {
        Tensor t(shape);
        t.array() = array();
        return t;
    }

  private:
    static void check_shape(Shape4 s) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw ShapeError("negative tensor dimension in " + s.str());
    }
};

// Ordered record of executed operations. backward() replays the record once,
// in exact reverse execution order, accumulating gradients into every watched
// leaf reachable from the loss.
template <typename S>
class GradTape {
  public:
    using BackwardFn = std::function<void(const ArrayX<S>&)>;

    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    // Registers a leaf (parameter or input) for gradient accumulation.
    // Leaf gradients persist across backward calls until explicitly zeroed.
    void watch(Tensor<S>& t) {
        if (t.tape != nullptr && t.tape != this)
            throw Error("watch: tensor already attached to a different tape");
        t.tape = this;
        t.requires_grad = true;
        if (!t.grad) t.grad = std::make_shared<ArrayX<S>>(ArrayX<S>::Zero(t.numel()));
    }

    // Called by ops after computing `out`. `fn` receives d(loss)/d(out) and
    // accumulates into the operands' grad buffers.
    void record(Tensor<S>& out, BackwardFn fn) {
        out.tape = this;
        out.grad = std::make_shared<ArrayX<S>>(ArrayX<S>::Zero(out.numel()));
        nodes_.push_back(Node{out.grad, std::move(fn)});
    }

    void backward_from(Tensor<S>& loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward: loss must be scalar, got " + loss.shape.str());
        if (!loss.grad)
            throw Error("backward: tensor is not attached to a tape");
        // Intermediate gradients are scoped to one backward pass; leaves keep theirs.
        for (auto& node : nodes_) node.out_grad->setZero();
        (*loss.grad)[0] = S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->backward) it->backward(*it->out_grad);
    }

    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

  private:
    struct Node {
        std::shared_ptr<ArrayX<S>> out_grad;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

template <typename S>
void backward(Tensor<S>& loss) {
    if (loss.tape == nullptr)
        throw Error("backward: tensor is not attached to a tape");
    loss.tape->backward_from(loss);
}

namespace detail {

template <typename S>
GradTape<S>* tape_of(std::initializer_list<const Tensor<S>*> ins) {
    GradTape<S>* tape = nullptr;
    for (const Tensor<S>* in : ins) {
        if (in->tape == nullptr) continue;
        if (tape == nullptr)
            tape = in->tape;
        else if (tape != in->tape)
            throw Error("operands recorded on different tapes");
    }
    return tape;
}

template <typename S>
bool any_requires(std::initializer_list<const Tensor<S>*> ins) {
    for (const Tensor<S>* in : ins)
        if (in->requires_grad) return true;
    return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    Tensor<S> out(x.shape);
    out.array() = x.array().max(S(0));
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [xd = x.data, gx = x.grad](const ArrayX<S>& g) {
            // Subgradient at exactly 0 is 0.
            if (gx) *gx += (xd->array() > S(0)).template cast<S>() * g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Tensor<S> out(x.shape);
    const ArrayX<S>& v = *x.data;
    ArrayX<S> e = (-v.abs()).exp();
    ArrayX<S> s = (v >= S(0)).select(S(1) / (S(1) + e), e / (S(1) + e));
    // Keep the output strictly inside (0,1) even at saturation.
    const S lo = std::numeric_limits<S>::min();
    const S hi = S(1) - std::numeric_limits<S>::epsilon() / S(2);
    out.array() = s.min(hi).max(lo);
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [od = out.data, gx = x.grad](const ArrayX<S>& g) {
            if (gx) *gx += od->array() * (S(1) - od->array()) * g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& x, const Tensor<S>& y) {
    if (x.shape != y.shape)
        throw ShapeError("add: shape mismatch " + x.shape.str() + " vs " + y.shape.str());
    Tensor<S> out(x.shape);
    out.array() = x.array() + y.array();
    out.requires_grad = x.requires_grad || y.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x, &y})) {
        tape->record(out, [gx = x.grad, gy = y.grad](const ArrayX<S>& g) {
            if (gx) *gx += g;
            if (gy) *gy += g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& x, const Tensor<S>& y) {
    return add(x, y);
}

// Elementwise product of same-shape tensors.
template <typename S>
Tensor<S> mul(const Tensor<S>& x, const Tensor<S>& y) {
    if (x.shape != y.shape)
        throw ShapeError("mul: shape mismatch " + x.shape.str() + " vs " + y.shape.str());
    Tensor<S> out(x.shape);
    out.array() = x.array() * y.array();
    out.requires_grad = x.requires_grad || y.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x, &y})) {
        tape->record(out, [xd = x.data, yd = y.data, gx = x.grad,
                           gy = y.grad](const ArrayX<S>& g) {
            if (gx) *gx += yd->array() * g;
            if (gy) *gy += xd->array() * g;
        });
    }
    return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S a) {
    Tensor<S> out(x.shape);
    out.array() = x.array() * a;
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [a, gx = x.grad](const ArrayX<S>& g) {
            if (gx) *gx += a * g;
        });
    }
    return out;
}

// Sum of all elements, as a (1,1,1,1) scalar.
template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    Tensor<S> out(Shape4{1, 1, 1, 1});
    (*out.data)[0] = x.array().sum();
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [gx = x.grad, n = x.numel()](const ArrayX<S>& g) {
            if (gx) *gx += ArrayX<S>::Constant(n, g[0]);
        });
    }
    return out;
}

// Broadcast multiply: `a` must be (N,1,H,W) (per-pixel gate) or (N,C,1,1)
// (per-channel gate) against x of shape (N,C,H,W).
template <typename S>
Tensor<S> mul_broadcast(const Tensor<S>& x, const Tensor<S>& a) {
    const Shape4 xs = x.shape;
    const Shape4 as = a.shape;
    const bool spatial = (as.n == xs.n && as.c == 1 && as.h == xs.h && as.w == xs.w);
    const bool channel = (as.n == xs.n && as.c == xs.c && as.h == 1 && as.w == 1);
    if (!spatial && !channel)
        throw ShapeError("mul_broadcast: gate " + as.str() + " incompatible with " + xs.str());

    Tensor<S> out(xs);
    const Index hw = xs.hw();
    for (Index n = 0; n < xs.n; ++n) {
        for (Index c = 0; c < xs.c; ++c) {
            const Index xoff = (n * xs.c + c) * hw;
            auto xseg = x.data->segment(xoff, hw);
            auto oseg = out.data->segment(xoff, hw);
            if (spatial)
                oseg = xseg * a.data->segment(n * hw, hw);
            else
                oseg = xseg * (*a.data)[n * xs.c + c];
        }
    }
    out.requires_grad = x.requires_grad || a.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x, &a})) {
        tape->record(out, [xd = x.data, ad = a.data, gx = x.grad, ga = a.grad, xs, spatial,
                           hw](const ArrayX<S>& g) {
            for (Index n = 0; n < xs.n; ++n) {
                for (Index c = 0; c < xs.c; ++c) {
                    const Index xoff = (n * xs.c + c) * hw;
                    auto gseg = g.segment(xoff, hw);
                    if (spatial) {
                        auto aseg = ad->segment(n * hw, hw);
                        if (gx) gx->segment(xoff, hw) += gseg * aseg;
                        // Broadcast axis (channels) sum-reduces into the gate grad.
                        if (ga) ga->segment(n * hw, hw) += gseg * xd->segment(xoff, hw);
                    } else {
                        const Index aoff = n * xs.c + c;
                        if (gx) gx->segment(xoff, hw) += gseg * (*ad)[aoff];
                        if (ga) (*ga)[aoff] += (gseg * xd->segment(xoff, hw)).sum();
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Concatenation along the channel axis

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape4 first = xs.front().shape;
    Index total_c = 0;
    for (const auto& x : xs) {
        if (x.shape.n != first.n || x.shape.h != first.h || x.shape.w != first.w)
            throw ShapeError("concat_channels: mismatch " + x.shape.str() + " vs " +
                             first.str());
        total_c += x.shape.c;
    }
    Tensor<S> out(Shape4{first.n, total_c, first.h, first.w});
    const Index hw = first.hw();
    Index c_base = 0;
    for (const auto& x : xs) {
        const Index block = x.shape.c * hw;
        for (Index n = 0; n < first.n; ++n)
            out.data->segment((n * total_c + c_base) * hw, block) =
                x.data->segment(n * block, block);
        c_base += x.shape.c;
    }

    GradTape<S>* tape = nullptr;
    bool needs_grad = false;
    for (const auto& x : xs) {
        needs_grad = needs_grad || x.requires_grad;
        if (x.tape) {
            if (tape && tape != x.tape) throw Error("operands recorded on different tapes");
            tape = x.tape;
        }
    }
    out.requires_grad = needs_grad;
    if (tape) {
        std::vector<std::shared_ptr<ArrayX<S>>> grads;
        std::vector<Index> chans;
        grads.reserve(xs.size());
        for (const auto& x : xs) {
            grads.push_back(x.grad);
            chans.push_back(x.shape.c);
        }
        tape->record(out, [grads, chans, nb = first.n, total_c, hw](const ArrayX<S>& g) {
            Index c_base = 0;
            for (std::size_t i = 0; i < grads.size(); ++i) {
                const Index block = chans[i] * hw;
                if (grads[i])
                    for (Index n = 0; n < nb; ++n)
                        grads[i]->segment(n * block, block) +=
                            g.segment((n * total_c + c_base) * hw, block);
                c_base += chans[i];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pooling-style reductions

// Mean over H*W per (n, c); output (N,C,1,1).
template <typename S>
Tensor<S> spatial_gap(const Tensor<S>& x) {
    const Shape4 xs = x.shape;
    Tensor<S> out(Shape4{xs.n, xs.c, 1, 1});
    const Index hw = xs.hw();
    for (Index i = 0; i < xs.n * xs.c; ++i)
        (*out.data)[i] = x.data->segment(i * hw, hw).mean();
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [gx = x.grad, nc = xs.n * xs.c, hw](const ArrayX<S>& g) {
            if (!gx) return;
            for (Index i = 0; i < nc; ++i)
                gx->segment(i * hw, hw) += ArrayX<S>::Constant(hw, g[i] / S(hw));
        });
    }
    return out;
}

// Mean over channels per pixel; output (N,1,H,W).
template <typename S>
Tensor<S> channel_mean(const Tensor<S>& x) {
    const Shape4 xs = x.shape;
    Tensor<S> out(Shape4{xs.n, 1, xs.h, xs.w});
    const Index hw = xs.hw();
    for (Index n = 0; n < xs.n; ++n) {
        auto oseg = out.data->segment(n * hw, hw);
        oseg.setZero();
        for (Index c = 0; c < xs.c; ++c) oseg += x.data->segment((n * xs.c + c) * hw, hw);
        oseg /= S(xs.c);
    }
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [gx = x.grad, xs, hw](const ArrayX<S>& g) {
            if (!gx) return;
            for (Index n = 0; n < xs.n; ++n)
                for (Index c = 0; c < xs.c; ++c)
                    gx->segment((n * xs.c + c) * hw, hw) += g.segment(n * hw, hw) / S(xs.c);
        });
    }
    return out;
}

// Max over channels per pixel; output (N,1,H,W). Gradient routes to the
// lowest channel index among tied maxima.
template <typename S>
Tensor<S> channel_max(const Tensor<S>& x) {
    const Shape4 xs = x.shape;
    Tensor<S> out(Shape4{xs.n, 1, xs.h, xs.w});
    const Index hw = xs.hw();
    auto winners = std::make_shared<std::vector<Index>>(xs.n * hw);
    for (Index n = 0; n < xs.n; ++n) {
        for (Index p = 0; p < hw; ++p) {
            Index best_c = 0;
            S best = (*x.data)[(n * xs.c) * hw + p];
            for (Index c = 1; c < xs.c; ++c) {
                const S v = (*x.data)[(n * xs.c + c) * hw + p];
                if (v > best) {
                    best = v;
                    best_c = c;
                }
            }
            (*out.data)[n * hw + p] = best;
            (*winners)[n * hw + p] = best_c;
        }
    }
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [gx = x.grad, winners, xs, hw](const ArrayX<S>& g) {
            if (!gx) return;
            for (Index n = 0; n < xs.n; ++n)
                for (Index p = 0; p < hw; ++p)
                    (*gx)[(n * xs.c + (*winners)[n * hw + p]) * hw + p] += g[n * hw + p];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Padding and cropping

enum class PadMode { Zero, Reflect };

namespace detail {

// Reflect-101 index folding: maps any integer onto [0, n), mirroring at the
// borders without repeating the edge sample. Degenerates to clamping for n=1,
// so arbitrarily large pads stay well defined on tiny images.
inline Index reflect_index(Index i, Index n) {
    if (n == 1) return 0;
    const Index period = 2 * (n - 1);
    Index m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

}  // namespace detail

template <typename S>
Tensor<S> pad(const Tensor<S>& x, Index top, Index bottom, Index left, Index right,
              PadMode mode) {
    if (top < 0 || bottom < 0 || left < 0 || right < 0)
        throw ShapeError("pad: negative padding");
    const Shape4 xs = x.shape;
    const Shape4 os{xs.n, xs.c, xs.h + top + bottom, xs.w + left + right};
    Tensor<S> out(os);
    for (Index n = 0; n < xs.n; ++n) {
        for (Index c = 0; c < xs.c; ++c) {
            for (Index h = 0; h < os.h; ++h) {
                const Index sh = h - top;
                if (mode == PadMode::Zero && (sh < 0 || sh >= xs.h)) continue;
                const Index fh = mode == PadMode::Zero ? sh : detail::reflect_index(sh, xs.h);
                for (Index w = 0; w < os.w; ++w) {
                    const Index sw = w - left;
                    if (mode == PadMode::Zero && (sw < 0 || sw >= xs.w)) continue;
                    const Index fw =
                        mode == PadMode::Zero ? sw : detail::reflect_index(sw, xs.w);
                    out.at(n, c, h, w) = x.at(n, c, fh, fw);
                }
            }
        }
    }
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [gx = x.grad, xs, os, top, left, mode](const ArrayX<S>& g) {
            if (!gx) return;
            for (Index n = 0; n < xs.n; ++n) {
                for (Index c = 0; c < xs.c; ++c) {
                    for (Index h = 0; h < os.h; ++h) {
                        const Index sh = h - top;
                        if (mode == PadMode::Zero && (sh < 0 || sh >= xs.h)) continue;
                        const Index fh =
                            mode == PadMode::Zero ? sh : detail::reflect_index(sh, xs.h);
                        for (Index w = 0; w < os.w; ++w) {
                            const Index sw = w - left;
                            if (mode == PadMode::Zero && (sw < 0 || sw >= xs.w)) continue;
                            const Index fw =
                                mode == PadMode::Zero ? sw : detail::reflect_index(sw, xs.w);
                            (*gx)[((n * xs.c + c) * xs.h + fh) * xs.w + fw] +=
                                g[((n * os.c + c) * os.h + h) * os.w + w];
                        }
                    }
                }
            }
        });
    }
    return out;
}

template <typename S>
Tensor<S> crop(const Tensor<S>& x, Index top, Index left, Index height, Index width) {
    const Shape4 xs = x.shape;
    if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > xs.h ||
        left + width > xs.w)
        throw ShapeError("crop: window " + std::to_string(top) + "+" + std::to_string(height) +
                         " x " + std::to_string(left) + "+" + std::to_string(width) +
                         " outside " + xs.str());
    const Shape4 os{xs.n, xs.c, height, width};
    Tensor<S> out(os);
    for (Index n = 0; n < xs.n; ++n)
        for (Index c = 0; c < xs.c; ++c)
            for (Index h = 0; h < height; ++h)
                out.data->segment(((n * os.c + c) * os.h + h) * os.w, width) =
                    x.data->segment(((n * xs.c + c) * xs.h + top + h) * xs.w + left, width);
    out.requires_grad = x.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x})) {
        tape->record(out, [gx = x.grad, xs, os, top, left](const ArrayX<S>& g) {
            if (!gx) return;
            for (Index n = 0; n < xs.n; ++n)
                for (Index c = 0; c < xs.c; ++c)
                    for (Index h = 0; h < os.h; ++h)
                        gx->segment(((n * xs.c + c) * xs.h + top + h) * xs.w + left, os.w) +=
                            g.segment(((n * os.c + c) * os.h + h) * os.w, os.w);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

// Central differences of a scalar function, step h scaled per element by
// max(1, |x_i|). Independent of the tape machinery by construction.
template <typename S>
Tensor<S> finite_diff_grad(const std::function<S(const Tensor<S>&)>& f, const Tensor<S>& x,
                           S h) {
    Tensor<S> g(x.shape);
    Tensor<S> probe = x.clone();
    for (Index i = 0; i < x.numel(); ++i) {
        const S v = (*x.data)[i];
        const S step = h * std::max(S(1), std::abs(v));
        (*probe.data)[i] = v + step;
        const S fp = f(probe);
        (*probe.data)[i] = v - step;
        const S fm = f(probe);
        (*probe.data)[i] = v;
        (*g.data)[i] = (fp - fm) / (S(2) * step);
    }
    return g;
}

}  // namespace tsdn
