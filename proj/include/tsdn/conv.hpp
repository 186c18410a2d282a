#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "tsdn/rng.hpp"
#include "tsdn/tensor.hpp"

namespace tsdn {

template <typename S>
using MatrixR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatrixC = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// Learnable kernel + geometry for one convolution layer.
// weight is (out_ch, in_ch, kh, kw); bias is (1, out_ch, 1, 1).
template <typename S>
struct ConvParams {
    Tensor<S> weight;
    Tensor<S> bias;
    Index stride_h = 1, stride_w = 1;
    Index dilation_h = 1, dilation_w = 1;
    Index pad_h = 0, pad_w = 0;
    PadMode pad_mode = PadMode::Zero;

    Index out_channels() const { return weight.shape.n; }
    Index in_channels() const { return weight.shape.c; }
    Index kh() const { return weight.shape.h; }
    Index kw() const { return weight.shape.w; }
};

inline Index effective_extent(Index k, Index dilation) { return (k - 1) * dilation + 1; }

// Fan-in-scaled uniform weights, zero bias.
template <typename S>
ConvParams<S> make_conv(Index out_ch, Index in_ch, Index kh, Index kw, Rng& rng,
                        Index stride = 1, Index dilation = 1, Index padding = 0,
                        PadMode mode = PadMode::Zero) {
    ConvParams<S> p;
    p.weight = Tensor<S>(Shape4{out_ch, in_ch, kh, kw});
    p.bias = Tensor<S>(Shape4{1, out_ch, 1, 1});
    p.weight.requires_grad = true;
    p.bias.requires_grad = true;
    p.stride_h = p.stride_w = stride;
    p.dilation_h = p.dilation_w = dilation;
    p.pad_h = p.pad_w = padding;
    p.pad_mode = mode;
    const double bound = std::sqrt(6.0 / static_cast<double>(in_ch * kh * kw));
    for (Index i = 0; i < p.weight.numel(); ++i)
        (*p.weight.data)[i] = static_cast<S>(rng.next_uniform(-bound, bound));
    return p;
}

enum class ConvBackend { Direct, Im2col };

// Process-wide forward backend; set once at startup. Both paths agree within
// floating-point reassociation tolerance and are individually deterministic.
inline ConvBackend conv_backend = ConvBackend::Im2col;

namespace detail {

struct ConvGeom {
    Index n, cin, hin, win;
    Index cout, kh, kw;
    Index sh, sw, dh, dw;
    Index hout, wout;
};

template <typename S>
ConvGeom conv_geometry(const Shape4& xs, const ConvParams<S>& p) {
    if (xs.c != p.in_channels())
        throw ShapeError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) +
                         " channels, kernel " + p.weight.shape.str() + " expects " +
                         std::to_string(p.in_channels()));
    if (p.kh() < 1 || p.kw() < 1 || p.dilation_h < 1 || p.dilation_w < 1 ||
        p.stride_h < 1 || p.stride_w < 1)
        throw ShapeError("conv2d: invalid kernel geometry for " + p.weight.shape.str());
    if (p.bias.numel() != p.out_channels())
        throw ShapeError("conv2d: bias " + p.bias.shape.str() + " vs " +
                         std::to_string(p.out_channels()) + " output channels");
    ConvGeom g;
    g.n = xs.n;
    g.cin = xs.c;
    g.hin = xs.h;
    g.win = xs.w;
    g.cout = p.out_channels();
    g.kh = p.kh();
    g.kw = p.kw();
    g.sh = p.stride_h;
    g.sw = p.stride_w;
    g.dh = p.dilation_h;
    g.dw = p.dilation_w;
    g.hout = (xs.h - effective_extent(g.kh, g.dh)) / g.sh + 1;
    g.wout = (xs.w - effective_extent(g.kw, g.dw)) / g.sw + 1;
    if (xs.h < effective_extent(g.kh, g.dh) || xs.w < effective_extent(g.kw, g.dw) ||
        g.hout < 1 || g.wout < 1)
        throw ShapeError("conv2d: non-positive output for input " + xs.str() + ", kernel " +
                         p.weight.shape.str() + ", stride " + std::to_string(g.sh) + "x" +
                         std::to_string(g.sw) + ", dilation " + std::to_string(g.dh) + "x" +
                         std::to_string(g.dw));
    return g;
}

// Reference path. Accumulation order is fixed (bias, then taps in weight
// layout order) so results are bit-reproducible for a given build.
template <typename S>
void conv_forward_direct(const ArrayX<S>& x, const ArrayX<S>& w, const ArrayX<S>& b,
                         ArrayX<S>& out, const ConvGeom& g) {
    for (Index n = 0; n < g.n; ++n) {
        for (Index oc = 0; oc < g.cout; ++oc) {
            for (Index oh = 0; oh < g.hout; ++oh) {
                for (Index ow = 0; ow < g.wout; ++ow) {
                    S acc = b[oc];
                    for (Index ic = 0; ic < g.cin; ++ic) {
                        for (Index i = 0; i < g.kh; ++i) {
                            const Index ih = oh * g.sh + i * g.dh;
                            const Index xrow = ((n * g.cin + ic) * g.hin + ih) * g.win;
                            const Index wrow = ((oc * g.cin + ic) * g.kh + i) * g.kw;
                            for (Index j = 0; j < g.kw; ++j)
                                acc += w[wrow + j] * x[xrow + ow * g.sw + j * g.dw];
                        }
                    }
                    out[((n * g.cout + oc) * g.hout + oh) * g.wout + ow] = acc;
                }
            }
        }
    }
}

inline Index conv_chunk_cols(Index k_rows, Index total_cols) {
    const Index budget = Index(1) << 21;  // ~2M scalars per column buffer
    return std::clamp<Index>(budget / std::max<Index>(k_rows, 1), 1, total_cols);
}

template <typename S>
void im2col_chunk(const ArrayX<S>& x, const ConvGeom& g, Index n, Index col0, Index len,
                  MatrixC<S>& cols) {
    for (Index p = 0; p < len; ++p) {
        const Index oh = (col0 + p) / g.wout;
        const Index ow = (col0 + p) % g.wout;
        Index k = 0;
        for (Index ic = 0; ic < g.cin; ++ic) {
            const Index cbase = (n * g.cin + ic) * g.hin;
            for (Index i = 0; i < g.kh; ++i) {
                const Index xrow = (cbase + oh * g.sh + i * g.dh) * g.win + ow * g.sw;
                for (Index j = 0; j < g.kw; ++j) cols(k++, p) = x[xrow + j * g.dw];
            }
        }
    }
}

template <typename S>
void conv_forward_im2col(const ArrayX<S>& x, const ArrayX<S>& w, const ArrayX<S>& b,
                         ArrayX<S>& out, const ConvGeom& g) {
    const Index krows = g.cin * g.kh * g.kw;
    const Index pcols = g.hout * g.wout;
    const Index chunk = conv_chunk_cols(krows, pcols);
    Eigen::Map<const MatrixR<S>> wmat(w.data(), g.cout, krows);
    MatrixC<S> cols(krows, chunk);
    for (Index n = 0; n < g.n; ++n) {
        Eigen::Map<MatrixR<S>> omat(out.data() + n * g.cout * pcols, g.cout, pcols);
        for (Index c0 = 0; c0 < pcols; c0 += chunk) {
            const Index len = std::min(chunk, pcols - c0);
            im2col_chunk(x, g, n, c0, len, cols);
            omat.middleCols(c0, len).noalias() = wmat * cols.leftCols(len);
        }
        for (Index oc = 0; oc < g.cout; ++oc) omat.row(oc).array() += b[oc];
    }
}

// Gradients via the im2col route: d(bias) = row sums, d(weight) = dY * colsT,
// d(x) = WT * dY scattered back with col2im.
template <typename S>
void conv_backward(const ArrayX<S>& x, const ArrayX<S>& w, const ArrayX<S>& gout,
                   ArrayX<S>* gx, ArrayX<S>* gw, ArrayX<S>* gb, const ConvGeom& g) {
    const Index krows = g.cin * g.kh * g.kw;
    const Index pcols = g.hout * g.wout;
    const Index chunk = conv_chunk_cols(krows, pcols);
    Eigen::Map<const MatrixR<S>> wmat(w.data(), g.cout, krows);
    MatrixC<S> cols(krows, chunk);
    MatrixC<S> dcols(krows, chunk);
    for (Index n = 0; n < g.n; ++n) {
        Eigen::Map<const MatrixR<S>> gomat(gout.data() + n * g.cout * pcols, g.cout, pcols);
        if (gb) {
            Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> bvec(gb->data(), g.cout);
            bvec.noalias() += gomat.rowwise().sum();
        }
        for (Index c0 = 0; c0 < pcols; c0 += chunk) {
            const Index len = std::min(chunk, pcols - c0);
            if (gw) {
                im2col_chunk(x, g, n, c0, len, cols);
                Eigen::Map<MatrixR<S>> gwmat(gw->data(), g.cout, krows);
                gwmat.noalias() += gomat.middleCols(c0, len) * cols.leftCols(len).transpose();
            }
            if (gx) {
                dcols.leftCols(len).noalias() = wmat.transpose() * gomat.middleCols(c0, len);
                for (Index p = 0; p < len; ++p) {
                    const Index oh = (c0 + p) / g.wout;
                    const Index ow = (c0 + p) % g.wout;
                    Index k = 0;
                    for (Index ic = 0; ic < g.cin; ++ic) {
                        const Index cbase = (n * g.cin + ic) * g.hin;
                        for (Index i = 0; i < g.kh; ++i) {
                            const Index xrow =
                                (cbase + oh * g.sh + i * g.dh) * g.win + ow * g.sw;
                            for (Index j = 0; j < g.kw; ++j)
                                (*gx)[xrow + j * g.dw] += dcols(k++, p);
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2D cross-correlation with stride/dilation, differentiable w.r.t. input,
// weights, and bias. Padding is materialized first in the configured mode.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const ConvParams<S>& p) {
    if (x.shape.c != p.in_channels())
        throw ShapeError("conv2d: input " + x.shape.str() + " has " +
                         std::to_string(x.shape.c) + " channels, kernel " +
                         p.weight.shape.str() + " expects " +
                         std::to_string(p.in_channels()));
    const Tensor<S> xp = (p.pad_h > 0 || p.pad_w > 0)
                             ? pad(x, p.pad_h, p.pad_h, p.pad_w, p.pad_w, p.pad_mode)
                             : x;
    const detail::ConvGeom g = detail::conv_geometry(xp.shape, p);
    Tensor<S> out(Shape4{g.n, g.cout, g.hout, g.wout});
    if (conv_backend == ConvBackend::Direct)
        detail::conv_forward_direct(*xp.data, *p.weight.data, *p.bias.data, *out.data, g);
    else
        detail::conv_forward_im2col(*xp.data, *p.weight.data, *p.bias.data, *out.data, g);
    out.requires_grad = xp.requires_grad || p.weight.requires_grad || p.bias.requires_grad;
    if (auto* tape = detail::tape_of<S>({&xp, &p.weight, &p.bias})) {
        tape->record(out, [xd = xp.data, wd = p.weight.data, gx = xp.grad,
                           gw = p.weight.grad, gb = p.bias.grad, g](const ArrayX<S>& gout) {
            detail::conv_backward(*xd, *wd, gout, gx ? gx.get() : nullptr,
                                  gw ? gw.get() : nullptr, gb ? gb.get() : nullptr, g);
        });
    }
    return out;
}

// Forced-backend variants, used to cross-check the two forward paths.
// Pure compute: nothing is recorded even when operands carry a tape.
template <typename S>
Tensor<S> conv2d_direct(const Tensor<S>& x, const ConvParams<S>& p) {
    Tensor<S> xv = x;
    xv.tape = nullptr;
    xv.grad = nullptr;
    xv.requires_grad = false;
    const Tensor<S> xp = (p.pad_h > 0 || p.pad_w > 0)
                             ? pad(xv, p.pad_h, p.pad_h, p.pad_w, p.pad_w, p.pad_mode)
                             : xv;
    const detail::ConvGeom g = detail::conv_geometry(xp.shape, p);
    Tensor<S> out(Shape4{g.n, g.cout, g.hout, g.wout});
    detail::conv_forward_direct(*xp.data, *p.weight.data, *p.bias.data, *out.data, g);
    return out;
}

template <typename S>
Tensor<S> conv2d_im2col(const Tensor<S>& x, const ConvParams<S>& p) {
    Tensor<S> xv = x;
    xv.tape = nullptr;
    xv.grad = nullptr;
    xv.requires_grad = false;
    const Tensor<S> xp = (p.pad_h > 0 || p.pad_w > 0)
                             ? pad(xv, p.pad_h, p.pad_h, p.pad_w, p.pad_w, p.pad_mode)
                             : xv;
    const detail::ConvGeom g = detail::conv_geometry(xp.shape, p);
    Tensor<S> out(Shape4{g.n, g.cout, g.hout, g.wout});
    detail::conv_forward_im2col(*xp.data, *p.weight.data, *p.bias.data, *out.data, g);
    return out;
}

// Transposed convolution (gradient of conv2d w.r.t. its input, as a forward
// op). weight stays (out_ch, in_ch, kh, kw) with in_ch matching x.
template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& x, const ConvParams<S>& p) {
    const Shape4 xs = x.shape;
    if (xs.c != p.in_channels())
        throw ShapeError("conv_transpose2d: input " + xs.str() + " has " +
                         std::to_string(xs.c) + " channels, kernel " + p.weight.shape.str() +
                         " expects " + std::to_string(p.in_channels()));
    if (p.bias.numel() != p.out_channels())
        throw ShapeError("conv_transpose2d: bias " + p.bias.shape.str() + " vs " +
                         std::to_string(p.out_channels()) + " output channels");
    const Index hout =
        (xs.h - 1) * p.stride_h - 2 * p.pad_h + effective_extent(p.kh(), p.dilation_h);
    const Index wout =
        (xs.w - 1) * p.stride_w - 2 * p.pad_w + effective_extent(p.kw(), p.dilation_w);
    if (hout < 1 || wout < 1)
        throw ShapeError("conv_transpose2d: non-positive output for input " + xs.str());
    const Index cout = p.out_channels();
    Tensor<S> out(Shape4{xs.n, cout, hout, wout});

    const ArrayX<S>& xv = *x.data;
    const ArrayX<S>& wv = *p.weight.data;
    const ArrayX<S>& bv = *p.bias.data;
    for (Index n = 0; n < xs.n; ++n)
        for (Index oc = 0; oc < cout; ++oc)
            out.data->segment((n * cout + oc) * hout * wout, hout * wout).setConstant(bv[oc]);
    for (Index n = 0; n < xs.n; ++n) {
        for (Index oc = 0; oc < cout; ++oc) {
            for (Index ic = 0; ic < xs.c; ++ic) {
                for (Index ih = 0; ih < xs.h; ++ih) {
                    for (Index iw = 0; iw < xs.w; ++iw) {
                        const S v = xv[((n * xs.c + ic) * xs.h + ih) * xs.w + iw];
                        for (Index i = 0; i < p.kh(); ++i) {
                            const Index oh = ih * p.stride_h + i * p.dilation_h - p.pad_h;
                            if (oh < 0 || oh >= hout) continue;
                            for (Index j = 0; j < p.kw(); ++j) {
                                const Index ow = iw * p.stride_w + j * p.dilation_w - p.pad_w;
                                if (ow < 0 || ow >= wout) continue;
                                (*out.data)[((n * cout + oc) * hout + oh) * wout + ow] +=
                                    wv[((oc * xs.c + ic) * p.kh() + i) * p.kw() + j] * v;
                            }
                        }
                    }
                }
            }
        }
    }

    out.requires_grad = x.requires_grad || p.weight.requires_grad || p.bias.requires_grad;
    if (auto* tape = detail::tape_of<S>({&x, &p.weight, &p.bias})) {
        const Index kh = p.kh(), kw = p.kw();
        const Index sh = p.stride_h, sw = p.stride_w;
        const Index dh = p.dilation_h, dw = p.dilation_w;
        const Index ph = p.pad_h, pw = p.pad_w;
        tape->record(out, [xd = x.data, wd = p.weight.data, gx = x.grad, gw = p.weight.grad,
                           gb = p.bias.grad, xs, cout, hout, wout, kh, kw, sh, sw, dh, dw,
                           ph, pw](const ArrayX<S>& g) {
            if (gb)
                for (Index n = 0; n < xs.n; ++n)
                    for (Index oc = 0; oc < cout; ++oc)
                        (*gb)[oc] += g.segment((n * cout + oc) * hout * wout, hout * wout).sum();
            for (Index n = 0; n < xs.n; ++n) {
                for (Index oc = 0; oc < cout; ++oc) {
                    for (Index ic = 0; ic < xs.c; ++ic) {
                        for (Index ih = 0; ih < xs.h; ++ih) {
                            for (Index iw = 0; iw < xs.w; ++iw) {
                                const Index xi = ((n * xs.c + ic) * xs.h + ih) * xs.w + iw;
                                for (Index i = 0; i < kh; ++i) {
                                    const Index oh = ih * sh + i * dh - ph;
                                    if (oh < 0 || oh >= hout) continue;
                                    for (Index j = 0; j < kw; ++j) {
                                        const Index ow = iw * sw + j * dw - pw;
                                        if (ow < 0 || ow >= wout) continue;
                                        const S go =
                                            g[((n * cout + oc) * hout + oh) * wout + ow];
                                        const Index wi = ((oc * xs.c + ic) * kh + i) * kw + j;
                                        if (gx) (*gx)[xi] += (*wd)[wi] * go;
                                        if (gw) (*gw)[wi] += (*xd)[xi] * go;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace tsdn
