#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tsdn/blocks.hpp"
#include "tsdn/losses.hpp"
#include "tsdn/network.hpp"

namespace tsdn {

// Finite-difference verification of every differentiable op and both
// composite attention modules, in double precision on small random tensors.

struct GradCheckReport {
    std::string name;
    double max_rel_err = 0;
};

namespace gradcheck_detail {

using T = Tensor<double>;

inline T random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    T t(s);
    for (Index i = 0; i < t.numel(); ++i) (*t.data)[i] = rng.next_uniform(lo, hi);
    return t;
}

// Keeps |v| >= margin so ReLU-style kinks stay out of the FD stencil.
inline void away_from_zero(T& t, double margin) {
    for (Index i = 0; i < t.numel(); ++i) {
        double& v = (*t.data)[i];
        if (v >= 0 && v < margin) v += margin;
        if (v < 0 && v > -margin) v -= margin;
    }
}

// Separates channel values per pixel so max-pool winners are FD-stable.
inline void separate_channels(T& t, double gap, Rng& rng) {
    for (Index n = 0; n < t.shape.n; ++n) {
        for (Index h = 0; h < t.shape.h; ++h) {
            for (Index w = 0; w < t.shape.w; ++w) {
                bool ok = false;
                while (!ok) {
                    ok = true;
                    for (Index a = 0; a < t.shape.c && ok; ++a)
                        for (Index b = a + 1; b < t.shape.c && ok; ++b)
                            if (std::abs(t.at(n, a, h, w) - t.at(n, b, h, w)) < gap) {
                                t.at(n, b, h, w) = rng.next_uniform(-1.0, 1.0);
                                ok = false;
                            }
                }
            }
        }
    }
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace gradcheck_detail

// One named check: `make_loss` builds the scalar loss tensor from the live
// inputs (recording onto whatever tape they carry). FD is evaluated on
// detached copies, analytic gradients via one backward pass.
inline double gradcheck_case(std::vector<Tensor<double>*> inputs,
                             const std::function<Tensor<double>()>& make_loss,
                             double h = 1e-4) {
    using gradcheck_detail::rel_err;
    using T = Tensor<double>;

    // Numeric gradients on detached handles.
    std::vector<ArrayX<double>> numeric;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::function<double(const T&)> fi = [&, i](const T& probe) {
            // Swap the probe's data in, evaluate without any tape, swap back.
            auto saved = inputs[i]->data;
            inputs[i]->data = probe.data;
            const double v = make_loss().item();
            inputs[i]->data = saved;
            return v;
        };
        numeric.push_back(*finite_diff_grad<double>(fi, *inputs[i], h).data);
    }

    GradTape<double> tape;
    for (T* t : inputs) tape.watch(*t);
    Tensor<double> loss = make_loss();
    backward(loss);
    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (Index j = 0; j < numeric[i].size(); ++j)
            worst = std::max(worst, rel_err((*inputs[i]->grad)[j], numeric[i][j]));
        inputs[i]->tape = nullptr;
        inputs[i]->grad = nullptr;
        inputs[i]->requires_grad = false;
    }
    return worst;
}

std::vector<GradCheckReport> run_gradcheck_suite();

}  // namespace tsdn
