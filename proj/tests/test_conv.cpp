#include "doctest.h"

#include <cmath>

#include "tsdn/conv.hpp"
#include "tsdn/rng.hpp"

using namespace tsdn;
using T = Tensor<double>;

namespace {

T random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    T t(s);
    for (Index i = 0; i < t.numel(); ++i) (*t.data)[i] = rng.next_uniform(lo, hi);
    return t;
}

ConvParams<double> conv_of(Index oc, Index ic, Index k, std::vector<double> w,
                           Index stride = 1, Index dilation = 1, Index padding = 0) {
    ConvParams<double> p;
    p.weight = T(Shape4{oc, ic, k, k}, std::move(w));
    p.bias = T(Shape4{1, oc, 1, 1});
    p.stride_h = p.stride_w = stride;
    p.dilation_h = p.dilation_w = dilation;
    p.pad_h = p.pad_w = padding;
    return p;
}

double max_abs_diff(const T& a, const T& b) {
    REQUIRE(a.shape == b.shape);
    return (a.array() - b.array()).abs().maxCoeff();
}

}  // namespace

TEST_CASE("1x1 identity kernel") {
    T x(Shape4{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto p = conv_of(1, 1, 1, {1.0});
    T y = conv2d(x, p);
    CHECK(y.shape == x.shape);
    for (Index i = 0; i < x.numel(); ++i) CHECK((*y.data)[i] == (*x.data)[i]);
}

TEST_CASE("3x3 box filter center value") {
    T x(Shape4{1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto p = conv_of(1, 1, 3, std::vector<double>(9, 1.0 / 9.0), 1, 1, 1);
    T y = conv2d(x, p);
    CHECK(y.shape == x.shape);
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("dilation preserves spatial size with matching pad") {
    CHECK(effective_extent(3, 2) == 5);
    Rng rng(2);
    T x = random_tensor(Shape4{1, 2, 7, 7}, rng);
    ConvParams<double> p = make_conv<double>(3, 2, 3, 3, rng, 1, 2, 2);
    T y = conv2d(x, p);
    CHECK(y.shape == Shape4{1, 3, 7, 7});
}

TEST_CASE("output shape formula over the full geometry grid") {
    Rng rng(4);
    const Index h = 6, w = 7;
    for (Index k = 1; k <= 4; ++k) {
        for (Index s = 1; s <= 2; ++s) {
            for (Index r = 1; r <= 4; ++r) {
                for (Index p = 0; p <= 4; ++p) {
                    T x = random_tensor(Shape4{1, 2, h, w}, rng);
                    ConvParams<double> cp = make_conv<double>(1, 2, k, k, rng, s, r, p);
                    const Index ext = (k - 1) * r + 1;
                    const Index ho = (h + 2 * p - ext) / s + 1;
                    const Index wo = (w + 2 * p - ext) / s + 1;
                    if (h + 2 * p < ext || w + 2 * p < ext) {
                        CHECK_THROWS_AS((void)conv2d(x, cp), ShapeError);
                    } else {
                        T y = conv2d(x, cp);
                        CHECK(y.shape == Shape4{1, 1, ho, wo});
                    }
                }
            }
        }
    }
}

TEST_CASE("conv2d is linear in its input when bias is zero") {
    Rng rng(6);
    T x = random_tensor(Shape4{1, 3, 6, 6}, rng);
    T y = random_tensor(Shape4{1, 3, 6, 6}, rng);
    ConvParams<double> p = make_conv<double>(2, 3, 3, 3, rng, 1, 1, 1);
    p.bias.array().setZero();

    const double a = 1.7, b = -0.6;
    T combo(x.shape);
    combo.array() = a * x.array() + b * y.array();
    T lhs = conv2d(combo, p);
    T cx = conv2d(x, p);
    T cy = conv2d(y, p);
    T rhs(lhs.shape);
    rhs.array() = a * cx.array() + b * cy.array();
    CHECK(max_abs_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("dilated conv equals conv with a zero-inflated kernel") {
    Rng rng(8);
    T x = random_tensor(Shape4{1, 2, 9, 9}, rng);
    ConvParams<double> dil = make_conv<double>(2, 2, 3, 3, rng, 1, 2, 0);

    // Inflate the 3x3 kernel to 5x5 by inserting a zero between taps.
    ConvParams<double> inflated = conv_of(2, 2, 5, std::vector<double>(100, 0.0));
    for (Index oc = 0; oc < 2; ++oc)
        for (Index ic = 0; ic < 2; ++ic)
            for (Index i = 0; i < 3; ++i)
                for (Index j = 0; j < 3; ++j)
                    inflated.weight.at(oc, ic, 2 * i, 2 * j) = dil.weight.at(oc, ic, i, j);
    inflated.bias.array() = dil.bias.array();

    CHECK(max_abs_diff(conv2d(x, dil), conv2d(x, inflated)) < 1e-10);
}

TEST_CASE("direct and im2col paths agree") {
    Rng rng(10);
    for (int trial = 0; trial < 4; ++trial) {
        const Index s = 1 + trial % 2;
        const Index r = 1 + trial;
        T x = random_tensor(Shape4{2, 3, 8, 9}, rng);
        ConvParams<double> p = make_conv<double>(4, 3, 3, 3, rng, s, r, r);
        CHECK(max_abs_diff(conv2d_direct(x, p), conv2d_im2col(x, p)) < 1e-10);
    }
    // single precision tolerance
    Rng frng(12);
    Tensor<float> xf(Shape4{1, 4, 16, 16});
    for (Index i = 0; i < xf.numel(); ++i)
        (*xf.data)[i] = static_cast<float>(frng.next_uniform(-1, 1));
    ConvParams<float> pf = make_conv<float>(8, 4, 3, 3, frng, 1, 1, 1);
    Tensor<float> a = conv2d_direct(xf, pf);
    Tensor<float> b = conv2d_im2col(xf, pf);
    CHECK((a.array() - b.array()).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("precondition violations carry shapes in the message") {
    Rng rng(14);
    T x = random_tensor(Shape4{1, 3, 6, 6}, rng);
    ConvParams<double> wrong = make_conv<double>(2, 4, 3, 3, rng);
    CHECK_THROWS_WITH_AS((void)conv2d(x, wrong),
                         doctest::Contains("(1,3,6,6)"), ShapeError);

    ConvParams<double> huge = make_conv<double>(2, 3, 4, 4, rng, 1, 4, 0);
    CHECK_THROWS_AS((void)conv2d(x, huge), ShapeError);  // extent 13 > 6

    ConvParams<double> bad_bias = make_conv<double>(2, 3, 3, 3, rng, 1, 1, 1);
    bad_bias.bias = T(Shape4{1, 5, 1, 1});
    CHECK_THROWS_AS((void)conv2d(x, bad_bias), ShapeError);
}

TEST_CASE("conv_transpose2d doubles spatial dims for 2x2 stride 2") {
    Rng rng(16);
    T x = random_tensor(Shape4{1, 3, 4, 4}, rng);
    ConvParams<double> p = make_conv<double>(5, 3, 2, 2, rng, 2);
    T y = conv_transpose2d(x, p);
    CHECK(y.shape == Shape4{1, 5, 8, 8});

    ConvParams<double> wrong = make_conv<double>(5, 4, 2, 2, rng, 2);
    CHECK_THROWS_AS((void)conv_transpose2d(x, wrong), ShapeError);
}

TEST_CASE("conv_transpose2d stamps the kernel") {
    T x(Shape4{1, 1, 1, 1}, {3.5});
    ConvParams<double> p = conv_of(1, 1, 2, {1, 1, 1, 1}, 2);
    T y = conv_transpose2d(x, p);
    CHECK(y.shape == Shape4{1, 1, 2, 2});
    for (Index i = 0; i < 4; ++i) CHECK((*y.data)[i] == doctest::Approx(3.5));
}

TEST_CASE("downsample then upsample restores the spatial shape") {
    Rng rng(18);
    T x = random_tensor(Shape4{1, 2, 6, 10}, rng);
    ConvParams<double> down = make_conv<double>(4, 2, 2, 2, rng, 2);
    ConvParams<double> up = make_conv<double>(2, 4, 2, 2, rng, 2);
    T y = conv_transpose2d(conv2d(x, down), up);
    CHECK(y.shape == x.shape);
}
