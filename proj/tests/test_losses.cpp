#include "doctest.h"

#include <cmath>

#include "tsdn/losses.hpp"
#include "tsdn/rng.hpp"

using namespace tsdn;
using T = Tensor<double>;

namespace {

T random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    T t(s);
    for (Index i = 0; i < t.numel(); ++i) (*t.data)[i] = rng.next_uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("mse basics") {
    T x(Shape4{1, 1, 1, 2}, {1.0, 3.0});
    T gt(Shape4{1, 1, 1, 2}, {0.0, 1.0});
    CHECK(mse_loss(x, gt).item() == doctest::Approx(2.5));
    CHECK(mse_loss(gt, gt).item() == 0.0);
    CHECK(mse_loss(x, gt).item() == mse_loss(gt, x).item());  // symmetry

    T bad(Shape4{1, 1, 2, 1});
    CHECK_THROWS_AS((void)mse_loss(x, bad), ShapeError);
}

TEST_CASE("mse gradient is 2(x-gt)/n") {
    Rng rng(1);
    T x = random_tensor(Shape4{1, 1, 3, 3}, rng);
    T gt = random_tensor(Shape4{1, 1, 3, 3}, rng);
    GradTape<double> tape;
    tape.watch(x);
    T loss = mse_loss(x, gt);
    backward(loss);
    for (Index i = 0; i < x.numel(); ++i)
        CHECK((*x.grad)[i] ==
              doctest::Approx(2.0 * ((*x.data)[i] - (*gt.data)[i]) / 9.0).epsilon(1e-12));

    std::function<double(const T&)> f = [&](const T& p) {
        return ((p.array() - gt.array()).square()).sum() / 9.0;
    };
    T fd = finite_diff_grad<double>(f, x, 1e-5);
    for (Index i = 0; i < x.numel(); ++i)
        CHECK((*x.grad)[i] == doctest::Approx((*fd.data)[i]).epsilon(1e-6));
}

TEST_CASE("laplacian of a constant image is zero") {
    T x = T::full(Shape4{1, 1, 5, 5}, 0.7);
    T y = laplacian(x);
    CHECK(y.shape == x.shape);
    CHECK(y.array().abs().maxCoeff() == 0.0);  // includes borders via reflection
}

TEST_CASE("laplacian stamps the kernel around an interior impulse") {
    T x(Shape4{1, 1, 5, 5});
    x.at(0, 0, 2, 2) = 1.0;
    T y = laplacian(x);
    CHECK(y.at(0, 0, 2, 2) == -4.0);
    CHECK(y.at(0, 0, 1, 2) == 1.0);
    CHECK(y.at(0, 0, 3, 2) == 1.0);
    CHECK(y.at(0, 0, 2, 1) == 1.0);
    CHECK(y.at(0, 0, 2, 3) == 1.0);
    CHECK(y.at(0, 0, 0, 0) == 0.0);
}

TEST_CASE("laplacian annihilates affine ramps at interior pixels") {
    // Dyadic coefficients keep the arithmetic exact in binary floating point.
    T x(Shape4{1, 1, 6, 7});
    for (Index h = 0; h < 6; ++h)
        for (Index w = 0; w < 7; ++w)
            x.at(0, 0, h, w) = 0.125 * static_cast<double>(h) +
                               0.250 * static_cast<double>(w) + 0.0625;
    T y = laplacian(x);
    for (Index h = 1; h < 5; ++h)
        for (Index w = 1; w < 6; ++w) CHECK(y.at(0, 0, h, w) == 0.0);
}

TEST_CASE("charbonnier edge loss at x == gt is exactly (1+lambda)*epsilon") {
    Rng rng(2);
    T gt = random_tensor(Shape4{2, 1, 6, 6}, rng, 0.0, 1.0);
    LossConfig cfg;
    cfg.mode = LossMode::CharbonnierEdge;
    const double v = charbonnier_edge_loss(gt, gt, cfg).item();
    CHECK(std::abs(v - 1.1e-3) < 1e-12);
}

TEST_CASE("charbonnier approaches the L2 norm of the residual for large errors") {
    Rng rng(3);
    T x = random_tensor(Shape4{1, 1, 4, 4}, rng, 10.0, 20.0);
    T gt = random_tensor(Shape4{1, 1, 4, 4}, rng, -20.0, -10.0);
    LossConfig cfg;
    cfg.mode = LossMode::CharbonnierEdge;
    cfg.lambda_edge = 0.0;  // isolate the data term
    const double norm = std::sqrt((x.array() - gt.array()).square().sum());
    CHECK(charbonnier_edge_loss(x, gt, cfg).item() ==
          doctest::Approx(norm).epsilon(1e-9));
}

TEST_CASE("charbonnier batch reduction averages per-element distances") {
    T x(Shape4{2, 1, 1, 2}, {1.0, 1.0, 0.0, 0.0});
    T gt(Shape4{2, 1, 1, 2}, {0.0, 0.0, 0.0, 0.0});
    const double eps = 1e-3;
    const double expected =
        0.5 * (std::sqrt(2.0 + eps * eps) + std::sqrt(0.0 + eps * eps));
    CHECK(charbonnier_dist(x, gt, eps).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("total loss sums the per-stage losses") {
    Rng rng(4);
    T x1 = random_tensor(Shape4{1, 1, 5, 5}, rng);
    T x2 = random_tensor(Shape4{1, 1, 5, 5}, rng);
    T gt = random_tensor(Shape4{1, 1, 5, 5}, rng);

    LossConfig mse_cfg;
    CHECK(total_loss(gt, gt, gt, mse_cfg).item() == 0.0);
    CHECK(total_loss(x1, x2, gt, mse_cfg).item() ==
          doctest::Approx(mse_loss(x1, gt).item() + mse_loss(x2, gt).item()).epsilon(1e-12));

    LossConfig cb_cfg;
    cb_cfg.mode = LossMode::CharbonnierEdge;
    CHECK(total_loss(gt, gt, gt, cb_cfg).item() == doctest::Approx(2.2e-3).epsilon(1e-9));
    CHECK(total_loss(x1, x2, gt, cb_cfg).item() ==
          doctest::Approx(charbonnier_edge_loss(x1, gt, cb_cfg).item() +
                          charbonnier_edge_loss(x2, gt, cb_cfg).item())
              .epsilon(1e-12));
}

TEST_CASE("losses are non-negative with equality only at x == gt") {
    Rng rng(5);
    LossConfig cfg;
    cfg.mode = LossMode::CharbonnierEdge;
    for (int trial = 0; trial < 10; ++trial) {
        T x = random_tensor(Shape4{1, 1, 4, 4}, rng);
        T gt = random_tensor(Shape4{1, 1, 4, 4}, rng);
        CHECK(mse_loss(x, gt).item() > 0.0);
        CHECK(charbonnier_edge_loss(x, gt, cfg).item() > 1.1e-3);
    }
    LossConfig bad;
    bad.epsilon = 0.0;
    T x = random_tensor(Shape4{1, 1, 4, 4}, rng);
    CHECK_THROWS_AS((void)charbonnier_edge_loss(x, x, bad), ShapeError);
}
