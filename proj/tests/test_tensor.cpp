#include "doctest.h"

#include <cmath>

#include "tsdn/rng.hpp"
#include "tsdn/tensor.hpp"

using namespace tsdn;
using T = Tensor<double>;

namespace {

T filled(Shape4 s, std::vector<double> v) { return T(s, std::move(v)); }

T random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    T t(s);
    for (Index i = 0; i < t.numel(); ++i) (*t.data)[i] = rng.next_uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("relu forward and gradient") {
    T x = filled(Shape4{1, 1, 1, 3}, {-1.0, 2.0, 3.0});
    GradTape<double> tape;
    tape.watch(x);
    T y = relu(x);
    CHECK(y.at(0, 0, 0, 0) == 0.0);
    CHECK(y.at(0, 0, 0, 1) == 2.0);

    T loss = sum_all(y);
    backward(loss);
    CHECK((*x.grad)[0] == 0.0);  // negative side
    CHECK((*x.grad)[2] == 1.0);  // upstream passes through at v=3
}

TEST_CASE("relu subgradient at exactly zero is zero") {
    T x = filled(Shape4{1, 1, 1, 1}, {0.0});
    GradTape<double> tape;
    tape.watch(x);
    T loss = sum_all(relu(x));
    backward(loss);
    CHECK((*x.grad)[0] == 0.0);
}

TEST_CASE("sigmoid values and gradient") {
    T x = filled(Shape4{1, 1, 1, 3}, {0.0, 40.0, -40.0});
    GradTape<double> tape;
    tape.watch(x);
    T y = sigmoid(x);
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.5));
    CHECK(y.at(0, 0, 0, 1) < 1.0);  // saturated but strictly below 1
    CHECK(y.at(0, 0, 0, 1) > 0.99);
    CHECK(y.at(0, 0, 0, 2) > 0.0);
    CHECK(std::isfinite(y.at(0, 0, 0, 1)));

    T loss = sum_all(y);
    backward(loss);
    CHECK((*x.grad)[0] == doctest::Approx(0.25));  // s(1-s) at 0
}

TEST_CASE("concat_channels shapes and gradient routing") {
    Rng rng(3);
    T a = random_tensor(Shape4{1, 3, 8, 8}, rng);
    T b = random_tensor(Shape4{1, 5, 8, 8}, rng);
    T out = concat_channels<double>({a, b});
    CHECK(out.shape == Shape4{1, 8, 8, 8});
    CHECK(out.at(0, 2, 4, 4) == a.at(0, 2, 4, 4));
    CHECK(out.at(0, 3, 4, 4) == b.at(0, 0, 4, 4));

    // single input acts as identity
    T single = concat_channels<double>({a});
    CHECK(single.shape == a.shape);
    for (Index i = 0; i < a.numel(); ++i) CHECK((*single.data)[i] == (*a.data)[i]);

    // gradient of a slice routes to its source
    GradTape<double> tape;
    tape.watch(a);
    tape.watch(b);
    T cat = concat_channels<double>({a, b});
    T w(cat.shape);
    w.at(0, 4, 1, 1) = 1.0;  // channel 4 belongs to b's channel 1
    T loss = sum_all(mul(cat, w));
    backward(loss);
    CHECK((*b.grad)[b.offset(0, 1, 1, 1)] == 1.0);
    for (Index i = 0; i < a.numel(); ++i) CHECK((*a.grad)[i] == 0.0);

    T c = random_tensor(Shape4{1, 1, 4, 8}, rng);
    CHECK_THROWS_AS((void)concat_channels<double>({a, c}), ShapeError);
}

TEST_CASE("add and mul_broadcast identities") {
    Rng rng(5);
    T x = random_tensor(Shape4{2, 3, 4, 4}, rng);
    T zeros(x.shape);
    T sum = add(x, zeros);
    for (Index i = 0; i < x.numel(); ++i) CHECK((*sum.data)[i] == (*x.data)[i]);

    T ones_map = T::full(Shape4{2, 1, 4, 4}, 1.0);
    T gated = mul_broadcast(x, ones_map);
    for (Index i = 0; i < x.numel(); ++i) CHECK((*gated.data)[i] == (*x.data)[i]);

    T bad(Shape4{2, 2, 4, 4});
    CHECK_THROWS_AS((void)add(x, bad), ShapeError);
    T bad_gate(Shape4{2, 2, 1, 1});
    CHECK_THROWS_AS((void)mul_broadcast(x, bad_gate), ShapeError);
}

TEST_CASE("mul_broadcast backward sum-reduces the broadcast axis") {
    Rng rng(7);
    T x = random_tensor(Shape4{1, 3, 3, 3}, rng);
    T a = random_tensor(Shape4{1, 1, 3, 3}, rng);

    GradTape<double> tape;
    tape.watch(a);
    T loss = sum_all(mul_broadcast(x, a));
    backward(loss);

    // Oracle: central finite differences through a pure recomputation.
    std::function<double(const T&)> f = [&](const T& probe) {
        double acc = 0;
        for (Index c = 0; c < 3; ++c)
            for (Index h = 0; h < 3; ++h)
                for (Index w = 0; w < 3; ++w)
                    acc += x.at(0, c, h, w) * probe.at(0, 0, h, w);
        return acc;
    };
    T fd = finite_diff_grad<double>(f, a, 1e-4);
    for (Index i = 0; i < a.numel(); ++i)
        CHECK((*a.grad)[i] == doctest::Approx(((*fd.data))[i]).epsilon(1e-6));
}

TEST_CASE("pooling reductions") {
    T x = T::full(Shape4{1, 1, 4, 4}, 2.0);
    T g = spatial_gap(x);
    CHECK(g.shape == Shape4{1, 1, 1, 1});
    CHECK(g.item() == doctest::Approx(2.0));

    T y = filled(Shape4{1, 3, 1, 1}, {1.0, 5.0, 3.0});
    CHECK(channel_max(y).item() == 5.0);
    CHECK(channel_mean(y).item() == doctest::Approx(3.0));

    // gap backward spreads g/(H*W) uniformly
    GradTape<double> tape;
    tape.watch(x);
    T loss = sum_all(spatial_gap(x));
    backward(loss);
    for (Index i = 0; i < x.numel(); ++i) CHECK((*x.grad)[i] == doctest::Approx(1.0 / 16));
}

TEST_CASE("channel_max ties route to the lowest channel index") {
    T x = filled(Shape4{1, 3, 1, 1}, {7.0, 7.0, 7.0});
    GradTape<double> tape;
    tape.watch(x);
    T loss = sum_all(channel_max(x));
    backward(loss);
    CHECK((*x.grad)[0] == 1.0);
    CHECK((*x.grad)[1] == 0.0);
    CHECK((*x.grad)[2] == 0.0);
}

TEST_CASE("backward on sum of squares") {
    T x = filled(Shape4{1, 1, 1, 3}, {1.0, -2.0, 3.0});
    GradTape<double> tape;
    tape.watch(x);
    T loss = sum_all(mul(x, x));
    backward(loss);
    CHECK((*x.grad)[0] == doctest::Approx(2.0));
    CHECK((*x.grad)[1] == doctest::Approx(-4.0));
    CHECK((*x.grad)[2] == doctest::Approx(6.0));

    // repeated backward without reset accumulates
    backward(loss);
    CHECK((*x.grad)[0] == doctest::Approx(4.0));
}

TEST_CASE("unused watched tensor keeps a zero gradient") {
    T x = filled(Shape4{1, 1, 1, 2}, {1.0, 2.0});
    T unused = filled(Shape4{1, 1, 1, 2}, {5.0, 5.0});
    GradTape<double> tape;
    tape.watch(x);
    tape.watch(unused);
    T loss = sum_all(mul(x, x));
    backward(loss);
    CHECK((*unused.grad)[0] == 0.0);
    CHECK((*unused.grad)[1] == 0.0);
}

TEST_CASE("backward preconditions") {
    T detached = T::full(Shape4{1, 1, 1, 1}, 3.0);
    CHECK_THROWS_AS(backward(detached), Error);

    T x = filled(Shape4{1, 1, 1, 2}, {1.0, 2.0});
    GradTape<double> tape;
    tape.watch(x);
    T y = relu(x);  // not scalar
    CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("finite_diff_grad basics") {
    Rng rng(11);
    T x = random_tensor(Shape4{1, 2, 2, 2}, rng);
    std::function<double(const T&)> fsum = [](const T& t) { return t.array().sum(); };
    T g = finite_diff_grad<double>(fsum, x, 1e-4);
    for (Index i = 0; i < x.numel(); ++i) CHECK((*g.data)[i] == doctest::Approx(1.0));

    T one = T::full(Shape4{1, 1, 1, 1}, 1.0);
    std::function<double(const T&)> fsq = [](const T& t) {
        return (t.array() * t.array()).sum();
    };
    T g2 = finite_diff_grad<double>(fsq, one, 1e-4);
    CHECK((*g2.data)[0] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("pad and crop") {
    T x = filled(Shape4{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    T z = pad(x, 1, 1, 1, 1, PadMode::Zero);
    CHECK(z.shape == Shape4{1, 1, 4, 4});
    CHECK(z.at(0, 0, 0, 0) == 0.0);
    CHECK(z.at(0, 0, 1, 1) == 1.0);

    T r = pad(x, 1, 1, 1, 1, PadMode::Reflect);
    CHECK(r.at(0, 0, 0, 0) == 4.0);  // mirror without edge repeat
    CHECK(r.at(0, 0, 0, 1) == 3.0);

    // reflect folding keeps 1x1 inputs well defined for any pad
    T tiny = T::full(Shape4{1, 1, 1, 1}, 9.0);
    T rt = pad(tiny, 3, 3, 3, 3, PadMode::Reflect);
    for (Index i = 0; i < rt.numel(); ++i) CHECK((*rt.data)[i] == 9.0);

    T back = crop(r, 1, 1, 2, 2);
    for (Index i = 0; i < x.numel(); ++i) CHECK((*back.data)[i] == (*x.data)[i]);
    CHECK_THROWS_AS((void)crop(x, 1, 1, 3, 3), ShapeError);
}

TEST_CASE("forward ops stay finite on finite inputs") {
    Rng rng(13);
    T x = random_tensor(Shape4{2, 3, 5, 5}, rng, -40.0, 40.0);
    CHECK(relu(x).all_finite());
    CHECK(sigmoid(x).all_finite());
    CHECK(spatial_gap(x).all_finite());
    CHECK(channel_mean(x).all_finite());
    CHECK(channel_max(x).all_finite());
    CHECK(add(x, x).all_finite());
    CHECK(mul(x, x).all_finite());
}

TEST_CASE("tensors on different tapes cannot mix") {
    T a = T::full(Shape4{1, 1, 1, 1}, 1.0);
    T b = T::full(Shape4{1, 1, 1, 1}, 2.0);
    GradTape<double> t1, t2;
    t1.watch(a);
    t2.watch(b);
    CHECK_THROWS_AS((void)add(a, b), Error);
}
