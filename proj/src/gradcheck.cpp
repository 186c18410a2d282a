#include "tsdn/gradcheck.hpp"

namespace tsdn {

namespace {

using gradcheck_detail::away_from_zero;
using gradcheck_detail::random_tensor;
using gradcheck_detail::separate_channels;
using T = Tensor<double>;

// Scalar objective: weighted sum of the output against fixed random weights,
// so the backward pass is exercised with a dense, non-uniform upstream grad.
T weighted(const T& out, const T& w) { return sum_all(mul(out, w)); }

T make_weights(Shape4 s, Rng& rng) { return random_tensor(s, rng); }

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite() {
    std::vector<GradCheckReport> reports;
    Rng rng(20240917);
    auto run = [&reports](const std::string& name, double err) {
        reports.push_back({name, err});
    };

    // conv2d, plain geometry
    {
        T x = random_tensor(Shape4{2, 3, 6, 6}, rng);
        ConvParams<double> p = make_conv<double>(4, 3, 3, 3, rng, 1, 1, 1);
        T w = make_weights(Shape4{2, 4, 6, 6}, rng);
        run("conv2d", gradcheck_case({&x, &p.weight, &p.bias},
                                     [&] { return weighted(conv2d(x, p), w); }));
    }
    // conv2d, stride 2 + dilation 2
    {
        T x = random_tensor(Shape4{1, 2, 6, 6}, rng);
        ConvParams<double> p = make_conv<double>(3, 2, 3, 3, rng, 2, 2, 2);
        T w = make_weights(Shape4{1, 3, 3, 3}, rng);
        run("conv2d_stride2_dilation2",
            gradcheck_case({&x, &p.weight, &p.bias},
                           [&] { return weighted(conv2d(x, p), w); }));
    }
    // conv2d with reflect padding (covers the reflect pad backward)
    {
        T x = random_tensor(Shape4{1, 2, 5, 5}, rng);
        ConvParams<double> p = make_conv<double>(2, 2, 3, 3, rng, 1, 1, 1, PadMode::Reflect);
        T w = make_weights(Shape4{1, 2, 5, 5}, rng);
        run("conv2d_reflect_pad",
            gradcheck_case({&x, &p.weight, &p.bias},
                           [&] { return weighted(conv2d(x, p), w); }));
    }
    // conv_transpose2d 2x2 stride 2
    {
        T x = random_tensor(Shape4{2, 3, 3, 3}, rng);
        ConvParams<double> p = make_conv<double>(2, 3, 2, 2, rng, 2);
        T w = make_weights(Shape4{2, 2, 6, 6}, rng);
        run("conv_transpose2d",
            gradcheck_case({&x, &p.weight, &p.bias},
                           [&] { return weighted(conv_transpose2d(x, p), w); }));
    }
    // relu (inputs kept clear of the kink)
    {
        T x = random_tensor(Shape4{2, 3, 6, 6}, rng);
        away_from_zero(x, 0.05);
        T w = make_weights(x.shape, rng);
        run("relu", gradcheck_case({&x}, [&] { return weighted(relu(x), w); }));
    }
    // sigmoid
    {
        T x = random_tensor(Shape4{2, 3, 6, 6}, rng, -3.0, 3.0);
        T w = make_weights(x.shape, rng);
        run("sigmoid", gradcheck_case({&x}, [&] { return weighted(sigmoid(x), w); }));
    }
    // concat_channels
    {
        T a = random_tensor(Shape4{2, 2, 5, 5}, rng);
        T b = random_tensor(Shape4{2, 3, 5, 5}, rng);
        T c = random_tensor(Shape4{2, 1, 5, 5}, rng);
        T w = make_weights(Shape4{2, 6, 5, 5}, rng);
        run("concat_channels",
            gradcheck_case({&a, &b, &c}, [&] {
                return weighted(concat_channels<double>({a, b, c}), w);
            }));
    }
    // add / scale
    {
        T a = random_tensor(Shape4{2, 3, 4, 4}, rng);
        T b = random_tensor(Shape4{2, 3, 4, 4}, rng);
        T w = make_weights(a.shape, rng);
        run("add", gradcheck_case({&a, &b}, [&] { return weighted(add(a, b), w); }));
        run("scale", gradcheck_case({&a}, [&] { return weighted(scale(a, 0.37), w); }));
    }
    // mul_broadcast against a spatial (N,1,H,W) gate
    {
        T x = random_tensor(Shape4{2, 3, 4, 4}, rng);
        T a = random_tensor(Shape4{2, 1, 4, 4}, rng);
        T w = make_weights(x.shape, rng);
        run("mul_broadcast_spatial",
            gradcheck_case({&x, &a}, [&] { return weighted(mul_broadcast(x, a), w); }));
    }
    // mul_broadcast against a channel (N,C,1,1) gate
    {
        T x = random_tensor(Shape4{2, 3, 4, 4}, rng);
        T a = random_tensor(Shape4{2, 3, 1, 1}, rng);
        T w = make_weights(x.shape, rng);
        run("mul_broadcast_channel",
            gradcheck_case({&x, &a}, [&] { return weighted(mul_broadcast(x, a), w); }));
    }
    // pooling reductions
    {
        T x = random_tensor(Shape4{2, 3, 5, 5}, rng);
        T wg = make_weights(Shape4{2, 3, 1, 1}, rng);
        run("spatial_gap",
            gradcheck_case({&x}, [&] { return weighted(spatial_gap(x), wg); }));
        T wm = make_weights(Shape4{2, 1, 5, 5}, rng);
        run("channel_mean",
            gradcheck_case({&x}, [&] { return weighted(channel_mean(x), wm); }));
    }
    {
        T x = random_tensor(Shape4{2, 3, 5, 5}, rng);
        separate_channels(x, 1e-2, rng);
        T wm = make_weights(Shape4{2, 1, 5, 5}, rng);
        run("channel_max",
            gradcheck_case({&x}, [&] { return weighted(channel_max(x), wm); }));
    }
    // pad / crop
    {
        T x = random_tensor(Shape4{1, 2, 4, 4}, rng);
        T wz = make_weights(Shape4{1, 2, 7, 8}, rng);
        run("pad_zero", gradcheck_case({&x}, [&] {
                return weighted(pad(x, 1, 2, 1, 3, PadMode::Zero), wz);
            }));
        run("pad_reflect", gradcheck_case({&x}, [&] {
                return weighted(pad(x, 1, 2, 1, 3, PadMode::Reflect), wz);
            }));
        T wc = make_weights(Shape4{1, 2, 2, 3}, rng);
        run("crop", gradcheck_case({&x}, [&] { return weighted(crop(x, 1, 0, 2, 3), wc); }));
    }
    // losses
    {
        T x = random_tensor(Shape4{2, 1, 5, 5}, rng);
        T gt = random_tensor(Shape4{2, 1, 5, 5}, rng);
        run("mse_loss", gradcheck_case({&x}, [&] { return mse_loss(x, gt); }));

        T wl = make_weights(x.shape, rng);
        run("laplacian", gradcheck_case({&x}, [&] { return weighted(laplacian(x), wl); }));

        LossConfig cfg;
        cfg.mode = LossMode::CharbonnierEdge;
        run("charbonnier_edge_loss",
            gradcheck_case({&x}, [&] { return charbonnier_edge_loss(x, gt, cfg); }));

        // Near-identical inputs: the epsilon term keeps the root smooth. The
        // FD step must sit well below epsilon, the curvature scale here.
        T xe = gt.clone();
        for (Index i = 0; i < xe.numel(); ++i) (*xe.data)[i] += rng.next_uniform(-1e-6, 1e-6);
        run("charbonnier_edge_loss_near_gt",
            gradcheck_case({&xe}, [&] { return charbonnier_edge_loss(xe, gt, cfg); }, 1e-6));
    }
    // total_loss over both stage outputs
    {
        T x1 = random_tensor(Shape4{1, 1, 5, 5}, rng);
        T x2 = random_tensor(Shape4{1, 1, 5, 5}, rng);
        T gt = random_tensor(Shape4{1, 1, 5, 5}, rng);
        LossConfig cfg;
        run("total_loss_mse",
            gradcheck_case({&x1, &x2}, [&] { return total_loss(x1, x2, gt, cfg); }));
    }
    // composite modules
    {
        Rng prng(7);
        RdamParams<double> p = make_rdam<double>(4, 2, prng);
        T x = random_tensor(Shape4{1, 4, 6, 6}, rng);
        T w = make_weights(x.shape, rng);
        std::vector<T*> inputs{&x};
        for (auto& layer : p.db.layers) {
            inputs.push_back(&layer.weight);
            inputs.push_back(&layer.bias);
        }
        inputs.push_back(&p.db.fusion.weight);
        inputs.push_back(&p.db.fusion.bias);
        inputs.push_back(&p.sab.conv.weight);
        inputs.push_back(&p.sab.conv.bias);
        run("rdam", gradcheck_case(inputs, [&] { return weighted(rdam(x, p), w); }));
    }
    {
        Rng prng(11);
        HdrdamParams<double> p =
            make_hdrdam<double>(4, 2, {1, 2, 3, 4, 4, 3, 2, 1}, 2, prng);
        T x = random_tensor(Shape4{1, 4, 6, 6}, rng);
        T w = make_weights(x.shape, rng);
        std::vector<T*> inputs{&x};
        for (auto& layer : p.db.layers) {
            inputs.push_back(&layer.weight);
            inputs.push_back(&layer.bias);
        }
        inputs.push_back(&p.db.fusion.weight);
        inputs.push_back(&p.db.fusion.bias);
        inputs.push_back(&p.cab.reduce.weight);
        inputs.push_back(&p.cab.reduce.bias);
        inputs.push_back(&p.cab.expand.weight);
        inputs.push_back(&p.cab.expand.bias);
        run("hdrdam", gradcheck_case(inputs, [&] { return weighted(hdrdam(x, p), w); }));
    }
    return reports;
}

}  // namespace tsdn
