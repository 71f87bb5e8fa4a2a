#include <gtest/gtest.h>

#include <cmath>

#include "rmppi/core.hpp"
#include "rmppi/nn.hpp"

using namespace rmppi;

TEST(Mlp, TinyForwardByHand) {
    Mlp net({2, 2, 1}, Activation::relu);
    // layer 0: W = [[1, 2], [3, 4]], b = [0.5, -10]
    // layer 1: W = [[1, 1]], b = [0.25]
    net.params() = {1, 2, 3, 4, 0.5, -10, 1, 1, 0.25};
    Vec out = net.forward({1.0, 1.0});
    // pre = [3.5, -3] -> relu [3.5, 0] -> 3.5 + 0.25
    ASSERT_EQ(out.size(), 1u);
    EXPECT_DOUBLE_EQ(out[0], 3.75);
}

TEST(Mlp, MishMatchesDefinition) {
    double x = 0.7;
    double sp = std::log1p(std::exp(x));
    EXPECT_NEAR(detail::act_value(Activation::mish, x), x * std::tanh(sp), 1e-15);
    EXPECT_NEAR(detail::act_value(Activation::mish, 30.0), 30.0, 1e-9);  // saturated softplus
}

static double fd_loss(Mlp& net, const Vec& in, const Vec& target) {
    Vec out = net.forward(in);
    double l = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double d = out[i] - target[i];
        l += d * d;
    }
    return l;
}

static void check_gradients(Activation act, unsigned seed) {
    Mlp net({3, 5, 4, 2}, act);
    RngStream rng(seed);
    net.init(rng);
    Vec in = {0.3, -0.7, 1.1};
    Vec target = {0.5, -0.2};

    MlpCache cache;
    Vec out = net.forward_cached(in, cache);
    Vec d_out(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) d_out[i] = 2.0 * (out[i] - target[i]);
    Vec grad(net.n_params(), 0.0);
    Vec d_in = net.backward(cache, d_out, grad);

    const double h = 1e-6;
    Vec p = net.params();
    for (std::size_t i = 0; i < p.size(); ++i) {
        Vec pp = p, pm = p;
        pp[i] += h;
        pm[i] -= h;
        net.params() = pp;
        double lp = fd_loss(net, in, target);
        net.params() = pm;
        double lm = fd_loss(net, in, target);
        net.params() = p;
        double fd = (lp - lm) / (2 * h);
        double denom = std::max({std::fabs(fd), std::fabs(grad[i]), 1e-8});
        EXPECT_LT(std::fabs(fd - grad[i]) / denom, 1e-4)
            << "param " << i << " analytic " << grad[i] << " fd " << fd;
    }
    for (std::size_t i = 0; i < in.size(); ++i) {
        Vec ip = in, im = in;
        ip[i] += h;
        im[i] -= h;
        double fd = (fd_loss(net, ip, target) - fd_loss(net, im, target)) / (2 * h);
        double denom = std::max({std::fabs(fd), std::fabs(d_in[i]), 1e-8});
        EXPECT_LT(std::fabs(fd - d_in[i]) / denom, 1e-4) << "input " << i;
    }
}

TEST(Mlp, GradientsMatchFiniteDifferencesRelu) { check_gradients(Activation::relu, 42); }
TEST(Mlp, GradientsMatchFiniteDifferencesTanh) { check_gradients(Activation::tanh, 43); }
TEST(Mlp, GradientsMatchFiniteDifferencesMish) { check_gradients(Activation::mish, 44); }

TEST(Mlp, InitStaysInGlorotBounds) {
    Mlp net({10, 20, 5}, Activation::tanh);
    RngStream rng(1);
    net.init(rng);
    const Vec& p = net.params();
    double bound0 = std::sqrt(6.0 / (10 + 20));
    for (std::size_t i = 0; i < 200; ++i) EXPECT_LE(std::fabs(p[i]), bound0);
    // biases are zero
    for (std::size_t i = 200; i < 220; ++i) EXPECT_EQ(p[i], 0.0);
}

TEST(Adam, FirstStepMatchesClosedForm) {
    Mlp net({1, 1}, Activation::relu);
    net.params() = {2.0, 0.0};
    AdamState st(net.n_params());
    Vec grad = {0.5, -0.25};
    adam_step(net, grad, st, 0.1);
    // t=1: mhat = g, vhat = g^2, step = lr * g / (|g| + eps) ~= lr * sign(g)
    double expected_w = 2.0 - 0.1 * 0.5 / (std::sqrt(0.25) + 1e-8);
    double expected_b = 0.0 - 0.1 * (-0.25) / (std::sqrt(0.0625) + 1e-8);
    EXPECT_NEAR(net.params()[0], expected_w, 1e-12);
    EXPECT_NEAR(net.params()[1], expected_b, 1e-12);
    EXPECT_EQ(st.t, 1);
}

TEST(Adam, DrivesQuadraticToMinimum) {
    Mlp net({1, 1}, Activation::relu);
    net.params() = {5.0, 3.0};
    AdamState st(net.n_params());
    // minimize (w - 1)^2 + (b + 2)^2
    for (int i = 0; i < 4000; ++i) {
        Vec grad = {2 * (net.params()[0] - 1.0), 2 * (net.params()[1] + 2.0)};
        adam_step(net, grad, st, 0.01);
    }
    EXPECT_NEAR(net.params()[0], 1.0, 1e-3);
    EXPECT_NEAR(net.params()[1], -2.0, 1e-3);
}

TEST(Adam, RejectsNonFiniteGradientNamingLayer) {
    Mlp net({2, 3, 1}, Activation::relu);
    RngStream rng(5);
    net.init(rng);
    AdamState st(net.n_params());
    Vec grad(net.n_params(), 0.0);
    grad[net.n_params() - 1] = std::nan("");  // last layer bias
    try {
        adam_step(net, grad, st, 0.01);
        FAIL() << "expected rejection";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos);
    }
}

TEST(Mlp, SaveLoadRoundTrip) {
    Mlp net({4, 7, 3}, Activation::mish);
    RngStream rng(9);
    net.init(rng);
    std::string path = testing::TempDir() + "net.rsa";
    net.save_file(path);
    Mlp loaded = Mlp::load_file(path);
    EXPECT_EQ(loaded.dims(), net.dims());
    EXPECT_EQ(loaded.activation(), net.activation());
    ASSERT_EQ(loaded.params().size(), net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i)
        EXPECT_EQ(loaded.params()[i], net.params()[i]);
    Vec in = {0.1, -0.2, 0.3, -0.4};
    Vec a = net.forward(in), b = loaded.forward(in);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Mlp, LoadRejectsShapeMismatch) {
    Mlp net({2, 3, 1}, Activation::relu);
    RngStream rng(4);
    net.init(rng);
    ArrayFile f;
    net.save(f);
    // corrupt: drop a weight matrix dimension
    ArrayFile bad;
    for (const auto& e : f.entries()) {
        if (e.name == "W0") {
            ArrayEntry w = e;
            w.dims = {3, 1};
            w.data.resize(3);
            bad.add(w.name, w.dims, w.data);
        } else {
            bad.add(e.name, e.dims, e.data);
        }
    }
    std::string path = testing::TempDir() + "badnet.rsa";
    bad.save(path);
    EXPECT_THROW(Mlp::load_file(path), IoError);
}
