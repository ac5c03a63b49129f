#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "crowdcount/nn.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace crowdcount;

TEST_CASE("1x1 identity kernel passes the input through") {
    ParamStore store;
    ConvLayer layer = make_conv(store, "c", {.in_channels = 1, .out_channels = 1, .kernel = 1});
    layer.weight->value[0] = 1.0;
    Rng rng(1);
    const Tensor in = testutil::random_tensor(rng, 1, 3, 3);
    const Tensor out = conv2d_forward(in, layer);
    CHECK(out.data == in.data);
}

TEST_CASE("k2 s2 all-ones kernel block-sums a 4x4 of ones") {
    ParamStore store;
    ConvLayer layer =
        make_conv(store, "c", {.in_channels = 1, .out_channels = 1, .kernel = 2, .stride = 2});
    for (double& w : layer.weight->value) w = 1.0;
    const Tensor in(1, 4, 4, 1.0);
    const Tensor out = conv2d_forward(in, layer);
    REQUIRE(out.height == 2);
    REQUIRE(out.width == 2);
    for (double v : out.data) CHECK(v == 4.0);
}

TEST_CASE("conv2d matches the gather-style oracle") {
    Rng rng(42);
    struct Case {
        ConvSpec spec;
        int h, w;
    };
    const Case cases[] = {
        {{.in_channels = 2, .out_channels = 3, .kernel = 3, .stride = 1, .dilation = 2, .padding = 2}, 9, 7},
        {{.in_channels = 3, .out_channels = 2, .kernel = 3, .stride = 2, .dilation = 1, .padding = 1}, 8, 8},
        {{.in_channels = 1, .out_channels = 4, .kernel = 2, .stride = 2, .dilation = 1, .padding = 0}, 6, 10},
        {{.in_channels = 2, .out_channels = 2, .kernel = 1, .stride = 1, .dilation = 1, .padding = 0}, 5, 5},
        {{.in_channels = 2, .out_channels = 1, .kernel = 3, .stride = 1, .dilation = 3, .padding = 3}, 11, 12},
    };
    int id = 0;
    for (const Case& c : cases) {
        ParamStore store;
        ConvLayer layer = make_conv(store, "c" + std::to_string(id++), c.spec);
        he_init(layer, rng);
        for (double& b : layer.bias->value) b = rng.uniform(-0.5, 0.5);
        const Tensor in = testutil::random_tensor(rng, c.spec.in_channels, c.h, c.w);
        const Tensor got = conv2d_forward(in, layer);
        const Tensor want = oracle::conv2d(in, layer);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.data.size(); ++i)
            CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects channel mismatches") {
    ParamStore store;
    ConvLayer layer = make_conv(store, "c", {.in_channels = 2, .out_channels = 1});
    CHECK_THROWS_AS(conv2d_forward(Tensor(3, 8, 8), layer), std::invalid_argument);
}

TEST_CASE("conv2d is linear in the input when bias-free") {
    Rng rng(5);
    ParamStore store;
    ConvLayer layer = make_conv(
        store, "c", {.in_channels = 2, .out_channels = 2, .kernel = 3, .stride = 1, .padding = 1});
    he_init(layer, rng);
    const Tensor x = testutil::random_tensor(rng, 2, 6, 6);
    const Tensor y = testutil::random_tensor(rng, 2, 6, 6);
    const double a = 1.7, b = -0.4;
    Tensor axby(2, 6, 6);
    for (std::size_t i = 0; i < axby.data.size(); ++i)
        axby.data[i] = a * x.data[i] + b * y.data[i];
    const Tensor lhs = conv2d_forward(axby, layer);
    const Tensor cx = conv2d_forward(x, layer);
    const Tensor cy = conv2d_forward(y, layer);
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        CHECK(std::abs(lhs.data[i] - (a * cx.data[i] + b * cy.data[i])) < 1e-10);
}

TEST_CASE("relu clamps negatives and keeps positives") {
    Tensor neg(1, 2, 2, -3.0);
    for (double v : relu(neg).data) CHECK(v == 0.0);
    Tensor pos(1, 2, 2, 3.0);
    CHECK(relu(pos).data == pos.data);
    Rng rng(8);
    const Tensor mixed = testutil::random_tensor(rng, 2, 3, 3);
    const Tensor out = relu(mixed);
    for (std::size_t i = 0; i < mixed.data.size(); ++i)
        CHECK(out.data[i] == (mixed.data[i] > 0.0 ? mixed.data[i] : 0.0));
}

TEST_CASE("concat_channels stacks and can be sliced back") {
    Rng rng(9);
    const Tensor a = testutil::random_tensor(rng, 2, 4, 4);
    const Tensor b = testutil::random_tensor(rng, 3, 4, 4);
    const Tensor cat = concat_channels({a, b});
    REQUIRE(cat.channels == 5);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(cat.at(c, y, x) == a.at(c, y, x));
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) CHECK(cat.at(2 + c, y, x) == b.at(c, y, x));

    const Tensor single = concat_channels({a});
    CHECK(single.data == a.data);
    CHECK_THROWS_AS(concat_channels({a, Tensor(1, 3, 4)}), std::invalid_argument);
}

TEST_CASE("mse_loss sums squared differences") {
    Tensor p(1, 2, 3, 1.0), t(1, 2, 3, 1.0);
    auto [zero_loss, zero_grad] = mse_loss(p, t);
    CHECK(zero_loss == 0.0);
    for (double g : zero_grad.data) CHECK(g == 0.0);

    for (double& v : p.data) v += 1.0;
    CHECK(mse_loss(p, t).first == 6.0); // N elements, offset 1

    Rng rng(10);
    const Tensor a = testutil::random_tensor(rng, 2, 4, 4);
    const Tensor b = testutil::random_tensor(rng, 2, 4, 4);
    auto [loss, grad] = mse_loss(a, b);
    double want = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        want += d * d;
        CHECK(grad.data[i] == doctest::Approx(2.0 * d).epsilon(1e-12));
    }
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_AS(mse_loss(a, Tensor(2, 4, 5)), std::invalid_argument);
}

TEST_CASE("backward on a scalar 1x1 conv matches the hand-derived chain rule") {
    ParamStore store;
    ConvLayer layer = make_conv(store, "c", {.in_channels = 1, .out_channels = 1, .kernel = 1});
    const double w = 0.8, b = -0.3, x = 1.7, t = 2.0;
    layer.weight->value[0] = w;
    layer.bias->value[0] = b;

    Tape tape;
    const auto in = tape.input(Tensor(1, 1, 1, x));
    const auto out = tape.conv2d(in, layer);
    Tensor target(1, 1, 1, t);
    auto [loss, grad] = mse_loss(tape.value(out), target);
    CHECK(loss == doctest::Approx((w * x + b - t) * (w * x + b - t)));
    tape.backward({{out, grad}});

    const double r = 2.0 * (w * x + b - t);
    CHECK(layer.weight->grad[0] == doctest::Approx(r * x).epsilon(1e-12));
    CHECK(layer.bias->grad[0] == doctest::Approx(r).epsilon(1e-12));
    CHECK(tape.grad(in).data[0] == doctest::Approx(r * w).epsilon(1e-12));
}

TEST_CASE("zero seed gradient leaves all parameter gradients zero") {
    Rng rng(12);
    ParamStore store;
    ConvLayer layer = make_conv(
        store, "c", {.in_channels = 1, .out_channels = 2, .kernel = 3, .stride = 1, .padding = 1});
    he_init(layer, rng);
    Tape tape;
    const auto in = tape.input(testutil::random_tensor(rng, 1, 5, 5));
    const auto out = tape.relu(tape.conv2d(in, layer));
    store.zero_grad();
    tape.backward({{out, Tensor(2, 5, 5, 0.0)}});
    for (double g : layer.weight->grad) CHECK(g == 0.0);
    for (double g : layer.bias->grad) CHECK(g == 0.0);
}

TEST_CASE("finite differences confirm gradients of each op and a composed stack") {
    Rng rng(13);
    ParamStore store;
    ConvLayer conv1 = make_conv(
        store, "c1",
        {.in_channels = 1, .out_channels = 3, .kernel = 3, .stride = 2, .padding = 1});
    ConvLayer conv2 = make_conv(
        store, "c2",
        {.in_channels = 3, .out_channels = 2, .kernel = 3, .stride = 1, .dilation = 2, .padding = 2});
    ConvLayer conv3 = make_conv(
        store, "c3", {.in_channels = 5, .out_channels = 1, .kernel = 2, .stride = 2});
    he_init(conv1, rng);
    he_init(conv2, rng);
    he_init(conv3, rng);
    for (double& b : conv1.bias->value) b = rng.uniform(-0.2, 0.2);

    const Tensor image = testutil::random_tensor(rng, 1, 8, 8, 0.0, 1.0);
    const Tensor target = testutil::random_tensor(rng, 1, 2, 2, 0.0, 2.0);

    // stack with fan-out: conv1 feeds conv2 and, concatenated with conv2's
    // output, conv3
    auto loss_fn = [&]() {
        Tape tape;
        const auto in = tape.input(image);
        const auto e = tape.relu(tape.conv2d(in, conv1));      // 3 x 4 x 4
        const auto d = tape.relu(tape.conv2d(e, conv2));       // 2 x 4 x 4
        const auto cat = tape.concat({e, d});                  // 5 x 4 x 4
        const auto out = tape.relu(tape.conv2d(cat, conv3));   // 1 x 2 x 2
        return mse_loss(tape.value(out), target).first;
    };

    store.zero_grad();
    {
        Tape tape;
        const auto in = tape.input(image);
        const auto e = tape.relu(tape.conv2d(in, conv1));
        const auto d = tape.relu(tape.conv2d(e, conv2));
        const auto cat = tape.concat({e, d});
        const auto out = tape.relu(tape.conv2d(cat, conv3));
        auto [loss, grad] = mse_loss(tape.value(out), target);
        (void)loss;
        tape.backward({{out, grad}});
    }

    const GradCheckResult res = finite_difference_check(store, loss_fn);
    INFO("worst: ", res.worst_param, "[", res.worst_index, "] rel err ", res.max_rel_err);
    CHECK(res.ok(1e-4));
    CHECK(res.checked == static_cast<int>(store.total_size()));
}

TEST_CASE("adam leaves parameters untouched on zero gradients") {
    ParamStore store;
    Parameter& p = store.create("p", {3});
    p.value = {1.0, -2.0, 3.0};
    const std::vector<double> before = p.value;
    store.adam_step({.lr = 0.5});
    CHECK(p.value == before);
}

TEST_CASE("first adam step moves by about lr against the gradient sign") {
    ParamStore store;
    Parameter& p = store.create("p", {2});
    p.value = {0.0, 0.0};
    p.grad = {0.5, -2.0};
    const AdamConfig cfg{.lr = 0.01, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
    store.adam_step(cfg);
    CHECK(p.value[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p.value[1] == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients") {
    ParamStore store;
    Parameter& p = store.create("p", {1});
    p.grad[0] = std::nan("");
    CHECK_THROWS_AS(store.adam_step({}), std::runtime_error);
}

TEST_CASE("adam drives a 1-d quadratic to its minimum") {
    // production optimizer on f(x) = (x - 1)^2, tracked against a scalar
    // re-implementation of the same update
    ParamStore store;
    Parameter& p = store.create("x", {1});
    const AdamConfig cfg{.lr = 0.1, .beta1 = 0.8, .beta2 = 0.999, .eps = 1e-8};
    double sx = 0.0, sm = 0.0, sv = 0.0; // scalar shadow
    for (int t = 1; t <= 100; ++t) {
        store.zero_grad();
        p.grad[0] = 2.0 * (p.value[0] - 1.0);
        const double g = 2.0 * (sx - 1.0);
        store.adam_step(cfg);
        sm = cfg.beta1 * sm + (1 - cfg.beta1) * g;
        sv = cfg.beta2 * sv + (1 - cfg.beta2) * g * g;
        sx -= cfg.lr * (sm / (1 - std::pow(cfg.beta1, t))) /
              (std::sqrt(sv / (1 - std::pow(cfg.beta2, t))) + cfg.eps);
        CHECK(p.value[0] == doctest::Approx(sx).epsilon(1e-12));
    }
    CHECK(std::abs(p.value[0] - 1.0) < 1e-3);
}

TEST_CASE("checkpoints round trip and reject mismatched stores") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "crowdcount_nn_test";
    fs::create_directories(dir);
    const fs::path file = dir / "ckpt.pcn";

    Rng rng(14);
    ParamStore a;
    ConvLayer l1 = make_conv(a, "l1", {.in_channels = 1, .out_channels = 2, .kernel = 3});
    ConvLayer l2 = make_conv(a, "l2", {.in_channels = 2, .out_channels = 1, .kernel = 1});
    he_init(l1, rng);
    he_init(l2, rng);
    a.save(file);

    ParamStore b;
    make_conv(b, "l1", {.in_channels = 1, .out_channels = 2, .kernel = 3});
    make_conv(b, "l2", {.in_channels = 2, .out_channels = 1, .kernel = 1});
    b.load(file);
    CHECK(b.snapshot() == a.snapshot());

    ParamStore wrong;
    make_conv(wrong, "l1", {.in_channels = 1, .out_channels = 3, .kernel = 3});
    make_conv(wrong, "l2", {.in_channels = 3, .out_channels = 1, .kernel = 1});
    CHECK_THROWS_AS(wrong.load(file), std::runtime_error);
}

TEST_CASE("forward, backward and update are bit-deterministic") {
    auto run = [] {
        Rng rng(900);
        ParamStore store;
        ConvLayer layer = make_conv(
            store, "c", {.in_channels = 1, .out_channels = 2, .kernel = 3, .stride = 1, .padding = 1});
        he_init(layer, rng);
        const Tensor in = testutil::random_tensor(rng, 1, 6, 6);
        Tape tape;
        const auto out = tape.relu(tape.conv2d(tape.input(in), layer));
        auto [loss, grad] = mse_loss(tape.value(out), Tensor(2, 6, 6, 0.25));
        (void)loss;
        store.zero_grad();
        tape.backward({{out, grad}});
        store.adam_step({.lr = 0.05});
        return store.snapshot();
    };
    CHECK(run() == run());
}
