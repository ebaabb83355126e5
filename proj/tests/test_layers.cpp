#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "smmkit/layers.hpp"

using namespace smm;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    return rand_normal(rng, std::move(shape), 0.0, scale);
}

} // namespace

TEST_CASE("conv1d keeps the declared output width") {
    Conv1DLayer conv(4, 9, 9);
    Rng rng(1);
    conv.init_normal(rng, 0.1);
    const Tensor x = random_tensor(rng, {9, 100});
    const Tensor out = conv.forward(x);
    CHECK(out.shape() == std::vector<std::size_t>{4, 100});
}

TEST_CASE("conv1d with a centered unit impulse sums the channels unshifted") {
    Conv1DLayer conv(1, 2, 9);
    // 1-based tap ceil(9/2) = 5 -> 0-based index 4.
    conv.filters.at(0, 0, 4) = 1.0;
    conv.filters.at(0, 1, 4) = 1.0;
    Rng rng(2);
    const Tensor x = random_tensor(rng, {2, 31});
    const Tensor out = conv.forward(x);
    for (std::size_t j = 0; j < 31; ++j) {
        CHECK(out.at(0, j) == doctest::Approx(x.at(0, j) + x.at(1, j)).epsilon(1e-15));
    }
}

TEST_CASE("conv1d matches the brute-force oracle") {
    Rng rng(3);
    Conv1DLayer conv(3, 2, 3);
    conv.init_normal(rng, 0.7);
    conv.bias = random_tensor(rng, {3});
    const Tensor x = random_tensor(rng, {2, 7});
    const Tensor got = conv.forward(x);
    const Tensor want = oracle::conv1d_reference(x, conv.filters, conv.bias);
    REQUIRE(got.same_shape(want));
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(std::abs(got[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("conv1d forward equals the oracle on 100 random instances") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t f = 1 + rng.next_index(3);
        const std::size_t c = 1 + rng.next_index(3);
        const std::size_t m = 1 + rng.next_index(7);
        const std::size_t width = 1 + rng.next_index(12);
        Conv1DLayer conv(f, c, m);
        conv.filters = rand_normal(rng, {f, c, m}, 0.0, 3.0);
        conv.bias = rand_normal(rng, {f}, 0.0, 1.0);
        const Tensor x = rand_normal(rng, {c, width}, 0.0, 3.0);
        const Tensor got = conv.forward(x);
        const Tensor want = oracle::conv1d_reference(x, conv.filters, conv.bias);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - want[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv1d channel mismatch and backward-before-forward errors") {
    Conv1DLayer conv(2, 3, 3);
    CHECK_THROWS_AS(conv.forward(Tensor({2, 10})), DimensionError);
    Conv1DLayer fresh(2, 3, 3);
    CHECK_THROWS_AS(fresh.backward(Tensor({2, 10})), StateError);
}

TEST_CASE("conv1d backward: linearity, shapes and finite differences") {
    Rng rng(5);
    Conv1DLayer conv(3, 2, 5);
    conv.init_normal(rng, 0.5);
    const Tensor x = random_tensor(rng, {2, 9});
    (void)conv.forward(x);
    const Tensor zero_grad({3, 9});
    conv.zero_grads();
    const Tensor grad_in = conv.backward(zero_grad);
    for (std::size_t i = 0; i < grad_in.size(); ++i) CHECK(grad_in[i] == 0.0);
    CHECK(conv.filters_grad().same_shape(conv.filters));
    for (std::size_t i = 0; i < conv.filters_grad().size(); ++i) {
        CHECK(conv.filters_grad()[i] == 0.0);
    }

    // Finite differences of a scalar loss sum(out * weights_r).
    const Tensor weight_r = random_tensor(rng, {3, 9});
    auto loss = [&]() {
        Conv1DLayer probe(3, 2, 5);
        probe.filters = conv.filters;
        probe.bias = conv.bias;
        const Tensor out = probe.forward(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weight_r[i];
        return acc;
    };
    conv.zero_grads();
    (void)conv.forward(x);
    const Tensor analytic_in = conv.backward(weight_r);
    std::vector<ParamBinding> binds;
    conv.bind_params("conv", binds);
    std::vector<Tensor> analytic;
    for (auto& b : binds) analytic.push_back(*b.grad);
    const auto report = oracle::check_gradients(binds, analytic, loss, 1e-6);
    CHECK(report.max_rel_err < 1e-4);

    // grad_b[k] = sum_j grad_out[k][j].
    for (std::size_t k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 9; ++j) acc += weight_r.at(k, j);
        CHECK(conv.bias_grad()[k] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("relu definition and gradient routing") {
    ReluLayer relu;
    const Tensor x({3}, {-1.0, 0.0, 2.0});
    const Tensor y = relu.forward(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 2.0);
    const Tensor g({3}, {5.0, 7.0, 9.0});
    const Tensor gi = relu.backward(g);
    CHECK(gi[0] == 0.0);
    CHECK(gi[1] == 0.0); // subgradient at 0 is 0
    CHECK(gi[2] == 9.0);

    Rng rng(6);
    ReluLayer relu2;
    const Tensor pos = Tensor::full({4}, 3.0);
    CHECK(relu2.forward(pos) == pos);
    const Tensor gpos = random_tensor(rng, {4});
    CHECK(relu2.backward(gpos) == gpos);
}

TEST_CASE("relu finite differences away from the kink") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {10});
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) < 1e-3) x[i] = 0.1; // keep clear of the kink
    }
    ReluLayer relu;
    const Tensor w = random_tensor(rng, {10});
    (void)relu.forward(x);
    const Tensor analytic = relu.backward(w);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        ReluLayer probe;
        x[i] = saved + 1e-6;
        Tensor up = probe.forward(x);
        double lup = 0.0;
        for (std::size_t k = 0; k < up.size(); ++k) lup += up[k] * w[k];
        x[i] = saved - 1e-6;
        Tensor down = probe.forward(x);
        double ldown = 0.0;
        for (std::size_t k = 0; k < down.size(); ++k) ldown += down[k] * w[k];
        x[i] = saved;
        const double fd = (lup - ldown) / 2e-6;
        CHECK(oracle::rel_err(fd, analytic[i]) < 1e-4);
    }
}

TEST_CASE("pooling lengths match the stage arithmetic") {
    CHECK(PoolLayer::output_length(100, 3, 2) == 49);
    CHECK(PoolLayer::output_length(49, 3, 2) == 24);
    CHECK(PoolLayer::output_length(24, 3, 2) == 11);
    PoolLayer pool(3, 2, PoolMode::max);
    Rng rng(8);
    const Tensor x = random_tensor(rng, {4, 100});
    CHECK(pool.forward(x).shape() == std::vector<std::size_t>{4, 49});
}

TEST_CASE("average pooling of a constant is that constant") {
    PoolLayer pool(3, 2, PoolMode::average);
    const Tensor x = Tensor::full({2, 11}, 4.25);
    const Tensor y = pool.forward(x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 4.25);
}

TEST_CASE("max pooling matches the scan oracle and routes gradients to argmax") {
    Rng rng(9);
    PoolLayer pool(3, 2, PoolMode::max);
    const Tensor x = random_tensor(rng, {1, 10});
    const Tensor y = pool.forward(x);
    const Tensor want = oracle::pool_reference(x, 3, 2, true);
    REQUIRE(y.same_shape(want));
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == want[i]);

    const Tensor g({1, 4}, {1.0, 2.0, 3.0, 4.0});
    const Tensor gi = pool.backward(g);
    for (std::size_t j = 0; j < 4; ++j) {
        // Find the argmax by scan and confirm the gradient landed there.
        std::size_t best = j * 2;
        for (std::size_t k = 1; k < 3; ++k) {
            if (x.at(0, j * 2 + k) > x.at(0, best)) best = j * 2 + k;
        }
        CHECK(gi.at(0, best) >= g.at(0, j));
    }
}

TEST_CASE("pooling forward equals the oracle on 100 random instances") {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t rows = 1 + rng.next_index(3);
        const std::size_t p = 1 + rng.next_index(4);
        const std::size_t u = 1 + rng.next_index(3);
        const std::size_t width = p + rng.next_index(12);
        const bool max_mode = rng.next_index(2) == 0;
        PoolLayer pool(p, u, max_mode ? PoolMode::max : PoolMode::average);
        const Tensor x = rand_normal(rng, {rows, width}, 0.0, 3.0);
        const Tensor got = pool.forward(x);
        const Tensor want = oracle::pool_reference(x, p, u, max_mode);
        REQUIRE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - want[i]) < 1e-12);
        }
    }
}

TEST_CASE("max-pool gradient ties break to the earliest index") {
    PoolLayer pool(3, 3, PoolMode::max);
    const Tensor x({1, 3}, {2.0, 2.0, 2.0});
    (void)pool.forward(x);
    const Tensor gi = pool.backward(Tensor({1, 1}, {5.0}));
    CHECK(gi.at(0, 0) == 5.0);
    CHECK(gi.at(0, 1) == 0.0);
    CHECK(gi.at(0, 2) == 0.0);
}

TEST_CASE("pooling rejects windows longer than the input") {
    PoolLayer pool(5, 2, PoolMode::max);
    CHECK_THROWS_AS(pool.forward(Tensor({1, 4})), DimensionError);
}

TEST_CASE("dense identity, bias and finite differences") {
    DenseLayer dense(3, 3);
    dense.weights = Tensor::identity(3);
    Rng rng(11);
    const Tensor x = random_tensor(rng, {3});
    CHECK(dense.forward(x) == x);

    DenseLayer with_bias(2, 3);
    with_bias.bias = Tensor({2}, {1.5, -2.5});
    const Tensor zero({3});
    const Tensor out = with_bias.forward(zero);
    CHECK(out[0] == 1.5);
    CHECK(out[1] == -2.5);

    DenseLayer fd(4, 5);
    fd.init_normal(rng, 0.5);
    const Tensor input = random_tensor(rng, {5});
    const Tensor wr = random_tensor(rng, {4});
    auto loss = [&]() {
        DenseLayer probe(4, 5);
        probe.weights = fd.weights;
        probe.bias = fd.bias;
        const Tensor o = probe.forward(input);
        double acc = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i) acc += o[i] * wr[i];
        return acc;
    };
    fd.zero_grads();
    (void)fd.forward(input);
    const Tensor grad_in = fd.backward(wr);
    std::vector<ParamBinding> binds;
    fd.bind_params("dense", binds);
    std::vector<Tensor> analytic;
    for (auto& b : binds) analytic.push_back(*b.grad);
    const auto report = oracle::check_gradients(binds, analytic, loss, 1e-6);
    CHECK(report.max_rel_err < 1e-4);

    // grad_in = W^T grad_out by direct summation.
    for (std::size_t j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 4; ++i) acc += fd.weights.at(i, j) * wr[i];
        CHECK(grad_in[j] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("dropout identity contracts") {
    DropoutLayer off(0.0);
    Rng rng(12);
    off.set_rng(&rng);
    const Tensor x = random_tensor(rng, {64});
    off.set_mode(Mode::train);
    CHECK(off.forward(x) == x);
    off.set_mode(Mode::infer);
    CHECK(off.forward(x) == x);

    DropoutLayer half(0.5);
    half.set_mode(Mode::infer);
    CHECK(half.forward(x) == x);
    // Composed with a layer in infer mode it is bitwise that layer alone.
    ReluLayer relu;
    const Tensor through = relu.forward(half.forward(x));
    ReluLayer relu_alone;
    CHECK(through == relu_alone.forward(x));

    CHECK_THROWS_AS(DropoutLayer(1.0), ArgumentError);
    CHECK_THROWS_AS(DropoutLayer(-0.1), ArgumentError);
}

TEST_CASE("dropout statistics at rate 0.5") {
    DropoutLayer drop(0.5);
    Rng rng(13);
    drop.set_rng(&rng);
    drop.set_mode(Mode::train);
    const std::size_t n = 100000;
    const Tensor x = Tensor::full({n}, 1.0);
    const Tensor y = drop.forward(x);
    std::size_t survivors = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] != 0.0) {
            ++survivors;
            CHECK(y[i] == doctest::Approx(2.0)); // inverted scaling 1/(1-rate)
        }
        sum += y[i];
    }
    const double survivor_fraction = static_cast<double>(survivors) / static_cast<double>(n);
    CHECK(std::abs(survivor_fraction - 0.5) < 0.01);
    CHECK(std::abs(sum / static_cast<double>(n) - 1.0) < 0.02);

    // Backward applies the same mask and scale.
    const Tensor g = Tensor::full({n}, 1.0);
    const Tensor gi = drop.backward(g);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(gi[i] == y[i]);
    }
}

TEST_CASE("softmax cross-entropy values, stability and gradient") {
    const Tensor z({2}, {0.0, 0.0});
    const SoftmaxXent even = softmax_xent(z, 0);
    CHECK(even.probs[0] == doctest::Approx(0.5));
    CHECK(even.probs[1] == doctest::Approx(0.5));
    CHECK(even.loss == doctest::Approx(std::log(2.0)));

    const Tensor huge({2}, {1000.0, 0.0});
    const SoftmaxXent big = softmax_xent(huge, 0);
    CHECK(big.probs[0] == doctest::Approx(1.0));
    CHECK(big.probs[1] == doctest::Approx(0.0));
    CHECK(std::isfinite(big.loss));

    CHECK_THROWS_AS(softmax_xent(z, 2), ArgumentError);

    Rng rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + rng.next_index(4);
        Tensor logits = rand_normal(rng, {k}, 0.0, 2.0);
        const std::size_t label = rng.next_index(k);
        const SoftmaxXent sx = softmax_xent(logits, label);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(sx.probs[i] >= 0.0);
            CHECK(sx.probs[i] <= 1.0);
            total += sx.probs[i];
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
        for (std::size_t i = 0; i < k; ++i) {
            const double saved = logits[i];
            logits[i] = saved + 1e-6;
            const double up = softmax_xent(logits, label).loss;
            logits[i] = saved - 1e-6;
            const double down = softmax_xent(logits, label).loss;
            logits[i] = saved;
            const double fd = (up - down) / 2e-6;
            CHECK(oracle::rel_err(fd, sx.grad_z[i]) < 1e-4);
        }
    }
}

TEST_CASE("forward passes keep finite inputs finite") {
    Rng rng(15);
    Conv1DLayer conv(2, 2, 3);
    conv.init_normal(rng, 5.0);
    const Tensor x = rand_normal(rng, {2, 20}, 0.0, 10.0);
    CHECK(conv.forward(x).all_finite());
    PoolLayer pool(3, 2, PoolMode::average);
    CHECK(pool.forward(x).all_finite());
    CHECK(map_sigmoid(rand_normal(rng, {50}, 0.0, 200.0)).all_finite());
}
