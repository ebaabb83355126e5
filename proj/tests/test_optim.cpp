#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "smmkit/optim.hpp"

using namespace smm;

namespace {

ParamSet single(const std::string& name, std::vector<double> values) {
    return {{name, Tensor::vector(std::move(values))}};
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("sgd momentum leaves params alone on zero gradient") {
    OptimizerState state = make_sgd_momentum(0.1);
    const ParamSet params = single("p", {1.0, -2.0, 3.0});
    const ParamSet grads = single("p", {0.0, 0.0, 0.0});
    const ParamSet out = sgd_momentum_step(state, params, grads);
    CHECK(out[0].value == params[0].value);
}

TEST_CASE("zero momentum reduces to plain gradient descent") {
    OptimizerState state = make_sgd_momentum(0.05, 0.0);
    const ParamSet params = single("p", {1.0, 2.0});
    const ParamSet grads = single("p", {10.0, -4.0});
    const ParamSet out = sgd_momentum_step(state, params, grads);
    CHECK(out[0].value[0] == doctest::Approx(1.0 - 0.05 * 10.0).epsilon(1e-15));
    CHECK(out[0].value[1] == doctest::Approx(2.0 + 0.05 * 4.0).epsilon(1e-15));
}

TEST_CASE("constant gradient builds the closed-form velocity") {
    const double eta = 0.01, mu = 0.9, g = 3.0;
    OptimizerState state = make_sgd_momentum(eta, mu);
    ParamSet params = single("p", {0.0});
    const ParamSet grads = single("p", {g});
    for (int k = 0; k < 5; ++k) params = sgd_momentum_step(state, params, grads);
    const double expected_v = -eta * g * (1.0 - std::pow(mu, 5)) / (1.0 - mu);
    CHECK(state.accum.at("p")[0] == doctest::Approx(expected_v).epsilon(1e-12));
}

TEST_CASE("rmsprop zero gradient and first-step closed form") {
    OptimizerState state = make_rmsprop(1e-3);
    ParamSet params = single("p", {5.0});
    const ParamSet zero = single("p", {0.0});
    const ParamSet out = rmsprop_step(state, params, zero);
    CHECK(out[0].value[0] == 5.0);

    OptimizerState fresh = make_rmsprop(1e-3, 0.9, 1e-8);
    const double g = 0.37;
    const ParamSet grads = single("p", {g});
    const ParamSet stepped = rmsprop_step(fresh, params, grads);
    const double expected = 5.0 - 1e-3 * g / (std::sqrt(0.1) * std::abs(g) + 1e-8);
    CHECK(stepped[0].value[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("rmsprop per-step magnitude approaches the learning rate") {
    const double eta = 1e-3, g = 0.25;
    OptimizerState state = make_rmsprop(eta);
    ParamSet params = single("p", {1.0});
    const ParamSet grads = single("p", {g});
    double prev = params[0].value[0];
    double last_step = 0.0;
    for (int k = 0; k < 400; ++k) {
        params = rmsprop_step(state, params, grads);
        last_step = std::abs(params[0].value[0] - prev);
        prev = params[0].value[0];
    }
    CHECK(last_step == doctest::Approx(eta).epsilon(0.01));
}

TEST_CASE("misaligned names or shapes raise argument errors") {
    OptimizerState state = make_sgd_momentum(0.1);
    const ParamSet params = single("p", {1.0});
    CHECK_THROWS_AS(sgd_momentum_step(state, params, single("q", {1.0})), ArgumentError);
    const ParamSet bad_shape = {{"p", Tensor({2}, {1.0, 2.0})}};
    CHECK_THROWS_AS(sgd_momentum_step(state, params, bad_shape), ArgumentError);
    ParamSet two = params;
    two.push_back({"r", Tensor({1}, {0.0})});
    CHECK_THROWS_AS(sgd_momentum_step(state, params, two), ArgumentError);
}

namespace {

double quadratic_loss(const ParamSet& ps) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ps[0].value.size(); ++i) {
        acc += 0.5 * ps[0].value[i] * ps[0].value[i];
    }
    return acc;
}

ParamSet quadratic_grads(const ParamSet& ps) {
    return {{"p", ps[0].value}}; // grad of 0.5||p||^2 is p
}

} // namespace

TEST_CASE("both optimizers descend the quadratic loss") {
    // Momentum 0.9 is underdamped on a quadratic: the loss decreases
    // strictly until the trajectory's first local minimum, then rings with
    // a decaying envelope. RMSProp is monotone until its eta-sized step
    // floor. Each optimizer is held to its provable contract plus
    // convergence of the envelope.
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor p0 = rand_normal(rng, {6}, 0.0, 3.0);
        for (std::size_t i = 0; i < p0.size(); ++i) {
            if (std::abs(p0[i]) < 0.5) p0[i] = p0[i] < 0 ? -0.5 : 0.5;
        }
        {
            OptimizerState state = make_sgd_momentum(0.1);
            ParamSet params = {{"p", p0}};
            const double initial = quadratic_loss(params);
            double prev = initial;
            bool descending = true;
            for (int step = 0; step < 200; ++step) {
                params = sgd_momentum_step(state, params, quadratic_grads(params));
                const double cur = quadratic_loss(params);
                if (step == 0) CHECK(cur < initial); // first step always descends
                if (descending && cur >= prev) descending = false;
                if (descending) CHECK(cur < prev);
                prev = cur;
            }
            CHECK(prev < 1e-6 * initial); // ringing envelope has died down
        }
        {
            // RMSProp moves ~eta per coordinate per step once the square
            // accumulator saturates, so the horizon must cover |p|/eta.
            OptimizerState state = make_rmsprop(0.05);
            ParamSet params = {{"p", p0}};
            const double initial = quadratic_loss(params);
            double prev = initial;
            for (int step = 0; step < 400; ++step) {
                params = rmsprop_step(state, params, quadratic_grads(params));
                const double cur = quadratic_loss(params);
                if (prev > 0.01 * initial) CHECK(cur < prev);
                prev = cur;
            }
            CHECK(prev < 0.01 * initial);
        }
    }
}

TEST_CASE("updates are deterministic functions of their inputs") {
    const ParamSet params = single("p", {1.0, 2.0});
    const ParamSet grads = single("p", {0.3, -0.7});
    OptimizerState s1 = make_sgd_momentum(0.01);
    OptimizerState s2 = make_sgd_momentum(0.01);
    CHECK(sgd_momentum_step(s1, params, grads)[0].value ==
          sgd_momentum_step(s2, params, grads)[0].value);
}

TEST_CASE("parameter serialization round-trips bitwise") {
    Rng rng(42);
    ParamSet params;
    params.push_back({"conv1.filters", rand_normal(rng, {4, 9, 9}, 0.0, 0.01)});
    params.push_back({"conv1.bias", Tensor({4})});
    params.push_back({"fc.weights", rand_normal(rng, {8, 88}, 0.0, 0.01)});
    // Awkward values must survive exactly.
    params.push_back({"edge", Tensor({5}, {0.0, -0.0, 1e-308, 1.7976931348623157e308,
                                           -3.141592653589793})});

    const auto path = temp_file("smmkit_params_test.params");
    save_params(params, path.string());
    const ParamSet loaded = load_params(path.string());
    REQUIRE(loaded.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(loaded[i].name == params[i].name);
        CHECK(loaded[i].value.shape() == params[i].value.shape());
        for (std::size_t j = 0; j < params[i].value.size(); ++j) {
            const double a = params[i].value[j];
            const double b = loaded[i].value[j];
            CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
        }
    }
    std::filesystem::remove(path);
}

TEST_CASE("parameter file error variants are distinct") {
    const auto missing = temp_file("smmkit_does_not_exist.params");
    std::filesystem::remove(missing);
    CHECK_THROWS_AS(load_params(missing.string()), IoError);

    const auto bad_magic = temp_file("smmkit_bad_magic.params");
    {
        std::ofstream os(bad_magic, std::ios::binary);
        os << "NOTPARAMxxxxxxx";
    }
    CHECK_THROWS_AS(load_params(bad_magic.string()), FormatError);
    std::filesystem::remove(bad_magic);

    const auto bad_version = temp_file("smmkit_bad_version.params");
    {
        std::ofstream os(bad_version, std::ios::binary);
        os.write("SMMPARAM", 8);
        const unsigned char version[4] = {9, 0, 0, 0};
        os.write(reinterpret_cast<const char*>(version), 4);
    }
    CHECK_THROWS_AS(load_params(bad_version.string()), VersionError);
    std::filesystem::remove(bad_version);

    const auto truncated = temp_file("smmkit_truncated.params");
    {
        ParamSet params = single("p", {1.0, 2.0, 3.0});
        save_params(params, truncated.string());
        const auto size = std::filesystem::file_size(truncated);
        std::filesystem::resize_file(truncated, size - 5);
    }
    CHECK_THROWS_AS(load_params(truncated.string()), FormatError);
    std::filesystem::remove(truncated);
}

TEST_CASE("duplicate parameter names are rejected at serialization") {
    ParamSet params;
    params.push_back({"p", Tensor({1}, {1.0})});
    params.push_back({"p", Tensor({1}, {2.0})});
    const auto path = temp_file("smmkit_dup.params");
    CHECK_THROWS_AS(save_params(params, path.string()), ArgumentError);
    std::filesystem::remove(path);
}

TEST_CASE("apply_step scales accumulated gradients") {
    Tensor value({2}, {1.0, 1.0});
    Tensor grad({2}, {4.0, 8.0});
    std::vector<ParamBinding> binds{{"p", &value, &grad}};
    OptimizerState state = make_sgd_momentum(0.5, 0.0);
    apply_step(state, binds, 0.25); // grads scaled to {1.0, 2.0}
    CHECK(value[0] == doctest::Approx(1.0 - 0.5 * 1.0).epsilon(1e-15));
    CHECK(value[1] == doctest::Approx(1.0 - 0.5 * 2.0).epsilon(1e-15));
}
