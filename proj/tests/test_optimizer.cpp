#include <catch2/catch_amalgamated.hpp>
#include <cstring>

#include "lowdiff/optimizer.hpp"
#include "lowdiff/rng.hpp"

using namespace lowdiff;

namespace {

// Scalar reference recurrence evaluated step by step.
double adam_reference(double theta, const std::vector<double>& grads, const AdamConfig& c) {
    double m = 0, v = 0;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
        const double g = grads[t - 1];
        m = c.beta1 * m + (1 - c.beta1) * g;
        v = c.beta2 * v + (1 - c.beta2) * g * g;
        const double mhat = m / (1 - std::pow(c.beta1, static_cast<double>(t)));
        const double vhat = v / (1 - std::pow(c.beta2, static_cast<double>(t)));
        theta -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
    return theta;
}

}  // namespace

TEST_CASE("adam with empty gradients leaves parameters bit-identical") {
    Rng rng(1);
    ParamStore<double> store;
    store.add("a", rng.normal_tensor<double>({4}));
    Tensor<double> before = store.get("a");
    adam_step(store, {}, AdamConfig{});
    REQUIRE(std::memcmp(before.data(), store.get("a").data(), sizeof(double) * 4) == 0);
    REQUIRE(store.slot("a").step == 0);
}

TEST_CASE("single adam step matches the hand-evaluated recurrence") {
    const AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    ParamStore<double> store;
    store.add("theta", Tensor<double>({1}, {0.7}));
    std::map<std::string, Tensor<double>> grads;
    grads.emplace("theta", Tensor<double>({1}, {0.3}));
    adam_step(store, grads, cfg);
    const double expected = adam_reference(0.7, {0.3}, cfg);
    REQUIRE(std::abs(store.get("theta")[0] - expected) < 1e-15);
    // step 1 moves essentially by -lr * sign(g)
    REQUIRE(std::abs((0.7 - store.get("theta")[0]) - cfg.lr) < 1e-6);
}

TEST_CASE("two adam steps with constant gradient accumulate second moments per the recurrence") {
    const AdamConfig cfg{0.05, 0.9, 0.999, 1e-8};
    ParamStore<double> store;
    store.add("theta", Tensor<double>({1}, {-1.25}));
    std::map<std::string, Tensor<double>> grads;
    grads.emplace("theta", Tensor<double>({1}, {-0.8}));
    adam_step(store, grads, cfg);
    adam_step(store, grads, cfg);
    const double expected = adam_reference(-1.25, {-0.8, -0.8}, cfg);
    REQUIRE(std::abs(store.get("theta")[0] - expected) < 1e-14);
    REQUIRE(store.slot("theta").step == 2);
}

TEST_CASE("adam touches only the keys present in the gradient map") {
    Rng rng(2);
    ParamStore<float> store;
    store.add("touched", rng.normal_tensor<float>({8}));
    store.add("untouched", rng.normal_tensor<float>({8}));
    Tensor<float> before = store.get("untouched");
    std::map<std::string, Tensor<float>> grads;
    grads.emplace("touched", rng.normal_tensor<float>({8}));
    adam_step(store, grads, AdamConfig{});
    REQUIRE(std::memcmp(before.data(), store.get("untouched").data(), sizeof(float) * 8) == 0);
    REQUIRE(store.slot("untouched").step == 0);
    REQUIRE(store.slot("touched").step == 1);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
    ParamStore<double> store;
    store.add("w.bad", Tensor<double>({2}));
    std::map<std::string, Tensor<double>> grads;
    Tensor<double> g({2});
    g[1] = std::numeric_limits<double>::quiet_NaN();
    grads.emplace("w.bad", std::move(g));
    try {
        adam_step(store, grads, AdamConfig{});
        FAIL("expected error");
    } catch (const std::runtime_error& e) {
        REQUIRE(std::string(e.what()).find("w.bad") != std::string::npos);
    }
}

TEST_CASE("adam rejects unknown keys and shape mismatches") {
    ParamStore<double> store;
    store.add("w", Tensor<double>({2}));
    std::map<std::string, Tensor<double>> grads;
    grads.emplace("nope", Tensor<double>({2}));
    REQUIRE_THROWS_AS(adam_step(store, grads, AdamConfig{}), std::invalid_argument);
    grads.clear();
    grads.emplace("w", Tensor<double>({3}));
    REQUIRE_THROWS_AS(adam_step(store, grads, AdamConfig{}), std::invalid_argument);
}
