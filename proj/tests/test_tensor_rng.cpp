#include <catch2/catch_amalgamated.hpp>

#include "lowdiff/rng.hpp"
#include "lowdiff/tensor.hpp"

using namespace lowdiff;

TEST_CASE("tensor shape and data stay consistent") {
    Tensor<double> t({2, 3});
    REQUIRE(t.numel() == 6);
    REQUIRE(t.rank() == 2);
    REQUIRE_THROWS_AS(Tensor<double>({2, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(Tensor<double>({2, 3}, std::vector<double>(5)), std::invalid_argument);
    Tensor<float> f = Tensor<float>::full({4}, 2.5f);
    for (auto v : f) REQUIRE(v == 2.5f);
}

TEST_CASE("assert_finite flags NaN and Inf") {
    Tensor<double> t({3});
    assert_finite(t, "zeros");
    t[1] = std::nan("");
    REQUIRE_THROWS_AS(assert_finite(t, "nan"), std::runtime_error);
    t[1] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_AS(assert_finite(t, "inf"), std::runtime_error);
}

TEST_CASE("rng streams are seed-deterministic") {
    Rng a(1234), b(1234), c(99);
    for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
    bool differs = false;
    Rng a2(1234);
    for (int i = 0; i < 100; ++i) differs |= (a2.normal() != c.normal());
    REQUIRE(differs);
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(7);
    const int n = 200000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("forked rng streams differ from the parent") {
    Rng rng(42);
    Rng f1 = rng.fork({1});
    Rng f2 = rng.fork({1});
    // separate forks advance the parent, so they differ from each other too
    REQUIRE(f1.normal() != f2.normal());
}
