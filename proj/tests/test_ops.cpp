#include <catch2/catch_amalgamated.hpp>

#include "lowdiff/ops.hpp"
#include "lowdiff/rng.hpp"

using namespace lowdiff;

namespace {

// Independent six-loop cross-correlation used as the convolution oracle.
Tensor<double> conv2d_reference(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int pad) {
    const auto B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const auto Co = w.dim(0), k = w.dim(2);
    const auto OH = H + 2 * pad - k + 1, OW = W + 2 * pad - k + 1;
    Tensor<double> y({B, Co, OH, OW});
    for (std::int64_t bi = 0; bi < B; ++bi)
        for (std::int64_t co = 0; co < Co; ++co)
            for (std::int64_t oh = 0; oh < OH; ++oh)
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                    double acc = b[co];
                    for (std::int64_t ci = 0; ci < Ci; ++ci)
                        for (std::int64_t ki = 0; ki < k; ++ki)
                            for (std::int64_t kj = 0; kj < k; ++kj) {
                                const std::int64_t ih = oh + ki - pad, iw = ow + kj - pad;
                                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                    acc += x.at4(bi, ci, ih, iw) * w.at4(co, ci, ki, kj);
                            }
                    y.at4(bi, co, oh, ow) = acc;
                }
    return y;
}

// Independent per-pixel 2x bilinear interpolation (align-corners-false).
double bilinear_reference_at(const Tensor<double>& x, std::int64_t b, std::int64_t c, std::int64_t oh,
                             std::int64_t ow) {
    const auto H = x.dim(2), W = x.dim(3);
    auto sample = [&](double sy, double sx) {
        const auto clamp = [](std::int64_t v, std::int64_t n) { return std::max<std::int64_t>(0, std::min(v, n - 1)); };
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy)), x0 = static_cast<std::int64_t>(std::floor(sx));
        const double ty = sy - y0, tx = sx - x0;
        const double v00 = x.at4(b, c, clamp(y0, H), clamp(x0, W));
        const double v01 = x.at4(b, c, clamp(y0, H), clamp(x0 + 1, W));
        const double v10 = x.at4(b, c, clamp(y0 + 1, H), clamp(x0, W));
        const double v11 = x.at4(b, c, clamp(y0 + 1, H), clamp(x0 + 1, W));
        return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    };
    return sample((oh + 0.5) / 2.0 - 0.5, (ow + 0.5) / 2.0 - 0.5);
}

double max_rel_err(const Tensor<double>& a, const Tensor<double>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return worst;
}

}  // namespace

TEST_CASE("conv2d identity kernel is the identity") {
    Rng rng(1);
    Tensor<double> x = rng.normal_tensor<double>({2, 3, 5, 4});
    Tensor<double> w({3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) w.at4(c, c, 0, 0) = 1.0;
    Tensor<double> b({3});
    Tensor<double> y = conv2d_fwd(x, w, b, 0);
    REQUIRE(y.shape() == x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(y[i] == x[i]);
}

TEST_CASE("conv2d averaging kernel keeps constants in the interior") {
    Tensor<double> x = Tensor<double>::full({1, 1, 6, 6}, 3.25);
    Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0 / 9.0);
    Tensor<double> b({1});
    Tensor<double> y = conv2d_fwd(x, w, b, 1);
    for (std::int64_t h = 1; h < 5; ++h)
        for (std::int64_t ww = 1; ww < 5; ++ww) REQUIRE(std::abs(y.at4(0, 0, h, ww) - 3.25) < 1e-12);
}

TEST_CASE("conv2d matches the six-loop oracle on random input") {
    Rng rng(77);
    Tensor<double> x = rng.normal_tensor<double>({1, 2, 4, 4});
    Tensor<double> w = rng.normal_tensor<double>({3, 2, 3, 3});
    Tensor<double> b = rng.normal_tensor<double>({3});
    REQUIRE(max_rel_err(conv2d_fwd(x, w, b, 1), conv2d_reference(x, w, b, 1)) <= 1e-6);
}

TEST_CASE("conv2d equals the oracle on all shapes up to 2x4x8x8") {
    Rng rng(5);
    for (int B : {1, 2})
        for (int Ci : {1, 3, 4})
            for (int Co : {1, 2})
                for (int H : {1, 2, 5, 8})
                    for (int W : {1, 4, 8})
                        for (int k : {1, 3}) {
                            Tensor<double> x = rng.normal_tensor<double>({B, Ci, H, W});
                            Tensor<double> w = rng.normal_tensor<double>({Co, Ci, k, k});
                            Tensor<double> b = rng.normal_tensor<double>({Co});
                            const int pad = (k - 1) / 2;
                            REQUIRE(max_rel_err(conv2d_fwd(x, w, b, pad), conv2d_reference(x, w, b, pad)) <= 1e-10);
                        }
}

TEST_CASE("conv2d rejects mismatched shapes with both named") {
    Rng rng(3);
    Tensor<double> x = rng.normal_tensor<double>({1, 2, 4, 4});
    Tensor<double> w = rng.normal_tensor<double>({3, 5, 3, 3});
    Tensor<double> b({3});
    try {
        conv2d_fwd(x, w, b, 1);
        FAIL("expected shape error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("[3,5,3,3]") != std::string::npos);
        REQUIRE(msg.find("[1,2,4,4]") != std::string::npos);
    }
    REQUIRE_THROWS_AS(conv2d_fwd(x, rng.normal_tensor<double>({3, 2, 2, 2}), b, 0), std::invalid_argument);
}

TEST_CASE("avg_pool2 basics") {
    Tensor<double> x({1, 1, 2, 2}, {1, 3, 5, 7});
    Tensor<double> y = avg_pool2_fwd(x);
    REQUIRE(y.numel() == 1);
    REQUIRE(y[0] == 4.0);

    Tensor<double> c = Tensor<double>::full({2, 3, 4, 4}, -0.7);
    Tensor<double> yc = avg_pool2_fwd(c);
    for (auto v : yc) REQUIRE(v == -0.7);

    REQUIRE_THROWS_AS(avg_pool2_fwd(Tensor<double>({1, 1, 3, 4})), std::invalid_argument);
    REQUIRE_THROWS_AS(avg_pool2_fwd(Tensor<double>({1, 1, 4, 5})), std::invalid_argument);
}

TEST_CASE("avg_pool2 preserves the spatial mean") {
    Rng rng(11);
    Tensor<double> x = rng.normal_tensor<double>({1, 1, 8, 8});
    Tensor<double> y = avg_pool2_fwd(x);
    REQUIRE(std::abs(reduce_mean(y) - reduce_mean(x)) <= 1e-7);
}

TEST_CASE("upsample2 nearest replicates pixels") {
    Tensor<double> x({1, 1, 1, 1}, {2.5});
    Tensor<double> y = upsample2_fwd(x, UpsampleMode::nearest);
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 2, 2});
    for (auto v : y) REQUIRE(v == 2.5);
}

TEST_CASE("upsample2 bilinear maps constants to constants") {
    Tensor<double> x = Tensor<double>::full({2, 2, 4, 4}, 0.31);
    Tensor<double> y = upsample2_fwd(x, UpsampleMode::bilinear);
    for (auto v : y) REQUIRE(std::abs(v - 0.31) < 1e-12);
}

TEST_CASE("upsample2 bilinear matches the per-pixel interpolation oracle") {
    Rng rng(23);
    Tensor<double> x = rng.normal_tensor<double>({1, 2, 4, 4});
    Tensor<double> y = upsample2_fwd(x, UpsampleMode::bilinear);
    for (std::int64_t c = 0; c < 2; ++c)
        for (std::int64_t oh = 0; oh < 8; ++oh)
            for (std::int64_t ow = 0; ow < 8; ++ow)
                REQUIRE(std::abs(y.at4(0, c, oh, ow) - bilinear_reference_at(x, 0, c, oh, ow)) <= 1e-6);
}

TEST_CASE("dense identity and naive matmul oracle") {
    Rng rng(9);
    Tensor<double> x = rng.normal_tensor<double>({2, 3});
    Tensor<double> id({3, 3});
    for (int i = 0; i < 3; ++i) id[i * 3 + i] = 1.0;
    Tensor<double> b0({3});
    Tensor<double> y = dense_and_activation(x, id, b0, Activation::none);
    for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(y[i] == x[i]);

    // silu(0) = 0
    Tensor<double> z({1, 1});
    REQUIRE(silu_fwd(z)[0] == 0.0);

    Tensor<double> w = rng.normal_tensor<double>({3, 4});
    Tensor<double> b = rng.normal_tensor<double>({4});
    Tensor<double> got = dense_fwd(x, w, b);
    for (int m = 0; m < 2; ++m)
        for (int n = 0; n < 4; ++n) {
            double acc = b[n];
            for (int k = 0; k < 3; ++k) acc += x[m * 3 + k] * w[k * 4 + n];
            REQUIRE(std::abs(got[m * 4 + n] - acc) <= 1e-6 * std::max(1.0, std::abs(acc)));
        }
    REQUIRE_THROWS_AS(dense_fwd(x, rng.normal_tensor<double>({5, 4}), b), std::invalid_argument);
}

TEST_CASE("group_norm normalizes within groups") {
    Rng rng(31);
    Tensor<double> x = rng.normal_tensor<double>({2, 8, 4, 4});
    Tensor<double> gamma = Tensor<double>::full({8}, 1.0);
    Tensor<double> beta({8});
    Tensor<double> y = group_norm_fwd(x, gamma, beta, 4);
    // each (sample, group) slab has mean ~0 and variance ~1
    for (int b = 0; b < 2; ++b)
        for (int g = 0; g < 4; ++g) {
            double s = 0, s2 = 0;
            for (int c = 2 * g; c < 2 * g + 2; ++c)
                for (int i = 0; i < 16; ++i) {
                    const double v = (&y.at4(b, c, 0, 0))[i];
                    s += v;
                    s2 += v * v;
                }
            const double mean = s / 32.0, var = s2 / 32.0 - mean * mean;
            REQUIRE(std::abs(mean) < 1e-10);
            REQUIRE(std::abs(var - 1.0) < 1e-3);  // eps shifts variance slightly below 1
        }
    REQUIRE_THROWS_AS(group_norm_fwd(x, gamma, beta, 3), std::invalid_argument);
}

TEST_CASE("concat_channels stacks and validates") {
    Rng rng(41);
    Tensor<double> a = rng.normal_tensor<double>({1, 2, 3, 3});
    Tensor<double> b = rng.normal_tensor<double>({1, 1, 3, 3});
    Tensor<double> y = concat_channels_fwd(a, b);
    REQUIRE(y.shape() == std::vector<std::int64_t>{1, 3, 3, 3});
    REQUIRE(y.at4(0, 0, 1, 1) == a.at4(0, 0, 1, 1));
    REQUIRE(y.at4(0, 2, 2, 0) == b.at4(0, 0, 2, 0));
    REQUIRE_THROWS_AS(concat_channels_fwd(a, rng.normal_tensor<double>({1, 1, 4, 3})), std::invalid_argument);
}
