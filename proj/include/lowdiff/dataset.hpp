#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lowdiff/rng.hpp"
#include "lowdiff/tensor.hpp"

namespace lowdiff {

// Procedural stand-in dataset: random axis-aligned rectangles and isotropic
// blobs over a small color palette, values clamped to [-1, 1].
inline Tensor<float> gen_shapes(std::uint64_t seed, std::int64_t count, int resolution, int channels,
                                int palette_size = 8) {
    if (count < 1 || resolution < 2 || channels < 1 || palette_size < 1)
        throw std::invalid_argument("gen_shapes: bad count/resolution/channels/palette");
    Rng rng(seed);
    std::vector<std::vector<float>> palette(static_cast<std::size_t>(palette_size));
    for (auto& color : palette) {
        color.resize(static_cast<std::size_t>(channels));
        for (auto& v : color) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    Tensor<float> out({count, channels, resolution, resolution});
    const double r = resolution;
    for (std::int64_t img = 0; img < count; ++img) {
        const auto& bg = palette[static_cast<std::size_t>(rng.uniform_int(palette_size))];
        for (int c = 0; c < channels; ++c)
            for (int i = 0; i < resolution * resolution; ++i)
                (&out.at4(img, c, 0, 0))[i] = 0.6f * bg[static_cast<std::size_t>(c)];
        const int n_shapes = 1 + static_cast<int>(rng.uniform_int(4));
        for (int s = 0; s < n_shapes; ++s) {
            const auto& color = palette[static_cast<std::size_t>(rng.uniform_int(palette_size))];
            if (rng.uniform01() < 0.5) {  // rectangle
                int y0 = static_cast<int>(rng.uniform_int(resolution));
                int y1 = static_cast<int>(rng.uniform_int(resolution));
                int x0 = static_cast<int>(rng.uniform_int(resolution));
                int x1 = static_cast<int>(rng.uniform_int(resolution));
                if (y0 > y1) std::swap(y0, y1);
                if (x0 > x1) std::swap(x0, x1);
                for (int c = 0; c < channels; ++c)
                    for (int y = y0; y <= y1; ++y)
                        for (int x = x0; x <= x1; ++x)
                            out.at4(img, c, y, x) = color[static_cast<std::size_t>(c)];
            } else {  // isotropic blob
                const double cy = rng.uniform(0.0, r - 1.0), cx = rng.uniform(0.0, r - 1.0);
                const double rad = rng.uniform(r / 8.0, r / 3.0);
                for (int c = 0; c < channels; ++c)
                    for (int y = 0; y < resolution; ++y)
                        for (int x = 0; x < resolution; ++x) {
                            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                            const float w = static_cast<float>(std::exp(-d2 / (2.0 * rad * rad)));
                            float& px = out.at4(img, c, y, x);
                            px = (1.0f - w) * px + w * color[static_cast<std::size_t>(c)];
                        }
            }
        }
        for (int c = 0; c < channels; ++c)
            for (int i = 0; i < resolution * resolution; ++i) {
                float& px = (&out.at4(img, c, 0, 0))[i];
                px = std::clamp(px, -1.0f, 1.0f);
            }
    }
    return out;
}

}  // namespace lowdiff
