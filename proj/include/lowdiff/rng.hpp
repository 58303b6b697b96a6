#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "lowdiff/tensor.hpp"

namespace lowdiff {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded generator with hand-rolled uniform/normal mappings so that a given
// seed produces the same stream on every platform (std distributions are
// implementation-defined; mt19937_64 itself is pinned by the standard).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0,1)
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::int64_t uniform_int(std::int64_t n) {  // [0,n)
        return static_cast<std::int64_t>(uniform01() * static_cast<double>(n));
    }

    // Box-Muller, both outputs consumed
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.28318530717958647692 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <class T>
    void fill_normal(Tensor<T>& t) {
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal());
    }

    template <class T>
    Tensor<T> normal_tensor(std::vector<std::int64_t> shape) {
        Tensor<T> t(std::move(shape));
        fill_normal(t);
        return t;
    }

    // Independent stream keyed by (this seed, tags...)
    Rng fork(std::initializer_list<std::uint64_t> tags) {
        std::uint64_t s = gen_();
        for (auto t : tags) {
            s ^= t + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
            splitmix64(s);
        }
        return Rng(splitmix64(s));
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace lowdiff
