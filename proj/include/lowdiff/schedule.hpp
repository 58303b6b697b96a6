#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lowdiff/ops.hpp"
#include "lowdiff/rng.hpp"
#include "lowdiff/tensor.hpp"

namespace lowdiff {

// Descending noise ladder with a terminal 0 so samplers land exactly on clean
// data; truncated stages stop partway down the same ladder.
struct SigmaSchedule {
    std::vector<double> sigmas;  // sigma_max ... sigma_min, 0
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double rho = 7.0;

    int steps() const { return static_cast<int>(sigmas.size()) - 1; }
};

inline SigmaSchedule karras_sigmas(int n, double sigma_min, double sigma_max, double rho = 7.0) {
    if (n < 2) throw std::invalid_argument("karras_sigmas: need n >= 2, got " + std::to_string(n));
    if (!(sigma_min > 0.0) || !(sigma_min < sigma_max))
        throw std::invalid_argument("karras_sigmas: need 0 < sigma_min < sigma_max");
    SigmaSchedule s;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.rho = rho;
    s.sigmas.resize(static_cast<std::size_t>(n) + 1);
    const double a = std::pow(sigma_max, 1.0 / rho);
    const double b = std::pow(sigma_min, 1.0 / rho);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        s.sigmas[static_cast<std::size_t>(i)] = std::pow(a + t * (b - a), rho);
    }
    s.sigmas[0] = sigma_max;  // pin endpoints against pow round-off
    s.sigmas[static_cast<std::size_t>(n) - 1] = sigma_min;
    s.sigmas[static_cast<std::size_t>(n)] = 0.0;
    return s;
}

struct LossWeightConfig {
    double sigma_data = 0.5;
    double p_mean = -1.2;
    double p_std = 1.2;
};

inline double training_sigma_from_z(double z, const LossWeightConfig& cfg) {
    return std::exp(cfg.p_mean + cfg.p_std * z);
}

// log-normal draw used for training noise levels
inline double sample_training_sigma(Rng& rng, const LossWeightConfig& cfg) {
    return training_sigma_from_z(rng.normal(), cfg);
}

// lambda(sigma) = (sigma^2 + sigma_data^2) / (sigma * sigma_data)^2
inline double loss_weight(double sigma, const LossWeightConfig& cfg) {
    if (!(sigma > 0.0)) throw std::invalid_argument("loss_weight: sigma must be positive");
    const double sd = cfg.sigma_data;
    return (sigma * sigma + sd * sd) / (sigma * sigma * sd * sd);
}

// x = x0 + sigma * eps with fresh standard-normal eps; sigma = 0 returns x0 untouched
template <class T>
std::pair<Tensor<T>, Tensor<T>> perturb(const Tensor<T>& x0, double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("perturb: sigma must be >= 0");
    Tensor<T> eps = rng.normal_tensor<T>(x0.shape());
    if (sigma == 0.0) return {x0, std::move(eps)};
    Tensor<T> x = ew_axpy(static_cast<T>(sigma), eps, x0);
    return {std::move(x), std::move(eps)};
}

}  // namespace lowdiff
