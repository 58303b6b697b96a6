#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowdiff {

struct MomentFit {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // symmetric
    std::int64_t count = 0;

    static MomentFit exact(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
        MomentFit f;
        f.mean = std::move(mean);
        f.cov = std::move(cov);
        f.count = -1;  // closed-form moments, no sampling noise
        return f;
    }
};

// Sample mean and unbiased covariance over the rows of `samples`.
inline MomentFit fit_gaussian(const Eigen::MatrixXd& samples) {
    const auto n = samples.rows();
    if (n < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples, got " + std::to_string(n));
    MomentFit f;
    f.count = n;
    f.mean = samples.colwise().mean();
    Eigen::MatrixXd centered = samples.rowwise() - f.mean.transpose();
    f.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    f.cov = 0.5 * (f.cov + f.cov.transpose()).eval();
    return f;
}

namespace detail {

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clamped at zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw std::runtime_error("psd_sqrt: eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})
inline double frechet(const MomentFit& a, const MomentFit& b) {
    if (a.mean.size() != b.mean.size())
        throw std::invalid_argument("frechet: dimension mismatch " + std::to_string(a.mean.size()) + " vs " +
                                    std::to_string(b.mean.size()));
    const Eigen::MatrixXd ra = detail::psd_sqrt(a.cov);
    const Eigen::MatrixXd inner = detail::psd_sqrt(ra * b.cov * ra);
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const double trace_term = a.cov.trace() + b.cov.trace() - 2.0 * inner.trace();
    double d = mean_term + trace_term;
    if (d < 0.0 && d > -1e-8) d = 0.0;  // clamp eigen round-off on matched moments
    return d;
}

// ---------------------------------------------------------------------------
// effective NFE: low-resolution evaluations converted to high-resolution
// equivalents through the per-evaluation latency ratio, rounded up per stage
// ---------------------------------------------------------------------------

struct EffNfeStage {
    int resolution = 0;
    int nfe = 0;
    double latency_per_eval_s = 0.0;
    double eta = 0.0;  // latency ratio vs the highest stage
};

struct EffNfeReport {
    std::vector<EffNfeStage> stages;
    int high_index = 0;  // index into stages
    int effective_nfe = 0;
};

inline EffNfeReport effective_nfe(std::vector<EffNfeStage> stages, int high_index) {
    if (stages.empty() || high_index < 0 || high_index >= static_cast<int>(stages.size()))
        throw std::invalid_argument("effective_nfe: bad highest-stage index");
    for (const auto& s : stages)
        if (!(s.latency_per_eval_s > 0.0))
            throw std::invalid_argument("effective_nfe: non-positive latency for resolution " +
                                        std::to_string(s.resolution));
    EffNfeReport rep;
    rep.high_index = high_index;
    const double lat_high = stages[static_cast<std::size_t>(high_index)].latency_per_eval_s;
    long long eff = 0;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        stages[i].eta = stages[i].latency_per_eval_s / lat_high;
        if (static_cast<int>(i) == high_index) continue;
        eff += static_cast<long long>(std::ceil(stages[i].eta * stages[i].nfe - 1e-9));
    }
    eff += stages[static_cast<std::size_t>(high_index)].nfe;
    rep.stages = std::move(stages);
    rep.effective_nfe = static_cast<int>(eff);
    return rep;
}

// ---------------------------------------------------------------------------
// wall-clock benchmarking
// ---------------------------------------------------------------------------

struct BenchReport {
    int batch = 0;
    int warmup = 0;
    int reps = 0;
    double latency_s = 0.0;        // mean over reps
    double throughput_ips = 0.0;   // batch / latency
    std::string hardware;
};

inline BenchReport bench(const std::function<void()>& sample_fn, int batch, int warmup, int reps,
                         std::string hardware = {}) {
    if (reps < 1) throw std::invalid_argument("bench: need reps >= 1");
    for (int i = 0; i < warmup; ++i) sample_fn();
    double total = 0.0;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sample_fn();
        const auto t1 = std::chrono::steady_clock::now();
        total += std::chrono::duration<double>(t1 - t0).count();
    }
    BenchReport r;
    r.batch = batch;
    r.warmup = warmup;
    r.reps = reps;
    r.latency_s = total / reps;
    r.throughput_ips = batch / r.latency_s;
    r.hardware = std::move(hardware);
    return r;
}

}  // namespace lowdiff
