#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lowdiff/cascade.hpp"
#include "lowdiff/rng.hpp"
#include "lowdiff/tensor.hpp"

// Analytic Gaussian-mixture data model with exact denoisers at every ladder
// level. Because downsampling is linear, the low-resolution law of a Gaussian
// is available in closed form, which lets the samplers and the full cascade
// be verified without any training.

namespace lowdiff {

struct GaussianMixture {
    Eigen::VectorXd weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;

    int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
    int components() const { return static_cast<int>(weights.size()); }

    static GaussianMixture single(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
        GaussianMixture m;
        m.weights = Eigen::VectorXd::Ones(1);
        m.means.push_back(std::move(mean));
        m.covs.push_back(std::move(cov));
        m.validate();
        return m;
    }

    void validate() const {
        if (components() < 1 || means.size() != covs.size() ||
            means.size() != static_cast<std::size_t>(components()))
            throw std::invalid_argument("mixture: inconsistent component counts");
        if (std::abs(weights.sum() - 1.0) > 1e-12) throw std::invalid_argument("mixture: weights must sum to 1");
        for (int k = 0; k < components(); ++k) {
            if (weights[k] < 0.0) throw std::invalid_argument("mixture: negative weight");
            if (means[k].size() != dim() || covs[k].rows() != dim() || covs[k].cols() != dim())
                throw std::invalid_argument("mixture: component dimension mismatch");
            if ((covs[k] - covs[k].transpose()).cwiseAbs().maxCoeff() > 1e-9)
                throw std::invalid_argument("mixture: covariance not symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(covs[k], Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -1e-10)
                throw std::invalid_argument("mixture: covariance not positive semidefinite");
        }
    }
};

// Exact mean and covariance of the mixture itself.
inline void mixture_moments(const GaussianMixture& m, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
    const int d = m.dim();
    mean = Eigen::VectorXd::Zero(d);
    for (int k = 0; k < m.components(); ++k) mean += m.weights[k] * m.means[k];
    cov = Eigen::MatrixXd::Zero(d, d);
    for (int k = 0; k < m.components(); ++k)
        cov += m.weights[k] * (m.covs[k] + m.means[k] * m.means[k].transpose());
    cov -= mean * mean.transpose();
}

// E[x_0 | x] for x = x_0 + sigma*eps, computed per row of X with log-sum-exp
// stabilized responsibilities.
inline Eigen::MatrixXd mixture_denoiser_batch(const GaussianMixture& m, const Eigen::MatrixXd& X, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("mixture_denoiser: sigma must be positive");
    if (!X.allFinite()) throw std::invalid_argument("mixture_denoiser: non-finite input");
    const int d = m.dim(), K = m.components();
    const auto n = X.rows();
    if (X.cols() != d)
        throw std::invalid_argument("mixture_denoiser: input dim " + std::to_string(X.cols()) +
                                    " does not match mixture dim " + std::to_string(d));
    Eigen::MatrixXd loglike(n, K);
    std::vector<Eigen::MatrixXd> post(K);  // posterior mean per component, n x d
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd A = m.covs[k] + sigma * sigma * Eigen::MatrixXd::Identity(d, d);
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) throw std::runtime_error("mixture_denoiser: covariance factorization failed");
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        Eigen::MatrixXd Y = X.rowwise() - m.means[k].transpose();             // n x d
        Eigen::MatrixXd S = llt.solve(Y.transpose());                         // d x n, A^{-1}(x - mu)
        Eigen::VectorXd quad = Y.transpose().cwiseProduct(S).colwise().sum().transpose();
        loglike.col(k) =
            (-0.5 * (quad.array() + logdet + d * std::log(2.0 * M_PI)) + std::log(std::max(m.weights[k], 1e-300)))
                .matrix();
        post[k] = ((m.covs[k] * S).colwise() + m.means[k]).transpose();  // n x d
    }
    Eigen::VectorXd maxlog = loglike.rowwise().maxCoeff();
    Eigen::MatrixXd resp = (loglike.colwise() - maxlog).array().exp().matrix();
    resp.array().colwise() /= resp.rowwise().sum().array();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, d);
    for (int k = 0; k < K; ++k) out += (post[k].array().colwise() * resp.col(k).array()).matrix();
    return out;
}

inline Eigen::VectorXd mixture_denoiser(const GaussianMixture& m, const Eigen::VectorXd& x, double sigma) {
    return mixture_denoiser_batch(m, x.transpose(), sigma).row(0).transpose();
}

// log p_sigma(x) of the sigma-smoothed mixture; used by the score-identity check.
inline double mixture_logpdf_sigma(const GaussianMixture& m, const Eigen::VectorXd& x, double sigma) {
    const int d = m.dim(), K = m.components();
    Eigen::VectorXd ll(K);
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd A = m.covs[k] + sigma * sigma * Eigen::MatrixXd::Identity(d, d);
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) throw std::runtime_error("mixture_logpdf: factorization failed");
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        Eigen::VectorXd y = x - m.means[k];
        ll[k] = std::log(std::max(m.weights[k], 1e-300)) -
                0.5 * (y.dot(llt.solve(y)) + logdet + d * std::log(2.0 * M_PI));
    }
    const double mx = ll.maxCoeff();
    return mx + std::log((ll.array() - mx).exp().sum());
}

// Law of A x for x ~ m; weights unchanged, means A mu, covariances A Sigma A^T.
inline GaussianMixture pushforward_linear(const GaussianMixture& m, const Eigen::MatrixXd& A) {
    if (A.cols() != m.dim())
        throw std::invalid_argument("pushforward_linear: map has " + std::to_string(A.cols()) +
                                    " columns, mixture dim is " + std::to_string(m.dim()));
    GaussianMixture out;
    out.weights = m.weights;
    for (int k = 0; k < m.components(); ++k) {
        out.means.push_back(A * m.means[k]);
        Eigen::MatrixXd c = A * m.covs[k] * A.transpose();
        out.covs.push_back(0.5 * (c + c.transpose()));
    }
    return out;
}

inline Eigen::MatrixXd sample_mixture(const GaussianMixture& m, Rng& rng, int n) {
    if (n < 1) throw std::invalid_argument("sample_mixture: need n >= 1");
    const int d = m.dim(), K = m.components();
    std::vector<Eigen::MatrixXd> L(K);
    for (int k = 0; k < K; ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(m.covs[k] + 1e-12 * Eigen::MatrixXd::Identity(d, d));
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("sample_mixture: Cholesky failed on component " + std::to_string(k));
        L[k] = llt.matrixL();
    }
    Eigen::MatrixXd out(n, d);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        int k = 0;
        double acc = 0.0;
        for (; k < K - 1; ++k) {
            acc += m.weights[k];
            if (u < acc) break;
        }
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j) z[j] = rng.normal();
        out.row(i) = (m.means[k] + L[k] * z).transpose();
    }
    return out;
}

// Joint law of (x_high, x_low) with x_low = A x_high for a single Gaussian
// x_high ~ N(mu, Sigma); the cross block is Sigma A^T by construction.
struct JointGaussian {
    Eigen::VectorXd mean;  // stacked [mu_h; A mu_h]
    Eigen::MatrixXd cov;   // stacked blocks
    int d_high = 0;
    int d_low = 0;

    static JointGaussian from_highres(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                      const Eigen::MatrixXd& A) {
        if (A.cols() != mu.size()) throw std::invalid_argument("joint gaussian: map/mean dimension mismatch");
        JointGaussian j;
        j.d_high = static_cast<int>(mu.size());
        j.d_low = static_cast<int>(A.rows());
        const int d = j.d_high + j.d_low;
        j.mean.resize(d);
        j.mean.head(j.d_high) = mu;
        j.mean.tail(j.d_low) = A * mu;
        j.cov.resize(d, d);
        j.cov.topLeftCorner(j.d_high, j.d_high) = sigma;
        j.cov.topRightCorner(j.d_high, j.d_low) = sigma * A.transpose();
        j.cov.bottomLeftCorner(j.d_low, j.d_high) = A * sigma;
        j.cov.bottomRightCorner(j.d_low, j.d_low) = A * sigma * A.transpose();
        j.cov = 0.5 * (j.cov + j.cov.transpose()).eval();
        return j;
    }
};

// E[x_high | x_high + sigma*eps = x_i, A x_high + sigma_c*eps_c = c_i] per row.
inline Eigen::MatrixXd conditional_denoiser_joint_batch(const JointGaussian& J, const Eigen::MatrixXd& X,
                                                        const Eigen::MatrixXd& C, double sigma, double sigma_c) {
    if (!(sigma > 0.0) || sigma_c < 0.0)
        throw std::invalid_argument("conditional_denoiser_joint: need sigma > 0 and sigma_c >= 0");
    if (X.cols() != J.d_high || C.cols() != J.d_low || X.rows() != C.rows())
        throw std::invalid_argument("conditional_denoiser_joint: observation shapes do not match joint dims");
    const int d = J.d_high + J.d_low;
    Eigen::MatrixXd M = J.cov;
    M.topLeftCorner(J.d_high, J.d_high) += sigma * sigma * Eigen::MatrixXd::Identity(J.d_high, J.d_high);
    M.bottomRightCorner(J.d_low, J.d_low) += sigma_c * sigma_c * Eigen::MatrixXd::Identity(J.d_low, J.d_low);
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("conditional_denoiser_joint: observation covariance solve failed");
    Eigen::MatrixXd R(X.rows(), d);  // per-sample stacked deviations
    R.leftCols(J.d_high) = X.rowwise() - J.mean.head(J.d_high).transpose();
    R.rightCols(J.d_low) = C.rowwise() - J.mean.tail(J.d_low).transpose();
    Eigen::MatrixXd G = J.cov.topRows(J.d_high);  // Cov(x_high, stacked obs)
    Eigen::MatrixXd out = (G * llt.solve(R.transpose())).transpose();
    out.rowwise() += J.mean.head(J.d_high).transpose();
    return out;
}

inline Eigen::VectorXd conditional_denoiser_joint(const JointGaussian& J, const Eigen::VectorXd& x_noisy,
                                                  const Eigen::VectorXd& cond_noisy, double sigma, double sigma_c) {
    return conditional_denoiser_joint_batch(J, x_noisy.transpose(), cond_noisy.transpose(), sigma, sigma_c)
        .row(0)
        .transpose();
}

// ---------------------------------------------------------------------------
// glue between image tensors and flattened vectors
// ---------------------------------------------------------------------------

// Matrix form of avg_pool2 on [C,H,W] vectors.
inline Eigen::MatrixXd avg_pool_matrix(int channels, int h, int w) {
    if (h % 2 != 0 || w % 2 != 0) throw std::invalid_argument("avg_pool_matrix: spatial dims must be even");
    const int oh = h / 2, ow = w / 2;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(channels * oh * ow, channels * h * w);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < oh; ++i)
            for (int j = 0; j < ow; ++j) {
                const int row = (c * oh + i) * ow + j;
                for (int di = 0; di < 2; ++di)
                    for (int dj = 0; dj < 2; ++dj) A(row, (c * h + 2 * i + di) * w + 2 * j + dj) = 0.25;
            }
    return A;
}

inline Eigen::MatrixXd tensor_to_rows(const Tensor<double>& t) {
    const auto b = t.dim(0);
    const auto d = t.numel() / b;
    Eigen::MatrixXd m(b, d);
    for (std::int64_t i = 0; i < b; ++i)
        for (std::int64_t j = 0; j < d; ++j) m(i, j) = t[i * d + j];
    return m;
}

inline Tensor<double> rows_to_tensor(const Eigen::MatrixXd& m, std::vector<std::int64_t> shape) {
    Tensor<double> t(std::move(shape));
    const auto b = t.dim(0);
    const auto d = t.numel() / b;
    for (std::int64_t i = 0; i < b; ++i)
        for (std::int64_t j = 0; j < d; ++j) t[i * d + j] = m(i, j);
    return t;
}

// Exact per-stage denoisers for a cascade over a single-Gaussian (or, for the
// lowest stage only, mixture) data law given at the top resolution.
inline StageDenoiserFactory<double> make_oracle_denoiser_factory(const GaussianMixture& top,
                                                                 const CascadeConfig& config, int channels) {
    const int n_stages = config.ladder.levels();
    auto laws = std::make_shared<std::vector<GaussianMixture>>();
    laws->push_back(top);  // index i-1 = law at stage i
    for (int stage = 2; stage <= n_stages; ++stage) {
        const int r = config.ladder.resolution(stage - 1);
        laws->push_back(pushforward_linear(laws->back(), avg_pool_matrix(channels, r, r)));
    }
    if (n_stages > 1 && top.components() != 1)
        throw std::invalid_argument("oracle cascade: conditional stages need a single-Gaussian data law");
    auto cfg = std::make_shared<CascadeConfig>(config);
    return [laws, cfg, channels](int stage, const Tensor<double>& prev) -> DenoiserFn<double> {
        const GaussianMixture& law = (*laws)[static_cast<std::size_t>(stage - 1)];
        if (stage == cfg->ladder.levels()) {
            return [&law](const Tensor<double>& x, double sigma) {
                return rows_to_tensor(mixture_denoiser_batch(law, tensor_to_rows(x), sigma), x.shape());
            };
        }
        const int r = cfg->ladder.resolution(stage);
        auto joint = std::make_shared<JointGaussian>(
            JointGaussian::from_highres(law.means[0], law.covs[0], avg_pool_matrix(channels, r, r)));
        auto cond = std::make_shared<Eigen::MatrixXd>(tensor_to_rows(prev));
        const double sigma_c = cfg->cond_sigma(stage);
        return [joint, cond, sigma_c](const Tensor<double>& x, double sigma) {
            return rows_to_tensor(conditional_denoiser_joint_batch(*joint, tensor_to_rows(x), *cond, sigma, sigma_c),
                                  x.shape());
        };
    };
}

}  // namespace lowdiff
