#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lowdiff/network.hpp"
#include "lowdiff/schedule.hpp"

namespace lowdiff {

enum class Integrator { heun, euler };

inline const char* integrator_name(Integrator i) { return i == Integrator::heun ? "heun" : "euler"; }

// Per-stage sampling plan: a sigma ladder of `steps()` transitions, stopped
// `trunc` transitions short of clean for non-final stages. Truncation indices
// count from the clean end, matching the ladder index of the noise level the
// stage stops at.
struct StageSchedule {
    int stage = 1;
    int trunc = 0;
    SigmaSchedule sigmas;
    Integrator integrator = Integrator::heun;

    int total_steps() const { return sigmas.steps(); }
    int steps_taken() const { return total_steps() - trunc; }
    double stop_sigma() const { return sigmas.sigmas[static_cast<std::size_t>(steps_taken())]; }

    int nfe() const {
        if (integrator == Integrator::euler) return steps_taken();
        return 2 * steps_taken() - (trunc == 0 ? 1 : 0);
    }

    void validate() const {
        if (trunc < 0 || trunc >= total_steps())
            throw std::invalid_argument("stage schedule: truncation " + std::to_string(trunc) +
                                        " outside [0," + std::to_string(total_steps()) + ")");
    }
};

struct CascadeConfig {
    ResolutionLadder ladder;
    std::vector<StageSchedule> stages;  // index stage-1
    double jitter_lo = 0.8;
    double jitter_hi = 1.25;

    const StageSchedule& schedule(int stage) const { return stages.at(static_cast<std::size_t>(stage - 1)); }

    // Training noise level for the conditioning image of stage i: the sigma at
    // which stage i+1 truncates at inference time.
    double cond_sigma(int stage) const { return schedule(stage + 1).stop_sigma(); }

    void validate() const {
        ladder.validate();
        if (stages.size() != static_cast<std::size_t>(ladder.levels()))
            throw std::invalid_argument("cascade config: need one schedule per ladder stage");
        for (int i = 1; i <= ladder.levels(); ++i) {
            if (schedule(i).stage != i)
                throw std::invalid_argument("cascade config: schedule order mismatch at stage " + std::to_string(i));
            schedule(i).validate();
        }
        if (schedule(1).trunc != 0) throw std::invalid_argument("cascade config: final stage must not truncate");
        if (!(jitter_lo <= 1.0 && 1.0 <= jitter_hi))
            throw std::invalid_argument("cascade config: jitter range must bracket 1");
    }
};

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

enum class LossMode { per_stage, summed };

template <class T>
struct TrainState {
    UnifiedNet<T> net;
    CascadeConfig cascade;
    LossWeightConfig loss_cfg;
    AdamConfig adam;
    LossMode loss_mode = LossMode::per_stage;
    std::int64_t step = 0;
    Rng rng;

    TrainState(UnifiedNet<T> n, CascadeConfig c, LossWeightConfig lw, AdamConfig a, std::uint64_t seed)
        : net(std::move(n)), cascade(std::move(c)), loss_cfg(lw), adam(a), rng(seed) {
        cascade.validate();
        if (cascade.ladder.resolutions != net.cfg.ladder.resolutions)
            throw std::invalid_argument("train state: cascade and network ladders differ");
    }
};

// Noisy low-resolution conditioning for training: downsample the clean image,
// inject independent noise at sigma_c, and upsample back to the stage size.
template <class T>
Tensor<T> prepare_condition_train(const Tensor<T>& x0, double sigma_c, Rng& rng) {
    if (sigma_c < 0.0) throw std::invalid_argument("prepare_condition_train: sigma_c must be >= 0");
    Tensor<T> low = avg_pool2_fwd(x0);
    if (sigma_c > 0.0) {
        Tensor<T> eps = rng.normal_tensor<T>(low.shape());
        low = ew_axpy(static_cast<T>(sigma_c), eps, low);
    }
    return upsample2_fwd(low, UpsampleMode::bilinear);
}

namespace detail {

template <class T>
struct StageLossNodes {
    typename Tape<T>::Id loss;
    double sigma;
};

// Records the weighted denoising loss for one stage on the given tape.
template <class T>
StageLossNodes<T> record_stage_loss(TrainState<T>& state, Tape<T>& tape, const Tensor<T>& x0_stage, int stage,
                                    std::optional<int> label) {
    const int n_stages = state.cascade.ladder.levels();
    const double sigma = sample_training_sigma(state.rng, state.loss_cfg);
    auto [x, eps] = perturb(x0_stage, sigma, state.rng);
    (void)eps;
    typename Tape<T>::Id cond_id = -1;
    if (stage < n_stages) {
        const double jitter = std::exp(state.rng.uniform(std::log(state.cascade.jitter_lo),
                                                         std::log(state.cascade.jitter_hi)));
        const double sigma_c = state.cascade.cond_sigma(stage) * jitter;
        cond_id = tape.input(prepare_condition_train(x0_stage, sigma_c, state.rng));
    }
    auto x_id = tape.input(std::move(x));
    auto denoised = state.net.forward_on(tape, x_id, cond_id, sigma, stage, label.value_or(-1));
    auto diff = tape.sub(denoised, tape.input(x0_stage));
    auto sq = tape.mul(diff, diff);
    const double lambda = loss_weight(sigma, state.loss_cfg);
    auto loss = tape.scale(tape.sum(sq), static_cast<T>(lambda / static_cast<double>(x0_stage.numel())));
    return {loss, sigma};
}

}  // namespace detail

// One masked update for a single stage: backward of the stage loss touches
// exactly the stage's active parameter set, and the Adam step is keyed by the
// gradient map, so everything else stays bit-identical.
template <class T>
T train_stage_step(TrainState<T>& state, const Tensor<T>& x0_stage, int stage, std::optional<int> label = {}) {
    Tape<T> tape;
    auto nodes = detail::record_stage_loss(state, tape, x0_stage, stage, label);
    const T loss = tape.value(nodes.loss)[0];
    if (!std::isfinite(static_cast<double>(loss)))
        throw std::runtime_error("train_stage_step: non-finite loss at stage " + std::to_string(stage));
    auto grads = tape.backward(nodes.loss);
    adam_step(state.net.params, grads, state.adam);
    return loss;
}

// Full training step over the ladder, lowest resolution first. Returns the
// per-stage losses indexed by stage-1. In summed mode the stage losses are
// added on one tape and applied as a single update.
template <class T>
std::vector<T> train_step(TrainState<T>& state, const Tensor<T>& batch, std::optional<int> label = {}) {
    const int n_stages = state.cascade.ladder.levels();
    const int r1 = state.cascade.ladder.resolution(1);
    if (batch.rank() != 4 || batch.dim(2) != r1 || batch.dim(3) != r1)
        throw std::invalid_argument("train_step: batch must be [B,C," + std::to_string(r1) + "," +
                                    std::to_string(r1) + "], got " + shape_str(batch.shape()));
    std::vector<Tensor<T>> pyramid(static_cast<std::size_t>(n_stages));
    pyramid[0] = batch;
    for (int i = 1; i < n_stages; ++i) pyramid[static_cast<std::size_t>(i)] = avg_pool2_fwd(pyramid[i - 1]);

    std::vector<T> losses(static_cast<std::size_t>(n_stages), T(0));
    if (state.loss_mode == LossMode::per_stage) {
        for (int stage = n_stages; stage >= 1; --stage)
            losses[static_cast<std::size_t>(stage - 1)] =
                train_stage_step(state, pyramid[static_cast<std::size_t>(stage - 1)], stage, label);
    } else {
        Tape<T> tape;
        typename Tape<T>::Id total = -1;
        for (int stage = n_stages; stage >= 1; --stage) {
            auto nodes = detail::record_stage_loss(state, tape, pyramid[static_cast<std::size_t>(stage - 1)], stage,
                                                   label);
            losses[static_cast<std::size_t>(stage - 1)] = tape.value(nodes.loss)[0];
            if (!std::isfinite(static_cast<double>(losses[stage - 1])))
                throw std::runtime_error("train_step: non-finite loss at stage " + std::to_string(stage));
            total = total < 0 ? nodes.loss : tape.add(total, nodes.loss);
        }
        auto grads = tape.backward(total);
        adam_step(state.net.params, grads, state.adam);
    }
    state.step += 1;
    return losses;
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

template <class T>
using DenoiserFn = std::function<Tensor<T>(const Tensor<T>&, double)>;

// One ODE step of the probability-flow sampler over the sigma ladder.
// Euler: x' = x + (s_next - s_t) d with d = (x - D(x,s_t))/s_t. Heun adds a
// trapezoidal correction using the slope at (x', s_next), skipped at s_next=0.
template <class T>
std::pair<Tensor<T>, int> sampler_step(const DenoiserFn<T>& denoiser, const Tensor<T>& x, double sigma_t,
                                       double sigma_next, Integrator integrator) {
    if (!(sigma_t > sigma_next) || sigma_next < 0.0)
        throw std::invalid_argument("sampler_step: need sigma_t > sigma_next >= 0, got " + std::to_string(sigma_t) +
                                    " -> " + std::to_string(sigma_next));
    const double dt = sigma_next - sigma_t;
    Tensor<T> d = ew_scale(ew_sub(x, denoiser(x, sigma_t)), static_cast<T>(1.0 / sigma_t));
    Tensor<T> x_next = ew_axpy(static_cast<T>(dt), d, x);
    if (integrator == Integrator::euler || sigma_next == 0.0) return {std::move(x_next), 1};
    Tensor<T> d2 = ew_scale(ew_sub(x_next, denoiser(x_next, sigma_next)), static_cast<T>(1.0 / sigma_next));
    Tensor<T> x_corr = ew_axpy(static_cast<T>(0.5 * dt), ew_add(d, d2), x);
    return {std::move(x_corr), 2};
}

template <class T>
struct StageResult {
    Tensor<T> x;  // at noise level stop_sigma(): noisy if truncated, clean otherwise
    int nfe = 0;
};

template <class T>
StageResult<T> sample_stage(const DenoiserFn<T>& denoiser, const StageSchedule& sched, Rng& rng, int batch,
                            int channels, int resolution) {
    sched.validate();
    Tensor<T> x = rng.normal_tensor<T>({batch, channels, resolution, resolution});
    x = ew_scale(x, static_cast<T>(sched.sigmas.sigma_max));
    StageResult<T> out;
    out.nfe = 0;
    const int steps = sched.steps_taken();
    for (int i = 0; i < steps; ++i) {
        auto [x_next, evals] =
            sampler_step(denoiser, x, sched.sigmas.sigmas[static_cast<std::size_t>(i)],
                         sched.sigmas.sigmas[static_cast<std::size_t>(i) + 1], sched.integrator);
        x = std::move(x_next);
        out.nfe += evals;
    }
    out.x = std::move(x);
    return out;
}

struct StageNfe {
    int stage = 0;
    int resolution = 0;
    int steps = 0;
    int nfe = 0;
    double seconds = 0.0;  // wall-clock spent inside the stage
};

// Builds the denoiser for one stage. `prev` is the raw (not yet upsampled)
// output of the previous stage at its truncation noise level; empty for the
// lowest stage.
template <class T>
using StageDenoiserFactory = std::function<DenoiserFn<T>(int stage, const Tensor<T>& prev)>;

template <class T>
struct CascadeResult {
    Tensor<T> x;                  // clean batch at the top resolution
    std::vector<StageNfe> stages;  // execution order: stage N first
};

// Algorithm: sample the lowest resolution unconditionally, truncate, then let
// each higher stage condition on the upsampled previous output until the full
// resolution runs to sigma = 0.
template <class T>
CascadeResult<T> sample_cascade(const StageDenoiserFactory<T>& factory, const CascadeConfig& config, Rng& rng,
                                int batch, int channels) {
    config.validate();
    CascadeResult<T> out;
    Tensor<T> prev;
    for (int stage = config.ladder.levels(); stage >= 1; --stage) {
        const auto t0 = std::chrono::steady_clock::now();
        DenoiserFn<T> denoiser = factory(stage, prev);
        auto res = sample_stage(denoiser, config.schedule(stage), rng, batch, channels,
                                config.ladder.resolution(stage));
        const auto t1 = std::chrono::steady_clock::now();
        out.stages.push_back(StageNfe{stage, config.ladder.resolution(stage), config.schedule(stage).steps_taken(),
                                      res.nfe, std::chrono::duration<double>(t1 - t0).count()});
        prev = std::move(res.x);
    }
    out.x = std::move(prev);
    return out;
}

// Net-backed factory: conditional stages see the upsampled previous output
// concatenated at the input convolution.
template <class T>
StageDenoiserFactory<T> make_net_denoiser_factory(const UnifiedNet<T>& net, std::optional<int> label = {}) {
    return [&net, label](int stage, const Tensor<T>& prev) -> DenoiserFn<T> {
        const int n_stages = net.cfg.ladder.levels();
        if (stage == n_stages) {
            return [&net, stage, label](const Tensor<T>& x, double sigma) {
                return net.forward(x, nullptr, sigma, stage, label.value_or(-1));
            };
        }
        auto cond = std::make_shared<Tensor<T>>(upsample2_fwd(prev, UpsampleMode::bilinear));
        return [&net, stage, label, cond](const Tensor<T>& x, double sigma) {
            return net.forward(x, cond.get(), sigma, stage, label.value_or(-1));
        };
    };
}

}  // namespace lowdiff
