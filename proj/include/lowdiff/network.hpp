#pragma once

#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lowdiff/autodiff.hpp"
#include "lowdiff/optimizer.hpp"
#include "lowdiff/rng.hpp"
#include "lowdiff/tensor.hpp"

namespace lowdiff {

// Resolutions r_1 > r_2 > ... > r_N, each a power-of-two side, halving at
// every step. Stage 1 is the full-resolution (final) stage, stage N the
// lowest-resolution (unconditional) one.
struct ResolutionLadder {
    std::vector<int> resolutions;

    int levels() const { return static_cast<int>(resolutions.size()); }
    int resolution(int stage) const { return resolutions.at(static_cast<std::size_t>(stage - 1)); }

    void validate() const {
        if (resolutions.empty()) throw std::invalid_argument("ladder: empty resolution set");
        for (std::size_t i = 0; i < resolutions.size(); ++i) {
            const int r = resolutions[i];
            if (r < 2 || (r & (r - 1)) != 0)
                throw std::invalid_argument("ladder: resolution " + std::to_string(r) + " is not a power of two >= 2");
            if (i > 0 && resolutions[i - 1] != 2 * r)
                throw std::invalid_argument("ladder: consecutive resolutions must halve, got " +
                                            std::to_string(resolutions[i - 1]) + " -> " + std::to_string(r));
        }
    }
};

struct NetConfig {
    ResolutionLadder ladder;
    int image_channels = 3;
    int base_channels = 32;
    std::vector<int> channel_mult = {1, 2, 2, 4};
    int blocks_per_level = 2;
    int embed_dim = 64;
    int label_count = 0;  // 0 = unconditional
    double sigma_data = 0.5;

    int trunk_depth() const { return static_cast<int>(channel_mult.size()); }
    int level_channels(int level) const { return base_channels * channel_mult.at(static_cast<std::size_t>(level)); }

    void validate() const {
        ladder.validate();
        if (trunk_depth() < ladder.levels())
            throw std::invalid_argument("net config: trunk depth " + std::to_string(trunk_depth()) +
                                        " shallower than ladder with " + std::to_string(ladder.levels()) + " stages");
        if (image_channels < 1 || base_channels < 1 || embed_dim < 2 || embed_dim % 2 != 0)
            throw std::invalid_argument("net config: bad channel/embedding sizes");
        if (blocks_per_level < 1) throw std::invalid_argument("net config: blocks_per_level must be >= 1");
        const int r1 = ladder.resolutions.front();
        if (r1 < (1 << (trunk_depth() - 1)))
            throw std::invalid_argument("net config: trunk depth " + std::to_string(trunk_depth()) +
                                        " too deep for top resolution " + std::to_string(r1));
        for (int l = 0; l < trunk_depth(); ++l) {
            const int c = level_channels(l);
            if (c % norm_groups(c) != 0)
                throw std::invalid_argument("net config: level channels " + std::to_string(c) +
                                            " not divisible by its normalization group count");
        }
    }

    static int norm_groups(int channels) { return channels < 8 ? 4 : 8; }
};

// EDM-style preconditioner coefficients around the raw network output.
struct Precond {
    double c_skip, c_out, c_in;
    Precond(double sigma, double sigma_data) {
        const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
        c_skip = d2 / (s2 + d2);
        c_out = sigma * sigma_data / std::sqrt(s2 + d2);
        c_in = 1.0 / std::sqrt(s2 + d2);
    }
};

// One shared U-Net trunk reused across the resolution ladder: stage i enters
// at spatial level i-1, so the blocks a low-resolution stage runs are exactly
// the deep blocks of every higher-resolution pathway. Per-stage state is
// limited to the input/output convolutions and one row of the resolution
// embedding map.
template <class T>
class UnifiedNet {
public:
    NetConfig cfg;
    ParamStore<T> params;

    static UnifiedNet build(const NetConfig& cfg, Rng& rng) {
        cfg.validate();
        UnifiedNet net;
        net.cfg = cfg;
        const int E = cfg.embed_dim, L = cfg.trunk_depth(), N = cfg.ladder.levels();

        net.add_dense("embed.sigma.fc1", E, E, rng);
        net.add_dense("embed.sigma.fc2", E, E, rng);
        net.params.add("embed.res.map", Tensor<T>({N, E}));
        if (cfg.label_count > 0) net.params.add("embed.label.map", Tensor<T>({cfg.label_count, E}));

        for (int l = 0; l < L; ++l)
            for (int b = 0; b < cfg.blocks_per_level; ++b)
                net.add_resblock(enc_prefix(l, b), cfg.level_channels(l), cfg.level_channels(l), rng);
        for (int l = 0; l + 1 < L; ++l)
            net.add_conv(down_prefix(l), cfg.level_channels(l), cfg.level_channels(l + 1), 1, rng, false);
        net.add_resblock("trunk.mid", cfg.level_channels(L - 1), cfg.level_channels(L - 1), rng);
        for (int l = 0; l < L; ++l) {
            net.add_resblock(dec_prefix(l, 0), 2 * cfg.level_channels(l), cfg.level_channels(l), rng);
            for (int b = 1; b < cfg.blocks_per_level; ++b)
                net.add_resblock(dec_prefix(l, b), cfg.level_channels(l), cfg.level_channels(l), rng);
        }
        for (int l = 1; l < L; ++l)
            net.add_conv(up_prefix(l), cfg.level_channels(l), cfg.level_channels(l - 1), 1, rng, false);

        for (int stage = 1; stage <= N; ++stage) {
            const int r = cfg.ladder.resolution(stage);
            const int cin = (stage < N ? 2 : 1) * cfg.image_channels;
            net.add_conv(in_prefix(r), cin, cfg.level_channels(stage - 1), 3, rng, false);
            net.add_conv(out_prefix(r), cfg.level_channels(stage - 1), cfg.image_channels, 3, rng, true);
        }
        return net;
    }

    // --- forward ----------------------------------------------------------

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* cond, double sigma, int stage, int label = -1) const {
        EagerCtx<T> ctx;
        ctx.lookup = [this](const std::string& n) -> const Tensor<T>& { return params.get(n); };
        auto xr = ctx.alias(x);
        auto cr = cond ? ctx.alias(*cond) : ctx.none();
        auto out = forward_impl(ctx, xr, cr, sigma, stage, label);
        return *out;
    }

    typename Tape<T>::Id forward_on(Tape<T>& tape, typename Tape<T>::Id x, typename Tape<T>::Id cond, double sigma,
                                    int stage, int label = -1) const {
        TapeCtx<T> ctx;
        ctx.tape = &tape;
        ctx.lookup = [this](const std::string& n) -> const Tensor<T>& { return params.get(n); };
        return forward_impl(ctx, x, cond, sigma, stage, label);
    }

    // Learnable embedding of the one-hot stage indicator: row `stage-1` of the
    // stored [N, embed_dim] map.
    Tensor<T> resolution_embed(int stage) const {
        check_stage(stage);
        const Tensor<T>& map = params.get("embed.res.map");
        Tensor<T> e({static_cast<std::int64_t>(cfg.embed_dim)});
        for (int j = 0; j < cfg.embed_dim; ++j) e[j] = map[(stage - 1) * cfg.embed_dim + j];
        return e;
    }

    // --- per-stage activation structure ------------------------------------

    std::set<std::string> active_params(int stage) const {
        check_stage(stage);
        const int L = cfg.trunk_depth(), entry = stage - 1;
        std::set<std::string> out;
        auto add_prefixed = [&](const std::string& prefix) {
            for (const auto& name : params.names())
                if (name.rfind(prefix, 0) == 0) out.insert(name);
        };
        add_prefixed("embed.sigma.");
        out.insert("embed.res.map");
        if (cfg.label_count > 0) out.insert("embed.label.map");
        for (int l = entry; l < L; ++l)
            for (int b = 0; b < cfg.blocks_per_level; ++b) {
                add_prefixed(enc_prefix(l, b) + ".");
                add_prefixed(dec_prefix(l, b) + ".");
            }
        add_prefixed("trunk.mid.");
        for (int l = entry; l + 1 < L; ++l) add_prefixed(down_prefix(l) + ".");
        for (int l = entry + 1; l < L; ++l) add_prefixed(up_prefix(l) + ".");
        const int r = cfg.ladder.resolution(stage);
        add_prefixed(in_prefix(r) + ".");
        add_prefixed(out_prefix(r) + ".");
        return out;
    }

    std::int64_t trunk_scalar_count() const {
        std::int64_t n = 0;
        for (const auto& [name, slot] : params)
            if (!is_stage_specific(name)) n += slot.value.numel();
        return n;
    }

    std::int64_t stage_specific_scalar_count() const {
        std::int64_t n = 0;
        for (const auto& [name, slot] : params)
            if (is_stage_specific(name)) n += slot.value.numel();
        return n;
    }

private:
    static bool is_stage_specific(const std::string& name) {
        return name.rfind("io.", 0) == 0 || name == "embed.res.map";
    }

    static std::string enc_prefix(int l, int b) { return "trunk.enc.l" + std::to_string(l) + ".b" + std::to_string(b); }
    static std::string dec_prefix(int l, int b) { return "trunk.dec.l" + std::to_string(l) + ".b" + std::to_string(b); }
    static std::string down_prefix(int l) { return "trunk.down.l" + std::to_string(l); }
    static std::string up_prefix(int l) { return "trunk.up.l" + std::to_string(l); }
    static std::string in_prefix(int r) { return "io.in.r" + std::to_string(r); }
    static std::string out_prefix(int r) { return "io.out.r" + std::to_string(r); }

    void check_stage(int stage) const {
        if (stage < 1 || stage > cfg.ladder.levels())
            throw std::invalid_argument("stage " + std::to_string(stage) + " outside ladder of " +
                                        std::to_string(cfg.ladder.levels()) + " stages");
    }

    void add_conv(const std::string& prefix, int cin, int cout, int k, Rng& rng, bool zero_init) {
        Tensor<T> w({cout, cin, k, k});
        if (!zero_init) {
            const double std = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
            for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(std * rng.normal());
        }
        params.add(prefix + ".weight", std::move(w));
        params.add(prefix + ".bias", Tensor<T>({cout}));
    }

    void add_dense(const std::string& prefix, int in_dim, int out_dim, Rng& rng) {
        Tensor<T> w({in_dim, out_dim});
        const double std = std::sqrt(2.0 / static_cast<double>(in_dim));
        for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(std * rng.normal());
        params.add(prefix + ".weight", std::move(w));
        params.add(prefix + ".bias", Tensor<T>({out_dim}));
    }

    void add_resblock(const std::string& prefix, int cin, int cout, Rng& rng) {
        add_conv(prefix + ".conv1", cin, cout, 3, rng, false);
        params.add(prefix + ".gn1.gamma", Tensor<T>::full({cout}, T(1)));
        params.add(prefix + ".gn1.beta", Tensor<T>({cout}));
        add_dense(prefix + ".proj", cfg.embed_dim, cout, rng);
        add_conv(prefix + ".conv2", cout, cout, 3, rng, false);
        params.add(prefix + ".gn2.gamma", Tensor<T>::full({cout}, T(1)));
        params.add(prefix + ".gn2.beta", Tensor<T>({cout}));
        if (cin != cout) add_conv(prefix + ".skip", cin, cout, 1, rng, false);
    }

    Tensor<T> sigma_features(double sigma) const {
        const int half = cfg.embed_dim / 2;
        Tensor<T> f({1, static_cast<std::int64_t>(cfg.embed_dim)});
        const double t = std::log(sigma) / 4.0;
        for (int j = 0; j < half; ++j) {
            const double w = half == 1 ? 1.0 : std::exp(std::log(200.0) * j / (half - 1));
            f[j] = static_cast<T>(std::sin(t * w));
            f[half + j] = static_cast<T>(std::cos(t * w));
        }
        return f;
    }

    template <class Ctx>
    typename Ctx::Ref resblock(Ctx& ctx, typename Ctx::Ref h, const std::string& prefix, int cin, int cout,
                               typename Ctx::Ref semb) const {
        auto conv = [&](typename Ctx::Ref in, const std::string& name, int pad) {
            return ctx.conv2d(in, ctx.param(name + ".weight"), ctx.param(name + ".bias"), pad);
        };
        auto t = conv(h, prefix + ".conv1", 1);
        t = ctx.group_norm(t, ctx.param(prefix + ".gn1.gamma"), ctx.param(prefix + ".gn1.beta"),
                           NetConfig::norm_groups(cout));
        t = ctx.silu(t);
        auto proj = ctx.dense(semb, ctx.param(prefix + ".proj.weight"), ctx.param(prefix + ".proj.bias"));
        t = ctx.channel_bias(t, proj);
        t = conv(t, prefix + ".conv2", 1);
        t = ctx.group_norm(t, ctx.param(prefix + ".gn2.gamma"), ctx.param(prefix + ".gn2.beta"),
                           NetConfig::norm_groups(cout));
        t = ctx.silu(t);
        auto s = (cin == cout) ? h : conv(h, prefix + ".skip", 0);
        return ctx.add(t, s);
    }

    template <class Ctx>
    typename Ctx::Ref forward_impl(Ctx& ctx, typename Ctx::Ref x, typename Ctx::Ref cond, double sigma, int stage,
                                   int label) const {
        check_stage(stage);
        const int N = cfg.ladder.levels(), L = cfg.trunk_depth(), entry = stage - 1;
        const int r = cfg.ladder.resolution(stage);
        if (!(sigma > 0.0)) throw std::invalid_argument("forward: sigma must be positive");
        const Tensor<T>& xv = ctx.value(x);
        require_rank(xv, 4, "forward input");
        if (xv.dim(1) != cfg.image_channels || xv.dim(2) != r || xv.dim(3) != r)
            throw std::invalid_argument("forward: stage " + std::to_string(stage) + " expects [B," +
                                        std::to_string(cfg.image_channels) + "," + std::to_string(r) + "," +
                                        std::to_string(r) + "], got " + shape_str(xv.shape()));
        const bool has_cond = !Ctx::is_none(cond);
        if (stage < N && !has_cond)
            throw std::invalid_argument("forward: conditional stage " + std::to_string(stage) + " requires cond");
        if (stage == N && has_cond) throw std::invalid_argument("forward: lowest stage takes no cond");
        if (has_cond && !ctx.value(cond).same_shape(xv))
            throw std::invalid_argument("forward: cond shape " + shape_str(ctx.value(cond).shape()) +
                                        " does not match input " + shape_str(xv.shape()));
        if (cfg.label_count > 0 && (label < 0 || label >= cfg.label_count))
            throw std::invalid_argument("forward: class-conditional net needs label in [0," +
                                        std::to_string(cfg.label_count) + ")");

        // combined embedding: sigma features through the mapping MLP, plus the
        // one-hot resolution row, plus the optional label row
        auto e = ctx.dense(ctx.input(sigma_features(sigma)), ctx.param("embed.sigma.fc1.weight"),
                           ctx.param("embed.sigma.fc1.bias"));
        e = ctx.silu(e);
        e = ctx.dense(e, ctx.param("embed.sigma.fc2.weight"), ctx.param("embed.sigma.fc2.bias"));
        {
            Tensor<T> onehot({1, static_cast<std::int64_t>(N)});
            onehot[stage - 1] = T(1);
            e = ctx.add(e, ctx.dense(ctx.input(std::move(onehot)), ctx.param("embed.res.map"), Ctx::none()));
        }
        if (cfg.label_count > 0) {
            Tensor<T> onehot({1, static_cast<std::int64_t>(cfg.label_count)});
            onehot[label] = T(1);
            e = ctx.add(e, ctx.dense(ctx.input(std::move(onehot)), ctx.param("embed.label.map"), Ctx::none()));
        }
        auto semb = ctx.silu(e);

        const Precond pc(sigma, cfg.sigma_data);
        auto h = ctx.scale(x, static_cast<T>(pc.c_in));
        if (has_cond) h = ctx.concat_channels(h, cond);
        h = ctx.conv2d(h, ctx.param(in_prefix(r) + ".weight"), ctx.param(in_prefix(r) + ".bias"), 1);

        std::vector<typename Ctx::Ref> skips(static_cast<std::size_t>(L), Ctx::none());
        for (int l = entry; l < L; ++l) {
            for (int b = 0; b < cfg.blocks_per_level; ++b)
                h = resblock(ctx, h, enc_prefix(l, b), cfg.level_channels(l), cfg.level_channels(l), semb);
            skips[static_cast<std::size_t>(l)] = h;
            if (l + 1 < L) {
                h = ctx.avg_pool2(h);
                h = ctx.conv2d(h, ctx.param(down_prefix(l) + ".weight"), ctx.param(down_prefix(l) + ".bias"), 0);
            }
        }
        h = resblock(ctx, h, "trunk.mid", cfg.level_channels(L - 1), cfg.level_channels(L - 1), semb);
        for (int l = L - 1; l >= entry; --l) {
            h = ctx.concat_channels(h, skips[static_cast<std::size_t>(l)]);
            h = resblock(ctx, h, dec_prefix(l, 0), 2 * cfg.level_channels(l), cfg.level_channels(l), semb);
            for (int b = 1; b < cfg.blocks_per_level; ++b)
                h = resblock(ctx, h, dec_prefix(l, b), cfg.level_channels(l), cfg.level_channels(l), semb);
            if (l > entry) {
                h = ctx.upsample2(h, UpsampleMode::bilinear);
                h = ctx.conv2d(h, ctx.param(up_prefix(l) + ".weight"), ctx.param(up_prefix(l) + ".bias"), 0);
            }
        }
        auto raw = ctx.conv2d(ctx.silu(h), ctx.param(out_prefix(r) + ".weight"), ctx.param(out_prefix(r) + ".bias"), 1);
        return ctx.add(ctx.scale(x, static_cast<T>(pc.c_skip)), ctx.scale(raw, static_cast<T>(pc.c_out)));
    }
};

}  // namespace lowdiff
