#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lowdiff/cascade.hpp"
#include "lowdiff/network.hpp"
#include "lowdiff/oracle.hpp"
#include "lowdiff/serialize.hpp"

// Flat key = value run configuration: every knob in one file, unknown keys
// rejected, and the canonical rendering of the effective values is digested
// into checkpoints for compatibility checks.

namespace lowdiff {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::map<std::string, std::string> parse_kv_text(std::istream& is, const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!kv.emplace(key, val).second)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
    }
    return kv;
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    return parse_kv_text(is, path);
}

inline std::vector<double> parse_list(const std::string& s, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument("");
        } catch (...) {
            throw std::invalid_argument("config: key " + key + ": bad number '" + item + "'");
        }
    }
    if (out.empty()) throw std::invalid_argument("config: key " + key + ": empty list");
    return out;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Pulls typed values out of a raw key/value map and records which keys were
// consumed so leftovers can be rejected.
class KvReader {
public:
    KvReader(std::map<std::string, std::string> kv, std::string origin) : kv_(std::move(kv)), origin_(std::move(origin)) {}

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string str(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    double num(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw std::invalid_argument(origin_ + ": key " + key + ": bad number '" + it->second + "'");
        }
    }

    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        const double v = num(key, static_cast<double>(fallback));
        const auto i = static_cast<std::int64_t>(v);
        if (static_cast<double>(i) != v)
            throw std::invalid_argument(origin_ + ": key " + key + ": expected an integer");
        return i;
    }

    std::vector<double> list(const std::string& key, const std::string& fallback) {
        return parse_list(str(key, fallback), key);
    }

    void reject_unknown() const {
        std::vector<std::string> unknown;
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) unknown.push_back(k);
        if (!unknown.empty()) {
            std::string msg = origin_ + ": unknown key(s):";
            for (const auto& k : unknown) msg += " " + k;
            throw std::invalid_argument(msg);
        }
    }

private:
    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
    std::string origin_;
};

}  // namespace detail

struct StageKnobs {
    int steps = 18;
    int trunc = 0;
    double sigma_min = 0.01;
    double sigma_max = 50.0;
    double rho = 7.0;
    Integrator integrator = Integrator::heun;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::int64_t steps = 1000;
    int batch = 32;
    double lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only

    std::string dataset = "shapes";  // "shapes" or a .ldtn path
    std::int64_t shapes_count = 2048;
    int shapes_palette = 8;

    std::vector<int> ladder = {16, 8};
    int image_channels = 3;
    int base_channels = 32;
    std::vector<int> channel_mult = {1, 2, 2, 4};
    int blocks_per_level = 2;
    int embed_dim = 64;
    int label_count = 0;

    double sigma_data = 0.5;
    double p_mean = -1.2;
    double p_std = 1.2;
    double jitter_lo = 0.8;
    double jitter_hi = 1.25;
    LossMode loss_mode = LossMode::per_stage;

    std::vector<StageKnobs> stages;  // index stage-1
    int bench_single_steps = 18;

    int n_stages() const { return static_cast<int>(ladder.size()); }

    static RunConfig from_file(const std::string& path, const std::map<std::string, std::string>& overrides = {}) {
        auto kv = detail::parse_kv_file(path);
        for (const auto& [k, v] : overrides) kv[k] = v;
        return from_kv(std::move(kv), path);
    }

    static RunConfig from_kv(std::map<std::string, std::string> kv, const std::string& origin) {
        detail::KvReader r(std::move(kv), origin);
        RunConfig c;
        c.seed = static_cast<std::uint64_t>(r.integer("seed", 0));
        c.steps = r.integer("steps", c.steps);
        c.batch = static_cast<int>(r.integer("batch", c.batch));
        c.lr = r.num("lr", c.lr);
        c.adam_beta1 = r.num("adam_beta1", c.adam_beta1);
        c.adam_beta2 = r.num("adam_beta2", c.adam_beta2);
        c.adam_eps = r.num("adam_eps", c.adam_eps);
        c.checkpoint_every = r.integer("checkpoint_every", c.checkpoint_every);
        c.dataset = r.str("dataset", c.dataset);
        c.shapes_count = r.integer("shapes_count", c.shapes_count);
        c.shapes_palette = static_cast<int>(r.integer("shapes_palette", c.shapes_palette));
        {
            auto lad = r.list("ladder", "16,8");
            c.ladder.clear();
            for (double v : lad) c.ladder.push_back(static_cast<int>(v));
        }
        c.image_channels = static_cast<int>(r.integer("image_channels", c.image_channels));
        c.base_channels = static_cast<int>(r.integer("base_channels", c.base_channels));
        {
            auto cm = r.list("channel_mult", "1,2,2,4");
            c.channel_mult.clear();
            for (double v : cm) c.channel_mult.push_back(static_cast<int>(v));
        }
        c.blocks_per_level = static_cast<int>(r.integer("blocks_per_level", c.blocks_per_level));
        c.embed_dim = static_cast<int>(r.integer("embed_dim", c.embed_dim));
        c.label_count = static_cast<int>(r.integer("label_count", c.label_count));
        c.sigma_data = r.num("sigma_data", c.sigma_data);
        c.p_mean = r.num("p_mean", c.p_mean);
        c.p_std = r.num("p_std", c.p_std);
        c.jitter_lo = r.num("jitter_lo", c.jitter_lo);
        c.jitter_hi = r.num("jitter_hi", c.jitter_hi);
        {
            const std::string lm = r.str("loss_mode", "per_stage");
            if (lm == "per_stage")
                c.loss_mode = LossMode::per_stage;
            else if (lm == "summed")
                c.loss_mode = LossMode::summed;
            else
                throw std::invalid_argument(origin + ": loss_mode must be per_stage or summed");
        }
        c.bench_single_steps = static_cast<int>(r.integer("bench_single_steps", c.bench_single_steps));

        const int n = c.n_stages();
        c.stages.resize(static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i) {
            StageKnobs& s = c.stages[static_cast<std::size_t>(i - 1)];
            const std::string sfx = "_stage" + std::to_string(i);
            const bool lowest = (i == n);
            s.steps = static_cast<int>(r.integer("steps" + sfx, lowest && n > 1 ? 35 : 18));
            s.sigma_min = r.num("sigma_min" + sfx, lowest ? 0.002 : 0.01);
            s.sigma_max = r.num("sigma_max" + sfx, lowest ? 80.0 : 50.0);
            s.rho = r.num("rho" + sfx, 7.0);
            const std::int64_t default_trunc = (i == 1) ? 0 : std::llround(0.54 * s.steps);
            s.trunc = static_cast<int>(r.integer("trunc" + sfx, default_trunc));
            const std::string integ = r.str("integrator" + sfx, "heun");
            if (integ == "heun")
                s.integrator = Integrator::heun;
            else if (integ == "euler")
                s.integrator = Integrator::euler;
            else
                throw std::invalid_argument(origin + ": integrator" + sfx + " must be heun or euler");
        }
        r.reject_unknown();
        c.validate();
        return c;
    }

    void validate() const {
        net_config().validate();
        cascade_config().validate();
        if (steps < 0 || batch < 1 || shapes_count < 1 || checkpoint_every < 0)
            throw std::invalid_argument("config: steps/batch/shapes_count/checkpoint_every out of range");
        if (!(lr > 0.0) || !(p_std > 0.0) || !(sigma_data > 0.0))
            throw std::invalid_argument("config: lr, p_std and sigma_data must be positive");
        if (bench_single_steps < 2) throw std::invalid_argument("config: bench_single_steps must be >= 2");
    }

    NetConfig net_config() const {
        NetConfig nc;
        nc.ladder.resolutions = ladder;
        nc.image_channels = image_channels;
        nc.base_channels = base_channels;
        nc.channel_mult = channel_mult;
        nc.blocks_per_level = blocks_per_level;
        nc.embed_dim = embed_dim;
        nc.label_count = label_count;
        nc.sigma_data = sigma_data;
        return nc;
    }

    CascadeConfig cascade_config() const {
        CascadeConfig cc;
        cc.ladder.resolutions = ladder;
        cc.jitter_lo = jitter_lo;
        cc.jitter_hi = jitter_hi;
        for (int i = 1; i <= n_stages(); ++i) {
            const StageKnobs& s = stages[static_cast<std::size_t>(i - 1)];
            StageSchedule ss;
            ss.stage = i;
            ss.trunc = s.trunc;
            ss.sigmas = karras_sigmas(s.steps, s.sigma_min, s.sigma_max, s.rho);
            ss.integrator = s.integrator;
            cc.stages.push_back(std::move(ss));
        }
        return cc;
    }

    LossWeightConfig loss_config() const { return LossWeightConfig{sigma_data, p_mean, p_std}; }
    AdamConfig adam_config() const { return AdamConfig{lr, adam_beta1, adam_beta2, adam_eps}; }

    // Sorted effective key=value rendering; the checkpoint digest is the
    // FNV-1a of this text.
    std::string canonical_text() const {
        std::map<std::string, std::string> kv;
        kv["seed"] = std::to_string(seed);
        kv["steps"] = std::to_string(steps);
        kv["batch"] = std::to_string(batch);
        kv["lr"] = detail::fmt_double(lr);
        kv["adam_beta1"] = detail::fmt_double(adam_beta1);
        kv["adam_beta2"] = detail::fmt_double(adam_beta2);
        kv["adam_eps"] = detail::fmt_double(adam_eps);
        kv["checkpoint_every"] = std::to_string(checkpoint_every);
        kv["dataset"] = dataset;
        kv["shapes_count"] = std::to_string(shapes_count);
        kv["shapes_palette"] = std::to_string(shapes_palette);
        kv["image_channels"] = std::to_string(image_channels);
        kv["base_channels"] = std::to_string(base_channels);
        kv["blocks_per_level"] = std::to_string(blocks_per_level);
        kv["embed_dim"] = std::to_string(embed_dim);
        kv["label_count"] = std::to_string(label_count);
        kv["sigma_data"] = detail::fmt_double(sigma_data);
        kv["p_mean"] = detail::fmt_double(p_mean);
        kv["p_std"] = detail::fmt_double(p_std);
        kv["jitter_lo"] = detail::fmt_double(jitter_lo);
        kv["jitter_hi"] = detail::fmt_double(jitter_hi);
        kv["loss_mode"] = loss_mode == LossMode::per_stage ? "per_stage" : "summed";
        kv["bench_single_steps"] = std::to_string(bench_single_steps);
        {
            std::string s;
            for (std::size_t i = 0; i < ladder.size(); ++i) s += (i ? "," : "") + std::to_string(ladder[i]);
            kv["ladder"] = s;
        }
        {
            std::string s;
            for (std::size_t i = 0; i < channel_mult.size(); ++i) s += (i ? "," : "") + std::to_string(channel_mult[i]);
            kv["channel_mult"] = s;
        }
        for (int i = 1; i <= n_stages(); ++i) {
            const StageKnobs& s = stages[static_cast<std::size_t>(i - 1)];
            const std::string sfx = "_stage" + std::to_string(i);
            kv["steps" + sfx] = std::to_string(s.steps);
            kv["trunc" + sfx] = std::to_string(s.trunc);
            kv["sigma_min" + sfx] = detail::fmt_double(s.sigma_min);
            kv["sigma_max" + sfx] = detail::fmt_double(s.sigma_max);
            kv["rho" + sfx] = detail::fmt_double(s.rho);
            kv["integrator" + sfx] = integrator_name(s.integrator);
        }
        std::string out;
        for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
        return out;
    }

    std::uint64_t digest() const { return fnv1a64(canonical_text()); }
};

// --- Gaussian mixture spec files ---------------------------------------------
//
//   dim = 4
//   components = 2
//   weight1 = 0.5
//   mean1 = 0,0,0,0            (or `mean1 = const:0.1`)
//   cov1_iso = 0.25            (or cov1_diag = ..., cov1 = full row-major list,
//                               or cov1_rbf = variance,length,ridge over an
//                               image grid given by grid_res / grid_channels)

inline GaussianMixture parse_mixture_kv(std::map<std::string, std::string> raw, const std::string& origin) {
    detail::KvReader r(std::move(raw), origin);
    const int dim = static_cast<int>(r.integer("dim", 0));
    const int K = static_cast<int>(r.integer("components", 1));
    if (dim < 1 || K < 1) throw std::invalid_argument(origin + ": need dim >= 1 and components >= 1");
    const int grid_res = static_cast<int>(r.integer("grid_res", 0));
    const int grid_channels = static_cast<int>(r.integer("grid_channels", 1));
    GaussianMixture m;
    m.weights.resize(K);
    for (int k = 1; k <= K; ++k) {
        const std::string kk = std::to_string(k);
        m.weights[k - 1] = r.num("weight" + kk, K == 1 ? 1.0 : 0.0);
        Eigen::VectorXd mu(dim);
        const std::string mean_s = r.str("mean" + kk, "const:0");
        if (mean_s.rfind("const:", 0) == 0) {
            mu.setConstant(std::stod(mean_s.substr(6)));
        } else {
            auto vals = detail::parse_list(mean_s, "mean" + kk);
            if (static_cast<int>(vals.size()) != dim)
                throw std::invalid_argument(origin + ": mean" + kk + " needs " + std::to_string(dim) + " entries");
            for (int j = 0; j < dim; ++j) mu[j] = vals[static_cast<std::size_t>(j)];
        }
        m.means.push_back(std::move(mu));
        Eigen::MatrixXd cov;
        if (r.has("cov" + kk + "_iso")) {
            cov = r.num("cov" + kk + "_iso", 1.0) * Eigen::MatrixXd::Identity(dim, dim);
        } else if (r.has("cov" + kk + "_diag")) {
            auto vals = r.list("cov" + kk + "_diag", "");
            if (static_cast<int>(vals.size()) != dim)
                throw std::invalid_argument(origin + ": cov" + kk + "_diag needs " + std::to_string(dim) + " entries");
            cov = Eigen::MatrixXd::Zero(dim, dim);
            for (int j = 0; j < dim; ++j) cov(j, j) = vals[static_cast<std::size_t>(j)];
        } else if (r.has("cov" + kk + "_rbf")) {
            auto vals = r.list("cov" + kk + "_rbf", "");
            if (vals.size() != 3) throw std::invalid_argument(origin + ": cov" + kk + "_rbf = variance,length,ridge");
            if (grid_res * grid_res * grid_channels != dim)
                throw std::invalid_argument(origin + ": rbf covariance needs grid_res/grid_channels matching dim");
            cov = Eigen::MatrixXd::Zero(dim, dim);
            const double var = vals[0], len = vals[1], ridge = vals[2];
            const int hw = grid_res * grid_res;
            for (int c = 0; c < grid_channels; ++c)
                for (int a = 0; a < hw; ++a)
                    for (int b = 0; b < hw; ++b) {
                        const double dy = (a / grid_res) - (b / grid_res);
                        const double dx = (a % grid_res) - (b % grid_res);
                        cov(c * hw + a, c * hw + b) = var * std::exp(-(dx * dx + dy * dy) / (2.0 * len * len));
                    }
            cov += ridge * Eigen::MatrixXd::Identity(dim, dim);
        } else {
            auto vals = r.list("cov" + kk, "");
            if (static_cast<int>(vals.size()) != dim * dim)
                throw std::invalid_argument(origin + ": cov" + kk + " needs " + std::to_string(dim * dim) + " entries");
            cov.resize(dim, dim);
            for (int a = 0; a < dim; ++a)
                for (int b = 0; b < dim; ++b) cov(a, b) = vals[static_cast<std::size_t>(a * dim + b)];
        }
        m.covs.push_back(std::move(cov));
    }
    r.reject_unknown();
    m.validate();
    return m;
}

inline GaussianMixture parse_mixture_file(const std::string& path) {
    return parse_mixture_kv(detail::parse_kv_file(path), path);
}

}  // namespace lowdiff
