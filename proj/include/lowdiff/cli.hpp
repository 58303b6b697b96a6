#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "lowdiff/cascade.hpp"
#include "lowdiff/config.hpp"
#include "lowdiff/dataset.hpp"
#include "lowdiff/metrics.hpp"
#include "lowdiff/network.hpp"
#include "lowdiff/oracle.hpp"
#include "lowdiff/serialize.hpp"

// Command implementations behind the lowdiff binary. Kept in a header so the
// test suites can drive the exact same paths in-process.

namespace lowdiff::cli {

using json = nlohmann::json;

// Table-5-style measurement protocol: one batch of 64 per trial, averaged
// over 10 runs after warmup.
inline constexpr int kBenchDefaultBatch = 64;
inline constexpr int kBenchDefaultWarmup = 2;
inline constexpr int kBenchDefaultReps = 10;

inline std::string hardware_note() {
    return "cpu x86_64, " + std::to_string(std::thread::hardware_concurrency()) + " hw threads, single-threaded run";
}

inline void ensure_dir(const std::string& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

class JsonlWriter {
public:
    JsonlWriter(const std::string& path, bool echo_stdout) : echo_(echo_stdout) {
        if (!path.empty()) {
            os_.open(path, std::ios::trunc);
            if (!os_) throw std::runtime_error("cannot open log file " + path);
        }
    }

    void write(const json& record) {
        const std::string line = record.dump();
        if (os_.is_open()) os_ << line << "\n";
        if (echo_) std::cout << line << "\n";
    }

    void flush() {
        if (os_.is_open()) os_.flush();
        if (echo_) std::cout.flush();
    }

private:
    std::ofstream os_;
    bool echo_;
};

// Derived sub-seeds so dataset, init, training and sampling streams never overlap.
inline std::uint64_t subseed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    splitmix64(s);
    return splitmix64(s);
}

inline Tensor<float> load_dataset(const RunConfig& cfg) {
    const int r1 = cfg.ladder.front();
    Tensor<float> data;
    if (cfg.dataset == "shapes") {
        data = gen_shapes(subseed(cfg.seed, 0xda7a), cfg.shapes_count, r1, cfg.image_channels, cfg.shapes_palette);
    } else {
        data = read_tensor_file<float>(cfg.dataset);
    }
    if (data.rank() != 4 || data.dim(1) != cfg.image_channels || data.dim(2) != r1 || data.dim(3) != r1)
        throw std::runtime_error("dataset shape " + shape_str(data.shape()) + " does not match config [N," +
                                 std::to_string(cfg.image_channels) + "," + std::to_string(r1) + "," +
                                 std::to_string(r1) + "]");
    return data;
}

inline UnifiedNet<float> build_net(const RunConfig& cfg) {
    Rng init_rng(subseed(cfg.seed, 0x1417));
    return UnifiedNet<float>::build(cfg.net_config(), init_rng);
}

// --- train -------------------------------------------------------------------

struct TrainResult {
    std::string checkpoint_path;
    std::string loss_log_path;
    std::vector<std::vector<float>> losses;  // per step, per stage
};

inline TrainResult cmd_train(const RunConfig& cfg, const std::string& out_dir, const std::string& init_checkpoint = {},
                             bool force = false, bool echo = false) {
    const Tensor<float> data = load_dataset(cfg);
    UnifiedNet<float> net = build_net(cfg);
    if (!init_checkpoint.empty()) load_checkpoint(init_checkpoint, net.params, cfg.digest(), force);

    ensure_dir(out_dir);
    const std::string ckpt_path = out_dir + "/checkpoint.ldif";
    const std::string loss_path = out_dir + "/loss.jsonl";
    JsonlWriter log(loss_path, echo);

    TrainState<float> state(std::move(net), cfg.cascade_config(), cfg.loss_config(), cfg.adam_config(),
                            subseed(cfg.seed, 0x7247));
    state.loss_mode = cfg.loss_mode;
    Rng batch_rng(subseed(cfg.seed, 0xba7c));

    const int n_stages = cfg.n_stages();
    const std::int64_t n_data = data.dim(0);
    const std::int64_t sample_sz = data.numel() / n_data;
    TrainResult result;
    for (std::int64_t step = 0; step < cfg.steps; ++step) {
        Tensor<float> batch({cfg.batch, cfg.image_channels, data.dim(2), data.dim(3)});
        for (int b = 0; b < cfg.batch; ++b) {
            const std::int64_t idx = batch_rng.uniform_int(n_data);
            std::copy_n(data.data() + idx * sample_sz, sample_sz, batch.data() + b * sample_sz);
        }
        const std::vector<float> losses = train_step(state, batch);
        json rec{{"schema", "lowdiff.loss/1"}, {"step", step}};
        for (int i = 1; i <= n_stages; ++i) rec["loss_stage" + std::to_string(i)] = losses[static_cast<std::size_t>(i - 1)];
        log.write(rec);
        result.losses.push_back(losses);
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps)
            save_checkpoint(out_dir + "/checkpoint_step" + std::to_string(step + 1) + ".ldif", state.net.params,
                            cfg.digest(), step + 1);
    }
    save_checkpoint(ckpt_path, state.net.params, cfg.digest(), state.step);
    log.flush();
    result.checkpoint_path = ckpt_path;
    result.loss_log_path = loss_path;
    return result;
}

// --- sample ------------------------------------------------------------------

struct SampleResult {
    std::string samples_path;
    std::string nfe_log_path;
    std::vector<StageNfe> stage_nfe;  // per stage, execution order (lowest first)
};

template <class T, class Factory>
Tensor<T> sample_batched(const Factory& factory, const CascadeConfig& cc, Rng& rng, std::int64_t count, int batch,
                         int channels, std::vector<StageNfe>& stage_nfe) {
    const int r1 = cc.ladder.resolution(1);
    Tensor<T> out({count, channels, r1, r1});
    std::int64_t done = 0;
    while (done < count) {
        const int b = static_cast<int>(std::min<std::int64_t>(batch, count - done));
        auto res = sample_cascade<T>(factory, cc, rng, b, channels);
        std::copy_n(res.x.data(), res.x.numel(), out.data() + done * channels * r1 * r1);
        if (stage_nfe.empty()) stage_nfe = res.stages;
        done += b;
    }
    return out;
}

inline SampleResult cmd_sample(const RunConfig& cfg, const std::string& out_dir, const std::string& checkpoint_path,
                               std::int64_t count, const std::string& oracle_mixture_path = {}, bool force = false,
                               bool echo = false) {
    if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
    const bool oracle = !oracle_mixture_path.empty();
    if (!oracle && checkpoint_path.empty())
        throw std::invalid_argument("sample: need either a checkpoint or an oracle mixture spec");
    const CascadeConfig cc = cfg.cascade_config();
    ensure_dir(out_dir);
    const std::string samples_path = out_dir + "/samples.ldtn";
    const std::string nfe_path = out_dir + "/nfe.jsonl";
    Rng rng(subseed(cfg.seed, 0x5a3e));

    SampleResult result;
    if (oracle) {
        const GaussianMixture top = parse_mixture_file(oracle_mixture_path);
        const int r1 = cfg.ladder.front();
        if (top.dim() != cfg.image_channels * r1 * r1)
            throw std::invalid_argument("sample: mixture dim " + std::to_string(top.dim()) +
                                        " does not match config image size " +
                                        std::to_string(cfg.image_channels * r1 * r1));
        auto factory = make_oracle_denoiser_factory(top, cc, cfg.image_channels);
        Tensor<double> samples =
            sample_batched<double>(factory, cc, rng, count, cfg.batch, cfg.image_channels, result.stage_nfe);
        write_tensor_file(samples_path, samples);
    } else {
        UnifiedNet<float> net = build_net(cfg);
        load_checkpoint(checkpoint_path, net.params, cfg.digest(), force);
        auto factory = make_net_denoiser_factory(net);
        Tensor<float> samples =
            sample_batched<float>(factory, cc, rng, count, cfg.batch, cfg.image_channels, result.stage_nfe);
        write_tensor_file(samples_path, samples);
    }

    JsonlWriter log(nfe_path, echo);
    for (const auto& s : result.stage_nfe)
        log.write(json{{"schema", "lowdiff.nfe/1"},
                       {"stage", s.stage},
                       {"resolution", s.resolution},
                       {"steps", s.steps},
                       {"nfe", s.nfe},
                       {"integrator", integrator_name(cc.schedule(s.stage).integrator)}});
    result.samples_path = samples_path;
    result.nfe_log_path = nfe_path;
    return result;
}

// --- eval ----------------------------------------------------------------------

inline double cmd_eval(const std::string& samples_path, const std::string& ref_tensor_path,
                       const std::string& ref_mixture_path, const std::string& out_dir = {}, bool echo = true) {
    if (ref_tensor_path.empty() == ref_mixture_path.empty())
        throw std::invalid_argument("eval: need exactly one of a reference tensor file or a mixture spec");
    const Tensor<double> samples = read_tensor_file_any(samples_path);
    const Eigen::MatrixXd rows = tensor_to_rows(samples);
    MomentFit fit_a = fit_gaussian(rows);
    MomentFit fit_b;
    std::string ref_kind;
    if (!ref_tensor_path.empty()) {
        const Tensor<double> ref = read_tensor_file_any(ref_tensor_path);
        if (ref.numel() / ref.dim(0) != samples.numel() / samples.dim(0))
            throw std::invalid_argument("eval: per-sample dimension mismatch between samples and reference");
        fit_b = fit_gaussian(tensor_to_rows(ref));
        ref_kind = "tensor";
    } else {
        const GaussianMixture m = parse_mixture_file(ref_mixture_path);
        if (m.dim() != rows.cols())
            throw std::invalid_argument("eval: mixture dim " + std::to_string(m.dim()) +
                                        " does not match sample dim " + std::to_string(rows.cols()));
        Eigen::VectorXd mean;
        Eigen::MatrixXd cov;
        mixture_moments(m, mean, cov);
        fit_b = MomentFit::exact(std::move(mean), std::move(cov));
        ref_kind = "mixture";
    }
    const double d = frechet(fit_a, fit_b);
    ensure_dir(out_dir);
    JsonlWriter log(out_dir.empty() ? std::string{} : out_dir + "/eval.jsonl", echo);
    log.write(json{{"schema", "lowdiff.eval/1"},
                   {"frechet", d},
                   {"dim", rows.cols()},
                   {"n_samples", rows.rows()},
                   {"reference", ref_kind}});
    return d;
}

// --- bench ---------------------------------------------------------------------

struct BenchPair {
    BenchReport single;
    BenchReport cascade;
    double speedup = 0.0;  // latency_single / latency_cascade - 1
    std::vector<StageNfe> cascade_stages;  // mean seconds per stage over timed reps
    int single_nfe = 0;
};

inline BenchPair cmd_bench(const RunConfig& cfg, const std::string& out_dir, const std::string& checkpoint_path = {},
                           int batch = kBenchDefaultBatch, int warmup = kBenchDefaultWarmup,
                           int reps = kBenchDefaultReps, bool echo = false) {
    UnifiedNet<float> net = build_net(cfg);
    if (!checkpoint_path.empty()) load_checkpoint(checkpoint_path, net.params, cfg.digest());
    const CascadeConfig cc = cfg.cascade_config();
    const int channels = cfg.image_channels;
    const int r1 = cfg.ladder.front();

    // full-resolution baseline: same trunk dimensions, degenerate ladder
    RunConfig base_cfg = cfg;
    base_cfg.ladder = {r1};
    base_cfg.stages.resize(1);
    base_cfg.stages[0] = StageKnobs{cfg.bench_single_steps, 0, 0.002, 80.0, 7.0, Integrator::heun};
    UnifiedNet<float> base_net = build_net(base_cfg);
    StageSchedule single_sched;
    single_sched.stage = 1;
    single_sched.trunc = 0;
    single_sched.sigmas = karras_sigmas(cfg.bench_single_steps, 0.002, 80.0, 7.0);
    single_sched.integrator = Integrator::heun;

    Rng rng_single(subseed(cfg.seed, 0xbe11));
    auto single_fn = [&]() {
        auto denoise = [&](const Tensor<float>& x, double sigma) { return base_net.forward(x, nullptr, sigma, 1); };
        sample_stage<float>(denoise, single_sched, rng_single, batch, channels, r1);
    };

    Rng rng_casc(subseed(cfg.seed, 0xca5c));
    auto factory = make_net_denoiser_factory(net);
    std::vector<StageNfe> stage_acc;
    int casc_calls = 0;
    auto cascade_fn = [&]() {
        auto res = sample_cascade<float>(factory, cc, rng_casc, batch, channels);
        ++casc_calls;
        if (casc_calls > warmup) {  // accumulate timed reps only
            if (stage_acc.empty()) {
                stage_acc = res.stages;
            } else {
                for (std::size_t i = 0; i < stage_acc.size(); ++i) stage_acc[i].seconds += res.stages[i].seconds;
            }
        }
    };

    BenchPair pair;
    pair.single = bench(single_fn, batch, warmup, reps, hardware_note());
    pair.cascade = bench(cascade_fn, batch, warmup, reps, hardware_note());
    for (auto& s : stage_acc) s.seconds /= reps;
    pair.cascade_stages = stage_acc;
    pair.speedup = pair.single.latency_s / pair.cascade.latency_s - 1.0;
    pair.single_nfe = single_sched.nfe();

    ensure_dir(out_dir);
    JsonlWriter log(out_dir.empty() ? std::string{} : out_dir + "/bench.jsonl", echo);
    auto report_json = [&](const BenchReport& r, const char* mode) {
        return json{{"schema", "lowdiff.bench/1"}, {"mode", mode},          {"batch", r.batch},
                    {"warmup", r.warmup},          {"reps", r.reps},        {"latency_s", r.latency_s},
                    {"throughput_ips", r.throughput_ips},                   {"hardware", r.hardware}};
    };
    json single_rec = report_json(pair.single, "single");
    single_rec["stages"] = json::array({json{{"stage", 1},
                                             {"resolution", r1},
                                             {"nfe", pair.single_nfe},
                                             {"latency_per_eval_s", pair.single.latency_s / pair.single_nfe}}});
    json casc_rec = report_json(pair.cascade, "cascade");
    {
        json stages = json::array();
        for (const auto& s : pair.cascade_stages)
            stages.push_back(json{{"stage", s.stage},
                                  {"resolution", s.resolution},
                                  {"nfe", s.nfe},
                                  {"latency_per_eval_s", s.seconds / s.nfe}});
        casc_rec["stages"] = stages;
    }
    log.write(single_rec);
    log.write(casc_rec);
    log.write(json{{"schema", "lowdiff.bench.compare/1"},
                   {"latency_single_s", pair.single.latency_s},
                   {"latency_cascade_s", pair.cascade.latency_s},
                   {"speedup", pair.speedup}});
    log.flush();
    return pair;
}

// --- effnfe ----------------------------------------------------------------------

inline EffNfeReport cmd_effnfe(const std::string& bench_jsonl_path, const std::vector<int>& nfe_override = {},
                               const std::string& out_dir = {}, bool echo = true) {
    std::ifstream is(bench_jsonl_path);
    if (!is) throw std::runtime_error("effnfe: cannot open " + bench_jsonl_path);
    json cascade_rec;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        if (rec.value("schema", "") == "lowdiff.bench/1" && rec.value("mode", "") == "cascade") cascade_rec = rec;
    }
    if (cascade_rec.is_null() || !cascade_rec.contains("stages"))
        throw std::runtime_error("effnfe: no cascade bench record with per-stage latencies in " + bench_jsonl_path);
    std::vector<EffNfeStage> stages;
    for (const auto& s : cascade_rec["stages"]) {
        if (!s.contains("latency_per_eval_s")) throw std::runtime_error("effnfe: stage record missing latency field");
        stages.push_back(EffNfeStage{s.at("resolution").get<int>(), s.at("nfe").get<int>(),
                                     s.at("latency_per_eval_s").get<double>(), 0.0});
    }
    if (!nfe_override.empty()) {
        if (nfe_override.size() != stages.size())
            throw std::invalid_argument("effnfe: nfe override count does not match stage count");
        for (std::size_t i = 0; i < stages.size(); ++i) stages[i].nfe = nfe_override[i];
    }
    int high = 0;
    for (std::size_t i = 1; i < stages.size(); ++i)
        if (stages[i].resolution > stages[static_cast<std::size_t>(high)].resolution) high = static_cast<int>(i);
    EffNfeReport rep = effective_nfe(std::move(stages), high);

    ensure_dir(out_dir);
    JsonlWriter log(out_dir.empty() ? std::string{} : out_dir + "/effnfe.jsonl", echo);
    json stages_json = json::array();
    for (const auto& s : rep.stages)
        stages_json.push_back(json{{"resolution", s.resolution},
                                   {"nfe", s.nfe},
                                   {"latency_per_eval_s", s.latency_per_eval_s},
                                   {"eta", s.eta}});
    log.write(json{{"schema", "lowdiff.effnfe/1"},
                   {"stages", stages_json},
                   {"high_resolution", rep.stages[static_cast<std::size_t>(rep.high_index)].resolution},
                   {"effective_nfe", rep.effective_nfe}});
    return rep;
}

// --- gen-shapes --------------------------------------------------------------------

inline std::string cmd_gen_shapes(std::uint64_t seed, std::int64_t count, int resolution, int channels, int palette,
                                  const std::string& out_path) {
    Tensor<float> data = gen_shapes(seed, count, resolution, channels, palette);
    write_tensor_file(out_path, data);
    return out_path;
}

}  // namespace lowdiff::cli
