#include <CLI11.hpp>
#include <iostream>
#include <map>
#include <string>

#include "lowdiff/cli.hpp"

// lowdiff: train / sample / eval / bench / effnfe / gen-shapes over the
// multi-resolution cascade. All machine-readable output is JSONL.

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir = "out";
    std::string checkpoint_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
};

lowdiff::RunConfig load_config(const CommonFlags& f) {
    std::map<std::string, std::string> overrides;
    if (f.seed_set) overrides["seed"] = std::to_string(f.seed);
    if (f.config_path.empty()) {
        auto kv = overrides;
        return lowdiff::RunConfig::from_kv(std::move(kv), "<defaults>");
    }
    return lowdiff::RunConfig::from_file(f.config_path, overrides);
}

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_out = true) {
    cmd->add_option("--config", f.config_path, "run configuration file (key = value lines)");
    if (needs_out) cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--checkpoint", f.checkpoint_path, "checkpoint path (LDIF)");
    cmd->add_option("--seed", f.seed, "seed override")->each([&f](const std::string&) { f.seed_set = true; });
    cmd->add_flag("--force", f.force, "ignore checkpoint/config digest mismatch");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lowdiff: multi-resolution cascaded diffusion at desk scale"};
    app.require_subcommand(1);

    CommonFlags train_f, sample_f, eval_f, bench_f, effnfe_f;

    auto* train = app.add_subcommand("train", "train the unified denoiser, write checkpoint + loss JSONL");
    add_common(train, train_f);

    auto* sample = app.add_subcommand("sample", "generate images bottom-up, write tensor file + NFE JSONL");
    add_common(sample, sample_f);
    std::int64_t sample_count = 16;
    std::string oracle_mixture;
    sample->add_option("--count", sample_count, "number of images");
    sample->add_option("--oracle", oracle_mixture,
                       "mixture spec file: swap the net for analytic denoisers, no checkpoint needed");

    auto* eval = app.add_subcommand("eval", "moment-fit Frechet distance between samples and a reference");
    add_common(eval, eval_f);
    std::string eval_samples, eval_ref_tensor, eval_ref_mixture;
    eval->add_option("--samples", eval_samples, "generated samples (LDTN)")->required();
    eval->add_option("--ref-tensor", eval_ref_tensor, "reference samples (LDTN)");
    eval->add_option("--ref-mixture", eval_ref_mixture, "reference mixture spec (exact moments)");

    auto* bench_cmd = app.add_subcommand("bench", "single-stage vs cascade sampling throughput");
    add_common(bench_cmd, bench_f);
    int bench_batch = lowdiff::cli::kBenchDefaultBatch;
    int bench_warmup = lowdiff::cli::kBenchDefaultWarmup;
    int bench_reps = lowdiff::cli::kBenchDefaultReps;
    bench_cmd->add_option("--batch", bench_batch, "images per trial batch");
    bench_cmd->add_option("--warmup", bench_warmup, "discarded warmup runs");
    bench_cmd->add_option("--reps", bench_reps, "timed repetitions");

    auto* effnfe = app.add_subcommand("effnfe", "latency-scaled effective NFE from a bench JSONL");
    add_common(effnfe, effnfe_f);
    std::string effnfe_bench;
    std::vector<int> effnfe_nfes;
    effnfe->add_option("--bench", effnfe_bench, "bench JSONL with a cascade record")->required();
    effnfe->add_option("--nfe", effnfe_nfes, "override per-stage NFEs (lowest stage first)");

    auto* gen = app.add_subcommand("gen-shapes", "procedural rectangles-and-blobs dataset");
    std::uint64_t gen_seed = 0;
    std::int64_t gen_count = 2048;
    int gen_res = 16, gen_channels = 3, gen_palette = 8;
    std::string gen_out = "shapes.ldtn";
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--count", gen_count, "number of images");
    gen->add_option("--res", gen_res, "image side");
    gen->add_option("--channels", gen_channels, "image channels");
    gen->add_option("--palette", gen_palette, "palette size");
    gen->add_option("--out", gen_out, "output tensor file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            auto cfg = load_config(train_f);
            auto res = lowdiff::cli::cmd_train(cfg, train_f.out_dir, train_f.checkpoint_path, train_f.force);
            std::cout << "{\"schema\":\"lowdiff.done/1\",\"checkpoint\":\"" << res.checkpoint_path << "\"}\n";
        } else if (*sample) {
            auto cfg = load_config(sample_f);
            auto res = lowdiff::cli::cmd_sample(cfg, sample_f.out_dir, sample_f.checkpoint_path, sample_count,
                                                oracle_mixture, sample_f.force, true);
            std::cout << "{\"schema\":\"lowdiff.done/1\",\"samples\":\"" << res.samples_path << "\"}\n";
        } else if (*eval) {
            lowdiff::cli::cmd_eval(eval_samples, eval_ref_tensor, eval_ref_mixture, eval_f.out_dir);
        } else if (*bench_cmd) {
            auto cfg = load_config(bench_f);
            lowdiff::cli::cmd_bench(cfg, bench_f.out_dir, bench_f.checkpoint_path, bench_batch, bench_warmup,
                                    bench_reps, true);
        } else if (*effnfe) {
            lowdiff::cli::cmd_effnfe(effnfe_bench, effnfe_nfes, effnfe_f.out_dir);
        } else if (*gen) {
            lowdiff::cli::cmd_gen_shapes(gen_seed, gen_count, gen_res, gen_channels, gen_palette, gen_out);
            std::cout << "{\"schema\":\"lowdiff.done/1\",\"dataset\":\"" << gen_out << "\"}\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
