#include "mclgan/config.hpp"
#include "mclgan/trainer.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace mclgan;

std::vector<std::string> split_values(const std::string& text) {
    // Values are separated by ';' when they themselves contain commas (e.g. mu).
    const char sep = text.find(';') != std::string::npos ? ';' : ',';
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const auto b = item.find_first_not_of(' ');
        const auto e = item.find_last_not_of(' ');
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

void print_record(const MetricsRecord& r) {
    std::string prd = "n/a";
    if (r.eval.prd) prd = fmt::format("F8={:.3f} F1/8={:.3f}", r.eval.prd->f8, r.eval.prd->f1_8);
    fmt::print("step {:>7}  d={:.4f} g={:.4f}  modes={} hq={:.3f}  {}  entropy={:.3f} active={}\n", r.step,
               r.losses.d_total, r.losses.g_total, r.eval.coverage.modes_covered, r.eval.coverage.high_quality_ratio,
               prd, r.entropy, r.active_disc);
    std::fflush(stdout);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
    TrainConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    RunOptions options;
    options.out_dir = out;
    options.keep_step_losses = false;
    options.on_record = print_record;
    const RunLog log = run_experiment(config, options);
    if (log.checkpoint) fmt::print("checkpoint: {}\n", log.checkpoint->string());
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::string& values, int seeds,
              int jobs, const std::string& out) {
    const TrainConfig base = load_config(config_path);
    SweepOptions options;
    options.param = param;
    options.values = split_values(values);
    options.seeds = seeds;
    options.jobs = jobs;
    options.out_dir = out;
    const auto runs = run_sweep(base, options);
    for (const auto& run : runs) {
        fmt::print("{}={} seed={}: ", param, run.value, run.seed);
        print_record(run.log.records.back());
    }
    fmt::print("summary: {}\n", (std::filesystem::path(out) / "summary.csv").string());
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& spec_path, int n, std::uint64_t seed, bool prd) {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint '" + checkpoint + "'");
    const LoadedNetworks nets = import_parameters(read_checkpoint(in));
    std::ifstream spec_in(spec_path);
    if (!spec_in) throw std::runtime_error("cannot open spec '" + spec_path + "'");
    const MixtureSpec spec = parse_data_spec(spec_in).mixture();
    EvalOptions options;
    options.coverage_distance = 3.0 * spec.std;
    options.prd = prd;
    const EvalReport report = evaluate_generator(nets.generator, spec, n, seed, options);
    fmt::print("modes_covered={}/{}\nhq_ratio={:.6f}\n", report.coverage.modes_covered, spec.size(),
               report.coverage.high_quality_ratio);
    if (report.prd) fmt::print("f8={:.6f}\nf1_8={:.6f}\n", report.prd->f8, report.prd->f1_8);
    fmt::print("per_mode_counts=");
    for (std::size_t i = 0; i < report.coverage.per_mode_counts.size(); ++i) {
        fmt::print("{}{}", i ? "," : "", report.coverage.per_mode_counts[i]);
    }
    fmt::print("\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-discriminator GAN with expert assignment on 2D mixtures"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out = "run";
    std::optional<std::uint64_t> seed;
    auto* train = app.add_subcommand("train", "Train one model");
    train->add_option("--config", config_path, "Config file (key = value)")->required()->check(CLI::ExistingFile);
    train->add_option("--seed", seed, "Override the config seed");
    train->add_option("--out", out, "Output directory")->capture_default_str();

    std::string param;
    std::string values;
    int seeds = 1;
    int jobs = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    std::string sweep_out = "sweep";
    auto* sweep = app.add_subcommand("sweep", "Train one model per parameter value and seed");
    sweep->add_option("--config", config_path, "Base config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "Config key to vary")->required();
    sweep->add_option("--values", values, "Comma-separated values (';' if values contain commas)")->required();
    sweep->add_option("--seeds", seeds, "Seeds per value")->capture_default_str();
    sweep->add_option("--jobs", jobs, "Concurrent runs")->capture_default_str();
    sweep->add_option("--out", sweep_out, "Output directory")->capture_default_str();

    std::string checkpoint;
    std::string spec_path;
    int n = 10000;
    std::uint64_t eval_seed = 0;
    bool no_prd = false;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint's generator against a mixture");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--spec", spec_path, "Mixture spec (data.* keys)")->required()->check(CLI::ExistingFile);
    eval->add_option("--n", n, "Number of generated samples")->capture_default_str();
    eval->add_option("--seed", eval_seed, "Sampling seed")->capture_default_str();
    eval->add_flag("--no-prd", no_prd, "Skip the PRD F-scores");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*train) return cmd_train(config_path, seed, out);
        if (*sweep) return cmd_sweep(config_path, param, values, seeds, jobs, sweep_out);
        if (*eval) return cmd_eval(checkpoint, spec_path, n, eval_seed, !no_prd);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
