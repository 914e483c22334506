#pragma once

#include "mclgan/adam.hpp"
#include "mclgan/config.hpp"
#include "mclgan/data.hpp"
#include "mclgan/mcl.hpp"
#include "mclgan/metrics.hpp"
#include "mclgan/nets.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mclgan {

struct StepLosses {
    std::int64_t step = 0;  // 1-based index of the step that produced these values
    double beta_d = 0.0;    // scheduled weights used in this step
    double beta_g = 0.0;
    double d_total = 0.0;
    double d_expert_real = 0.0;
    double d_expert_fake = 0.0;
    double d_nonexpert = 0.0;
    double d_balance = 0.0;
    double d_sparsity = 0.0;
    double g_total = 0.0;
    double g_expert = 0.0;
    double g_nonexpert = 0.0;
    double g_balance = 0.0;
};

/// Everything one step consumed and produced. For disc_steps > 1 the batches
/// and v belong to the last discriminator update.
struct StepResult {
    StepLosses losses;
    grad::Array real;               // N_d x 2
    grad::Array latents;            // N_g x d_z
    grad::Array fake;               // generator output before its update
    mcl::ExpertAssignment real_experts;  // v
    mcl::ExpertAssignment fake_experts;  // u
};

/// Snapshot of a step whose loss went non-finite.
struct Diagnostic {
    std::int64_t step = 0;
    StepLosses losses;
    grad::Array real;
    grad::Array fake;
    grad::Array real_logits;
    grad::Array fake_logits;
};

class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(Diagnostic d);
    [[nodiscard]] const Diagnostic& diagnostic() const { return diag_; }

private:
    Diagnostic diag_;
};

/// PRNG streams derived from the run seed.
enum class Stream : std::uint64_t { gen_init = 0, disc_init = 1, data = 2, latent = 3, snapshot = 4 };

struct TrainState {
    TrainConfig config;
    MixtureSpec spec;
    GeneratorNet generator;
    MultiDiscriminator discriminator;
    Adam opt_g;
    Adam opt_d;
    Rng data_rng;
    Rng latent_rng;
    std::int64_t step = 0;
    metrics::UtilizationWindow window;
};

TrainState make_state(const TrainConfig& config);

/// One alternating update. Throws TrainingDiverged on a non-finite loss.
StepResult train_step(TrainState& state);

/// Loss values for the current networks on a fresh batch, without updating
/// anything and without touching the training streams.
StepLosses evaluate_losses(const TrainState& state, std::uint64_t stream_id);

struct EvalReport {
    metrics::CoverageReport coverage;
    std::optional<metrics::FScores> prd;
};

struct EvalOptions {
    double coverage_distance = 0.15;
    double coverage_fraction = 0.01;
    bool prd = true;
    metrics::PrdOptions prd_options;
};

/// Draws n generator samples and n data samples from seeded streams.
EvalReport evaluate_generator(const GeneratorNet& gen, const MixtureSpec& spec, int n, std::uint64_t seed,
                              const EvalOptions& options);

struct MetricsRecord {
    std::int64_t step = 0;
    StepLosses losses;
    EvalReport eval;
    metrics::UtilizationHistogram utilization;
    double entropy = 0.0;
    int active_disc = 0;
};

struct RunLog {
    TrainConfig config;
    std::vector<MetricsRecord> records;
    std::vector<StepLosses> steps;
    std::optional<std::filesystem::path> checkpoint;  // final checkpoint, when written
};

struct RunOptions {
    std::optional<std::filesystem::path> out_dir;
    bool keep_step_losses = true;
    /// Called after every record.
    std::function<void(const MetricsRecord&)> on_record;
};

/// Trains for config.steps steps, recording at step 0, every eval interval and
/// the final step. With an output directory, writes metrics.csv,
/// snapshot_<step>.csv, utilization_<step>.csv, checkpoint_<step>.bin and
/// config.echo there.
RunLog run_experiment(const TrainConfig& config, const RunOptions& options = {});

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records);
std::vector<std::string> metrics_columns();

// ---- sweeps ----

struct SweepRun {
    std::string value;
    std::uint64_t seed = 0;
    RunLog log;
};

struct SweepOptions {
    std::string param;
    std::vector<std::string> values;
    int seeds = 1;   // seeds s, s + 1, ... where s is the config seed after the value is applied
    int jobs = 1;    // concurrent runs
    std::optional<std::filesystem::path> out_dir;
};

/// One run per (value, seed), executed concurrently and returned in
/// (value, seed) order. With an output directory each run gets
/// <param>=<value>/seed_<seed>/ and a summary.csv of final records.
std::vector<SweepRun> run_sweep(const TrainConfig& base, const SweepOptions& options);

}  // namespace mclgan
