#pragma once

#include "mclgan/adam.hpp"
#include "mclgan/data.hpp"
#include "mclgan/gan_losses.hpp"
#include "mclgan/nets.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mclgan {

enum class ScheduleKind { constant, linear, exponential };

/// Decay of the balance weights. Exponential: base * 0.5^(step / half_life).
/// Linear: base * max(0, 1 - step / (2 * half_life)), so both hit base / 2 at
/// step == half_life.
double balance_weight(std::int64_t step, double base, double half_life, ScheduleKind kind);

struct DataConfig {
    std::string kind = "ring";  // ring | grid
    int components = 8;
    double radius = 1.4142135623730951;
    int grid_side = 5;
    double grid_spacing = 2.0;
    double std = 0.05;

    [[nodiscard]] MixtureSpec mixture() const;
};

struct TrainConfig {
    int heads = 8;  // M
    int latent_dim = 2;
    losses::LossVariant variant = losses::LossVariant::standard;
    losses::LossWeights weights;  // k lives here
    ScheduleKind schedule = ScheduleKind::exponential;
    double half_life_d = 5000.0;
    double half_life_g = 5000.0;

    AdamConfig adam_d;
    AdamConfig adam_g;

    int batch_real = 64;
    int batch_fake = 128;
    std::int64_t steps = 50000;
    int disc_steps = 1;                        // discriminator updates per generator update
    bool gen_experts_after_disc_update = true;  // select u with the freshly updated discriminators

    std::int64_t eval_interval = 5000;
    int eval_samples = 10000;
    std::vector<std::int64_t> snapshot_steps = {1000, 5000, 50000};
    int snapshot_points = 256;
    int utilization_window = 500;  // steps
    double activity_threshold = 0.01;
    std::optional<double> coverage_distance;  // default 3 * data std
    double coverage_fraction = 0.01;
    bool eval_prd = true;
    int prd_bins = 20;
    int prd_restarts = 10;
    int prd_lambdas = 1001;

    std::uint64_t seed = 0;
    DataConfig data;
    std::vector<int> gen_hidden = {128, 128, 128};
    std::vector<int> disc_trunk = {128, 128, 128};

    [[nodiscard]] int experts() const { return weights.k; }
    [[nodiscard]] GeneratorSpec generator_spec() const;
    [[nodiscard]] DiscriminatorSpec discriminator_spec() const;
    [[nodiscard]] double coverage_threshold() const;
    /// Throws std::invalid_argument when invariants fail (k <= M, batch sizes, ...).
    void validate() const;
};

/// Flat `key = value` text. '#' starts a comment. Unknown or repeated keys are
/// rejected. When `variant = least_squares` and tau / learning rates are not
/// given, they default to 0.1 and 1e-4.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::string& path);

/// Applies one `key = value` assignment to an existing config.
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

/// Canonical dump; parse_config(write_config(c)) reproduces c.
void write_config(std::ostream& out, const TrainConfig& config);
std::vector<std::string> config_keys();

/// Mixture spec file: the `data.*` keys of the config format.
DataConfig parse_data_spec(std::istream& in);

}  // namespace mclgan
