#pragma once

#include "mclgan/grad.hpp"

#include <cstdint>
#include <vector>

namespace mclgan {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    grad::Array m;
    grad::Array v;
    std::int64_t step = 0;
    AdamConfig config;

    AdamState() = default;
    AdamState(Eigen::Index rows, Eigen::Index cols, AdamConfig cfg);
};

/// One bias-corrected Adam update, in place. Throws on shape mismatch.
void adam_step(grad::Array& params, const grad::Array& grads, AdamState& state);

/// Adam over a fixed list of leaf Vars; reads Var::grad() and clears it after.
class Adam {
public:
    Adam(std::vector<grad::Var> params, AdamConfig config);

    void step();
    void zero_grad();

    [[nodiscard]] const AdamConfig& config() const { return config_; }
    [[nodiscard]] std::int64_t steps() const { return states_.empty() ? 0 : states_.front().step; }

private:
    std::vector<grad::Var> params_;
    std::vector<AdamState> states_;
    AdamConfig config_;
};

}  // namespace mclgan
