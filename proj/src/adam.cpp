#include "mclgan/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mclgan {

AdamState::AdamState(Eigen::Index rows, Eigen::Index cols, AdamConfig cfg)
    : m(grad::Array::Zero(rows, cols)), v(grad::Array::Zero(rows, cols)), config(cfg) {}

void adam_step(grad::Array& params, const grad::Array& grads, AdamState& state) {
    if (params.rows() != grads.rows() || params.cols() != grads.cols()) {
        throw std::invalid_argument("adam_step: gradient shape does not match parameters");
    }
    if (state.m.size() == 0 && state.step == 0) {
        state.m = grad::Array::Zero(params.rows(), params.cols());
        state.v = grad::Array::Zero(params.rows(), params.cols());
    }
    if (state.m.rows() != params.rows() || state.m.cols() != params.cols()) {
        throw std::invalid_argument("adam_step: moment shape does not match parameters");
    }
    const auto& c = state.config;
    ++state.step;
    state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
    state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    params.array() -= c.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.eps);
}

Adam::Adam(std::vector<grad::Var> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    states_.reserve(params_.size());
    for (const auto& p : params_) states_.emplace_back(p.rows(), p.cols(), config_);
}

void Adam::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        adam_step(params_[i].mutable_value(), params_[i].grad(), states_[i]);
    }
    zero_grad();
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace mclgan
