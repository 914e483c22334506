#include "mclgan/mcl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mclgan::mcl {

using grad::Array;
using grad::Var;

ExpertAssignment::ExpertAssignment(Array indicators, int k) : mask_(std::move(indicators)), k_(k) {
    if (k_ < 1 || k_ > mask_.cols()) throw std::invalid_argument("assignment: k must be in [1, M]");
    for (Eigen::Index i = 0; i < mask_.rows(); ++i) {
        double row = 0.0;
        for (Eigen::Index m = 0; m < mask_.cols(); ++m) {
            const double v = mask_(i, m);
            if (v != 0.0 && v != 1.0) throw std::invalid_argument("assignment: entries must be 0 or 1");
            row += v;
        }
        if (row != static_cast<double>(k_)) {
            throw std::invalid_argument("assignment: row " + std::to_string(i) + " does not sum to k");
        }
    }
}

Array ExpertAssignment::complement() const { return (1.0 - mask_.array()).matrix(); }

std::vector<long> ExpertAssignment::counts() const {
    std::vector<long> out(static_cast<std::size_t>(mask_.cols()), 0);
    for (Eigen::Index m = 0; m < mask_.cols(); ++m) {
        out[static_cast<std::size_t>(m)] = static_cast<long>(mask_.col(m).sum());
    }
    return out;
}

ExpertAssignment select_topk(const Array& scores, int k, Ranking ranking) {
    const auto n_models = scores.cols();
    if (k < 1) throw std::invalid_argument("select_topk: k must be >= 1");
    if (k > n_models) throw std::invalid_argument("select_topk: k exceeds the number of models");

    const bool high = ranking == Ranking::highest_first;
    const auto better = [high](double a, double b) { return high ? a > b : a < b; };

    Array mask = Array::Zero(scores.rows(), n_models);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_models));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        if (k == 1) {
            Eigen::Index best = 0;
            for (Eigen::Index m = 1; m < n_models; ++m) {
                if (better(scores(i, m), scores(i, best))) best = m;
            }
            mask(i, best) = 1.0;
            continue;
        }
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        // stable: equal scores keep ascending model index
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return better(scores(i, a), scores(i, b)); });
        for (int j = 0; j < k; ++j) mask(i, order[static_cast<std::size_t>(j)]) = 1.0;
    }
    return ExpertAssignment(std::move(mask), k);
}

OracleResult oracle_loss(const Var& losses, int k) {
    if (losses.rows() < 1 || losses.cols() < 1) throw std::invalid_argument("oracle_loss: empty loss matrix");
    if (!losses.value().allFinite()) throw std::invalid_argument("oracle_loss: non-finite loss entry");
    OracleResult r;
    r.assignment = select_topk(losses.value(), k, Ranking::lowest_first);
    r.loss = grad::sum(grad::mul(losses, Var::constant(r.assignment.mask())));
    return r;
}

double oracle_loss_value(const Array& losses, int k) {
    return oracle_loss(Var::constant(losses), k).loss.item();
}

Var cmcl_loss(std::span<const Var> distributions, std::span<const int> targets,
              const ExpertAssignment& assignment, double beta) {
    const auto n_models = static_cast<Eigen::Index>(distributions.size());
    if (n_models < 1) throw std::invalid_argument("cmcl_loss: no models");
    if (assignment.models() != n_models) throw std::invalid_argument("cmcl_loss: assignment width != M");
    if (!(beta >= 0.0)) throw std::invalid_argument("cmcl_loss: beta must be >= 0");
    const auto n = static_cast<Eigen::Index>(targets.size());
    if (assignment.samples() != n) throw std::invalid_argument("cmcl_loss: assignment rows != N");
    const auto classes = distributions[0].cols();

    for (const auto& p : distributions) {
        if (p.rows() != n || p.cols() != classes) throw std::invalid_argument("cmcl_loss: distribution shape mismatch");
        for (Eigen::Index i = 0; i < n; ++i) {
            if ((p.value().row(i).array() < 0.0).any() || std::abs(p.value().row(i).sum() - 1.0) > 1e-6) {
                throw std::invalid_argument("cmcl_loss: row " + std::to_string(i) + " is not a distribution");
            }
        }
    }
    for (int t : targets) {
        if (t < 0 || t >= classes) throw std::invalid_argument("cmcl_loss: target class out of range");
    }

    const double inv_c = 1.0 / static_cast<double>(classes);
    Var total = Var::scalar_constant(0.0);
    for (Eigen::Index m = 0; m < n_models; ++m) {
        const Var log_p = grad::log_prob(distributions[static_cast<std::size_t>(m)]);
        // Expert term: -log P_m(y_i | x_i) on assigned rows.
        Array pick = Array::Zero(n, classes);
        // Non-expert term: KL(U || P_m) = sum_c (1/C)(log(1/C) - log P_c).
        Array uniform_w = Array::Zero(n, classes);
        double kl_const = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (assignment(i, m)) {
                pick(i, targets[static_cast<std::size_t>(i)]) = -1.0;
            } else {
                uniform_w.row(i).setConstant(-beta * inv_c);
                kl_const += beta * std::log(inv_c);
            }
        }
        const Var weighted = grad::mul(log_p, Var::constant(pick + uniform_w));
        total = grad::add(total, grad::add_scalar(grad::sum(weighted), kl_const));
    }
    return total;
}

}  // namespace mclgan::mcl
