#pragma once

// Multiple choice learning primitives: per-sample top-k expert selection,
// the oracle loss, and the confident oracle loss with a uniform-KL penalty on
// non-experts. Nothing here depends on the GAN.

#include "mclgan/grad.hpp"

#include <span>
#include <vector>

namespace mclgan::mcl {

/// N x M binary indicators with exactly k ones per row.
class ExpertAssignment {
public:
    ExpertAssignment() = default;
    /// Validates that every entry is 0/1 and every row sums to k.
    ExpertAssignment(grad::Array indicators, int k);

    [[nodiscard]] Eigen::Index samples() const { return mask_.rows(); }
    [[nodiscard]] Eigen::Index models() const { return mask_.cols(); }
    [[nodiscard]] int k() const { return k_; }
    [[nodiscard]] bool operator()(Eigen::Index i, Eigen::Index m) const { return mask_(i, m) != 0.0; }

    /// 0/1 mask as doubles (v_{i,m}).
    [[nodiscard]] const grad::Array& mask() const { return mask_; }
    /// 1 - mask.
    [[nodiscard]] grad::Array complement() const;
    /// Number of samples assigned to each model.
    [[nodiscard]] std::vector<long> counts() const;

private:
    grad::Array mask_;
    int k_ = 0;
};

enum class Ranking { highest_first, lowest_first };

/// Marks the k best entries of each row; ties go to the lowest model index.
/// Throws std::invalid_argument for k < 1 or k > M.
ExpertAssignment select_topk(const grad::Array& scores, int k, Ranking ranking = Ranking::highest_first);

struct OracleResult {
    grad::Var loss;  // scalar; sum over rows of the k smallest entries
    ExpertAssignment assignment;
};

/// Oracle loss over an N x M matrix of per-sample, per-model losses.
/// Gradient flows to the selected entries only.
OracleResult oracle_loss(const grad::Var& losses, int k);
double oracle_loss_value(const grad::Array& losses, int k);

/// Confident oracle loss. `distributions[m]` holds model m's N x C predictive
/// distributions (rows sum to 1), `targets[i]` is sample i's class. Experts pay
/// cross-entropy, non-experts pay beta * KL(uniform || P_m).
grad::Var cmcl_loss(std::span<const grad::Var> distributions, std::span<const int> targets,
                    const ExpertAssignment& assignment, double beta);

}  // namespace mclgan::mcl
