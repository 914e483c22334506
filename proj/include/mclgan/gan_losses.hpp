#pragma once

// Loss terms of a single generator trained against M expert discriminators.
//
// Discriminator objective per step:
//   expert(real) + expert(fake, all heads) + alpha * nonexpert(real)
//     + beta_d * balance(real) + gamma * sparsity(real)
// Generator objective per step:
//   expert(fake, experts only) + alpha * nonexpert(fake) + beta_g * balance(fake)
//
// Sums run over samples and heads; the assignment masks select which heads
// count as experts for each sample.

#include "mclgan/grad.hpp"
#include "mclgan/mcl.hpp"
#include "mclgan/nets.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace mclgan::losses {

enum class LossVariant { standard, least_squares, hinge };

/// How the composites combine per-sample adversarial terms. `sum` adds them
/// over the batch; `mean` divides real-sample terms by N_d and fake-sample
/// terms by N_g before the balance and sparsity terms are added.
enum class Reduction { sum, mean };

std::string_view to_string(Reduction r);
Reduction parse_reduction(std::string_view name);

std::string_view to_string(LossVariant v);
LossVariant parse_variant(std::string_view name);

struct LossWeights {
    double alpha = 0.01;   // non-expert weight
    double beta_d = 0.5;   // discriminator balance weight (before decay)
    double beta_g = 0.0;   // generator balance weight (before decay)
    double gamma = 0.0;    // L1 sparsity weight
    double tau = 1.0;      // softmax temperature
    int k = 1;
    std::vector<double> mu;   // empty means uniform over the M heads
    double soft_label = 0.5;  // y = [soft_label, 1 - soft_label]
    Reduction reduction = Reduction::sum;

    /// mu resolved to a length-M probability vector. Throws if mu is not on the simplex.
    [[nodiscard]] std::vector<double> target_distribution(int heads) const;
    void validate() const;
};

// ---- individual terms ----

/// sum_i sum_m v_im * term_real(D_m(x_i)).
grad::Var expert_loss_real(const HeadOutputs& real, const mcl::ExpertAssignment& v,
                           LossVariant variant = LossVariant::standard);
/// Every head must reject every fake; no mask.
grad::Var expert_loss_fake_disc(const HeadOutputs& fake, LossVariant variant = LossVariant::standard);
/// Generator side: sum_j sum_m u_jm * log(1 - D_m(G(z_j))) for the standard variant.
grad::Var expert_loss_gen(const HeadOutputs& fake, const mcl::ExpertAssignment& u,
                          LossVariant variant = LossVariant::standard);
/// Soft-label cross-entropy on non-expert heads for real samples.
grad::Var nonexpert_loss_real(const HeadOutputs& real, const mcl::ExpertAssignment& v, double soft_label,
                              LossVariant variant = LossVariant::standard);
/// Soft-label cross-entropy on non-expert heads for fake samples.
grad::Var nonexpert_loss_gen(const HeadOutputs& fake, const mcl::ExpertAssignment& u, double soft_label,
                             LossVariant variant = LossVariant::standard);

/// Batch-mean temperature softmax over head logits, 1 x M.
grad::Var assignment_distribution(const grad::Var& logits, double tau);
/// KL(mu || q) with q = assignment_distribution(real_logits, tau).
grad::Var balance_loss_disc(const grad::Var& real_logits, std::span<const double> mu, double tau);
/// KL(q || o); q comes from real logits and is a constant target.
grad::Var balance_loss_gen(const grad::Array& real_logits, const grad::Var& fake_logits, double tau);
/// Mean over samples of the L1 norm of the head score vector.
grad::Var sparsity_loss(const grad::Var& real_scores);

/// Soft-label cross-entropy -a log s - (1 - a) log(1 - s), for testing.
double soft_cross_entropy(double score, double soft_label);

// ---- composites ----

/// Component values are reported after the reduction, before weighting.
struct DiscLossTerms {
    grad::Var total;
    double expert_real = 0.0;
    double expert_fake = 0.0;
    double nonexpert = 0.0;
    double balance = 0.0;
    double sparsity = 0.0;
};

struct GenLossTerms {
    grad::Var total;
    double expert = 0.0;
    double nonexpert = 0.0;
    double balance = 0.0;
};

/// beta_d is the already-scheduled balance weight for this step.
DiscLossTerms total_disc_loss(const HeadOutputs& real, const HeadOutputs& fake, const mcl::ExpertAssignment& v,
                              const LossWeights& weights, double beta_d, LossVariant variant);

/// real_logits are the current discriminator's logits on the real batch.
GenLossTerms total_gen_loss(const HeadOutputs& fake, const grad::Array& real_logits,
                            const mcl::ExpertAssignment& u, const LossWeights& weights, double beta_g,
                            LossVariant variant);

/// HeadOutputs built from raw logits (scores = sigmoid(logits)).
HeadOutputs outputs_from_logits(const grad::Var& logits);

}  // namespace mclgan::losses
