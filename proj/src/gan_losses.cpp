#include "mclgan/gan_losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mclgan::losses {

using grad::Array;
using grad::Var;

std::string_view to_string(LossVariant v) {
    switch (v) {
        case LossVariant::standard: return "standard";
        case LossVariant::least_squares: return "least_squares";
        case LossVariant::hinge: return "hinge";
    }
    return "standard";
}

LossVariant parse_variant(std::string_view name) {
    if (name == "standard") return LossVariant::standard;
    if (name == "least_squares") return LossVariant::least_squares;
    if (name == "hinge") return LossVariant::hinge;
    throw std::invalid_argument("unknown loss variant '" + std::string(name) + "'");
}

std::string_view to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

Reduction parse_reduction(std::string_view name) {
    if (name == "sum") return Reduction::sum;
    if (name == "mean") return Reduction::mean;
    throw std::invalid_argument("unknown reduction '" + std::string(name) + "'");
}

std::vector<double> LossWeights::target_distribution(int heads) const {
    if (mu.empty()) return std::vector<double>(static_cast<std::size_t>(heads), 1.0 / heads);
    if (static_cast<int>(mu.size()) != heads) throw std::invalid_argument("mu length must equal M");
    double total = 0.0;
    for (double v : mu) {
        if (!(v >= 0.0)) throw std::invalid_argument("mu entries must be >= 0");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mu must sum to 1");
    return mu;
}

void LossWeights::validate() const {
    for (double w : {alpha, beta_d, beta_g, gamma}) {
        if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("loss weights must be finite and >= 0");
    }
    if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be > 0");
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (!(soft_label >= 0.0 && soft_label <= 1.0)) throw std::invalid_argument("soft_label must lie in [0, 1]");
}

namespace {

void check_mask(const HeadOutputs& out, const mcl::ExpertAssignment& a, const char* op) {
    if (out.logits.rows() != a.samples() || out.logits.cols() != a.models()) {
        throw std::invalid_argument(std::string(op) + ": outputs are " + std::to_string(out.logits.rows()) + "x" +
                                    std::to_string(out.logits.cols()) + " but assignment is " +
                                    std::to_string(a.samples()) + "x" + std::to_string(a.models()));
    }
}

// Factor applied to a batch sum over `rows` samples.
double reduce_factor(Reduction r, Eigen::Index rows) {
    return r == Reduction::mean ? 1.0 / static_cast<double>(rows) : 1.0;
}

Var one_minus(const Var& x) { return grad::add_scalar(grad::scale(x, -1.0), 1.0); }

Var masked_sum(const Var& x, const Array& mask) { return grad::sum(grad::mul(x, Var::constant(mask))); }

// Elementwise per-entry loss for a sample that should look real.
Var real_term(const HeadOutputs& out, LossVariant variant) {
    switch (variant) {
        case LossVariant::standard: return grad::scale(grad::log_prob(out.scores), -1.0);
        case LossVariant::least_squares: return grad::square(grad::add_scalar(out.logits, -1.0));
        case LossVariant::hinge: return grad::relu(one_minus(out.logits));
    }
    throw std::logic_error("unreachable");
}

// Elementwise per-entry loss for the discriminator on fake samples.
Var fake_term(const HeadOutputs& out, LossVariant variant) {
    switch (variant) {
        case LossVariant::standard: return grad::scale(grad::log_prob(one_minus(out.scores)), -1.0);
        case LossVariant::least_squares: return grad::square(out.logits);
        case LossVariant::hinge: return grad::relu(grad::add_scalar(out.logits, 1.0));
    }
    throw std::logic_error("unreachable");
}

// Elementwise generator loss on expert heads.
Var gen_term(const HeadOutputs& out, LossVariant variant) {
    switch (variant) {
        case LossVariant::standard: return grad::log_prob(one_minus(out.scores));
        case LossVariant::least_squares: return grad::square(grad::add_scalar(out.logits, -1.0));
        case LossVariant::hinge: return grad::scale(out.logits, -1.0);
    }
    throw std::logic_error("unreachable");
}

// Elementwise soft-label loss on non-expert heads.
Var soft_term(const HeadOutputs& out, double a, LossVariant variant) {
    if (variant == LossVariant::least_squares) return grad::square(grad::add_scalar(out.logits, -a));
    const Var pos = grad::scale(grad::log_prob(out.scores), -a);
    const Var neg = grad::scale(grad::log_prob(one_minus(out.scores)), -(1.0 - a));
    return grad::add(pos, neg);
}

}  // namespace

double soft_cross_entropy(double score, double soft_label) {
    const double s = std::clamp(score, grad::kProbFloor, 1.0 - grad::kProbFloor);
    const double t = std::clamp(1.0 - score, grad::kProbFloor, 1.0 - grad::kProbFloor);
    return -soft_label * std::log(s) - (1.0 - soft_label) * std::log(t);
}

HeadOutputs outputs_from_logits(const Var& logits) { return {logits, grad::sigmoid(logits)}; }

Var expert_loss_real(const HeadOutputs& real, const mcl::ExpertAssignment& v, LossVariant variant) {
    check_mask(real, v, "expert_loss_real");
    return masked_sum(real_term(real, variant), v.mask());
}

Var expert_loss_fake_disc(const HeadOutputs& fake, LossVariant variant) {
    return grad::sum(fake_term(fake, variant));
}

Var expert_loss_gen(const HeadOutputs& fake, const mcl::ExpertAssignment& u, LossVariant variant) {
    check_mask(fake, u, "expert_loss_gen");
    return masked_sum(gen_term(fake, variant), u.mask());
}

Var nonexpert_loss_real(const HeadOutputs& real, const mcl::ExpertAssignment& v, double soft_label,
                        LossVariant variant) {
    check_mask(real, v, "nonexpert_loss_real");
    return masked_sum(soft_term(real, soft_label, variant), v.complement());
}

Var nonexpert_loss_gen(const HeadOutputs& fake, const mcl::ExpertAssignment& u, double soft_label,
                       LossVariant variant) {
    check_mask(fake, u, "nonexpert_loss_gen");
    return masked_sum(soft_term(fake, soft_label, variant), u.complement());
}

Var assignment_distribution(const Var& logits, double tau) {
    return grad::mean_rows(grad::softmax_rows(logits, tau));
}

Var balance_loss_disc(const Var& real_logits, std::span<const double> mu, double tau) {
    if (static_cast<Eigen::Index>(mu.size()) != real_logits.cols()) {
        throw std::invalid_argument("balance_loss_disc: mu length != M");
    }
    return grad::kl_to(mu, assignment_distribution(real_logits, tau));
}

Var balance_loss_gen(const Array& real_logits, const Var& fake_logits, double tau) {
    if (real_logits.cols() != fake_logits.cols()) throw std::invalid_argument("balance_loss_gen: head count mismatch");
    const Array q = assignment_distribution(Var::constant(real_logits), tau).value();
    return grad::kl_to(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())),
                       assignment_distribution(fake_logits, tau));
}

Var sparsity_loss(const Var& real_scores) {
    if (real_scores.rows() < 1) throw std::invalid_argument("sparsity_loss: empty batch");
    return grad::scale(grad::sum(real_scores), 1.0 / static_cast<double>(real_scores.rows()));
}

DiscLossTerms total_disc_loss(const HeadOutputs& real, const HeadOutputs& fake, const mcl::ExpertAssignment& v,
                              const LossWeights& weights, double beta_d, LossVariant variant) {
    if (real.logits.cols() != fake.logits.cols()) throw std::invalid_argument("total_disc_loss: head count mismatch");
    const double rr = reduce_factor(weights.reduction, real.logits.rows());
    const double rf = reduce_factor(weights.reduction, fake.logits.rows());
    const Var e_real = grad::scale(expert_loss_real(real, v, variant), rr);
    const Var e_fake = grad::scale(expert_loss_fake_disc(fake, variant), rf);
    DiscLossTerms t;
    t.expert_real = e_real.item();
    t.expert_fake = e_fake.item();
    Var total = grad::add(e_real, e_fake);
    // Zero-weight terms are still reported but kept out of the graph.
    const Var ne = grad::scale(nonexpert_loss_real(real, v, weights.soft_label, variant), rr);
    t.nonexpert = ne.item();
    if (weights.alpha != 0.0) total = grad::add(total, grad::scale(ne, weights.alpha));
    const auto mu = weights.target_distribution(static_cast<int>(real.logits.cols()));
    const Var bal = balance_loss_disc(real.logits, mu, weights.tau);
    t.balance = bal.item();
    if (beta_d != 0.0) total = grad::add(total, grad::scale(bal, beta_d));
    const Var sp = sparsity_loss(real.scores);
    t.sparsity = sp.item();
    if (weights.gamma != 0.0) total = grad::add(total, grad::scale(sp, weights.gamma));
    t.total = total;
    return t;
}

GenLossTerms total_gen_loss(const HeadOutputs& fake, const Array& real_logits, const mcl::ExpertAssignment& u,
                            const LossWeights& weights, double beta_g, LossVariant variant) {
    const double rf = reduce_factor(weights.reduction, fake.logits.rows());
    const Var e = grad::scale(expert_loss_gen(fake, u, variant), rf);
    GenLossTerms t;
    t.expert = e.item();
    Var total = e;
    const Var ne = grad::scale(nonexpert_loss_gen(fake, u, weights.soft_label, variant), rf);
    t.nonexpert = ne.item();
    if (weights.alpha != 0.0) total = grad::add(total, grad::scale(ne, weights.alpha));
    const Var bal = balance_loss_gen(real_logits, fake.logits, weights.tau);
    t.balance = bal.item();
    if (beta_g != 0.0) total = grad::add(total, grad::scale(bal, beta_g));
    t.total = total;
    return t;
}

}  // namespace mclgan::losses
