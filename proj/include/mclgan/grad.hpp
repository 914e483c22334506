#pragma once

// Eager reverse-mode autodiff over dense row-major arrays (rank <= 2).
//
// A Var is a cheap handle to a graph node. Nodes are created eagerly by the
// op functions below; each op records its parents and a local backward rule.
// backward(root) sorts the reachable subgraph once and propagates the
// cotangent in reverse topological order, accumulating into Var::grad().

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mclgan::grad {

using Array = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

/// Lower/upper floor applied to probabilities before any log.
inline constexpr double kProbFloor = 1e-12;

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Array value;
    Array grad;     // accumulated d(root)/d(value) over all backward() calls
    Array pending;  // cotangent for the backward pass in flight
    std::vector<NodePtr> parents;
    // Reads this->pending and adds into parents[i]->pending.
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;
};

class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    /// Trainable leaf (parameter).
    static Var leaf(Array value);
    /// Non-differentiable leaf.
    static Var constant(Array value);
    static Var scalar_constant(double v);

    [[nodiscard]] const Array& value() const { return node_->value; }
    [[nodiscard]] Array& mutable_value() { return node_->value; }
    [[nodiscard]] const Array& grad() const { return node_->grad; }
    [[nodiscard]] double item() const;
    [[nodiscard]] Eigen::Index rows() const { return node_->value.rows(); }
    [[nodiscard]] Eigen::Index cols() const { return node_->value.cols(); }
    [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
    [[nodiscard]] bool valid() const { return static_cast<bool>(node_); }
    [[nodiscard]] const NodePtr& node() const { return node_; }

    void zero_grad();

private:
    NodePtr node_;
};

/// Propagates d(root)/d(node) to every reachable node. Gradients accumulate
/// across calls until zero_grad(). Throws std::invalid_argument unless root is 1x1.
void backward(const Var& root);

/// Drops the graph history: same value, no parents, no gradient.
Var detach(const Var& x);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// x (n x d) + bias (1 x d) broadcast over rows.
Var add_row(const Var& x, const Var& bias);
Var concat_rows(const Var& top, const Var& bottom);
Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count);

// ---- elementwise ----
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
Var relu(const Var& x);
Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
/// Clamp into [lo, hi]; gradient is zero where the clamp is active.
Var clamp(const Var& x, double lo, double hi);
/// log(clamp(x, kProbFloor, 1 - kProbFloor)).
Var log_prob(const Var& x);

// ---- reductions ----
Var sum(const Var& x);
Var mean(const Var& x);
/// Column means, n x d -> 1 x d.
Var mean_rows(const Var& x);
/// Row sums, n x d -> n x 1.
Var sum_cols(const Var& x);

// ---- probability ----
/// Row-wise softmax(x / tau) with max subtraction.
Var softmax_rows(const Var& x, double tau);
/// KL(target || q) for a constant target distribution and differentiable q
/// (both 1 x M). q is floored at kProbFloor inside the log.
Var kl_to(std::span<const double> target, const Var& q);

// ---- pure helpers ----
std::vector<double> softmax_temperature(std::span<const double> logits, double tau);

struct KlResult {
    double value = 0.0;
    bool clamped = false;  // some q_i was floored where p_i > 0
};
KlResult kl_divergence(std::span<const double> p, std::span<const double> q);

/// Number of distinct nodes backward(root) would visit.
std::size_t graph_size(const Var& root);

}  // namespace mclgan::grad
