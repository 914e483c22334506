#include "mclgan/grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mclgan::grad {

namespace {

NodePtr make_node(Array value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->grad = Array::Zero(value.rows(), value.cols());
    n->value = std::move(value);
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    n->requires_grad = any;
    if (any) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
    }
}

// Adds g into parent's pending buffer when the parent wants a gradient.
template <typename Expr>
void accumulate(const NodePtr& parent, const Expr& g) {
    if (parent->requires_grad) parent->pending += g;
}

std::vector<Node*> topo_order(const NodePtr& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace

Var Var::leaf(Array value) {
    auto n = std::make_shared<Node>();
    n->grad = Array::Zero(value.rows(), value.cols());
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

Var Var::constant(Array value) {
    auto n = std::make_shared<Node>();
    n->grad = Array::Zero(value.rows(), value.cols());
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::scalar_constant(double v) {
    Array a(1, 1);
    a(0, 0) = v;
    return constant(std::move(a));
}

double Var::item() const {
    if (rows() != 1 || cols() != 1) throw std::invalid_argument("item(): Var is not scalar");
    return node_->value(0, 0);
}

void Var::zero_grad() { node_->grad.setZero(); }

void backward(const Var& root) {
    if (!root.valid()) throw std::invalid_argument("backward: empty Var");
    if (root.rows() != 1 || root.cols() != 1) {
        throw std::invalid_argument("backward: root must be a scalar (1x1)");
    }
    if (!root.requires_grad()) return;

    const auto order = topo_order(root.node());
    for (Node* n : order) n->pending = Array::Zero(n->value.rows(), n->value.cols());
    root.node()->pending(0, 0) = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
        n->grad += n->pending;
    }
    for (Node* n : order) n->pending.resize(0, 0);
}

std::size_t graph_size(const Var& root) { return topo_order(root.node()).size(); }

Var detach(const Var& x) { return Var::constant(x.value()); }

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + ")");
    }
    Array out(a.rows(), b.cols());
    out.noalias() = a.value() * b.value();
    auto pa = a.node();
    auto pb = b.node();
    return Var(make_node(std::move(out), {pa, pb}, [](Node& self) {
        const auto& A = self.parents[0];
        const auto& B = self.parents[1];
        if (A->requires_grad) A->pending.noalias() += self.pending * B->value.transpose();
        if (B->requires_grad) B->pending.noalias() += A->value.transpose() * self.pending;
    }));
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return Var(make_node(a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
        accumulate(self.parents[0], self.pending);
        accumulate(self.parents[1], self.pending);
    }));
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return Var(make_node(a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
        accumulate(self.parents[0], self.pending);
        accumulate(self.parents[1], -self.pending);
    }));
}

Var add_row(const Var& x, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) {
        throw std::invalid_argument("add_row: bias must be 1 x " + std::to_string(x.cols()));
    }
    Array out = x.value();
    out.rowwise() += bias.value().row(0);
    return Var(make_node(std::move(out), {x.node(), bias.node()}, [](Node& self) {
        accumulate(self.parents[0], self.pending);
        accumulate(self.parents[1], self.pending.colwise().sum());
    }));
}

Var concat_rows(const Var& top, const Var& bottom) {
    if (top.cols() != bottom.cols()) throw std::invalid_argument("concat_rows: column mismatch");
    Array out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top.value();
    out.bottomRows(bottom.rows()) = bottom.value();
    return Var(make_node(std::move(out), {top.node(), bottom.node()}, [](Node& self) {
        const auto n0 = self.parents[0]->value.rows();
        const auto n1 = self.parents[1]->value.rows();
        accumulate(self.parents[0], self.pending.topRows(n0));
        accumulate(self.parents[1], self.pending.bottomRows(n1));
    }));
}

Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count) {
    if (begin < 0 || count < 0 || begin + count > x.rows()) {
        throw std::invalid_argument("slice_rows: range out of bounds");
    }
    Array out = x.value().middleRows(begin, count);
    return Var(make_node(std::move(out), {x.node()}, [begin, count](Node& self) {
        if (self.parents[0]->requires_grad) {
            self.parents[0]->pending.middleRows(begin, count) += self.pending;
        }
    }));
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    Array out = a.value().cwiseProduct(b.value());
    return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
        const auto& A = self.parents[0];
        const auto& B = self.parents[1];
        accumulate(A, self.pending.cwiseProduct(B->value));
        accumulate(B, self.pending.cwiseProduct(A->value));
    }));
}

Var scale(const Var& x, double c) {
    return Var(make_node(x.value() * c, {x.node()},
                         [c](Node& self) { accumulate(self.parents[0], self.pending * c); }));
}

Var add_scalar(const Var& x, double c) {
    Array out = x.value().array() + c;
    return Var(make_node(std::move(out), {x.node()},
                         [](Node& self) { accumulate(self.parents[0], self.pending); }));
}

Var relu(const Var& x) {
    Array out = x.value().cwiseMax(0.0);
    return Var(make_node(std::move(out), {x.node()}, [](Node& self) {
        const auto& X = self.parents[0];
        accumulate(X, (X->value.array() > 0.0).select(self.pending, 0.0));
    }));
}

Var leaky_relu(const Var& x, double slope) {
    Array out = (x.value().array() > 0.0).select(x.value(), x.value() * slope);
    return Var(make_node(std::move(out), {x.node()}, [slope](Node& self) {
        const auto& X = self.parents[0];
        accumulate(X, (X->value.array() > 0.0).select(self.pending, self.pending * slope));
    }));
}

Var sigmoid(const Var& x) {
    Array out = x.value().unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
    return Var(make_node(std::move(out), {x.node()}, [](Node& self) {
        const auto& s = self.value.array();
        accumulate(self.parents[0], (self.pending.array() * s * (1.0 - s)).matrix());
    }));
}

Var log(const Var& x) {
    Array out = x.value().array().log();
    return Var(make_node(std::move(out), {x.node()}, [](Node& self) {
        const auto& X = self.parents[0];
        accumulate(X, (self.pending.array() / X->value.array()).matrix());
    }));
}

Var square(const Var& x) {
    Array out = x.value().array().square();
    return Var(make_node(std::move(out), {x.node()}, [](Node& self) {
        const auto& X = self.parents[0];
        accumulate(X, (2.0 * self.pending.array() * X->value.array()).matrix());
    }));
}

Var clamp(const Var& x, double lo, double hi) {
    Array out = x.value().cwiseMax(lo).cwiseMin(hi);
    return Var(make_node(std::move(out), {x.node()}, [lo, hi](Node& self) {
        const auto& X = self.parents[0];
        const auto inside = (X->value.array() >= lo) && (X->value.array() <= hi);
        accumulate(X, inside.select(self.pending, 0.0));
    }));
}

Var log_prob(const Var& x) { return log(clamp(x, kProbFloor, 1.0 - kProbFloor)); }

Var sum(const Var& x) {
    Array out(1, 1);
    out(0, 0) = x.value().sum();
    return Var(make_node(std::move(out), {x.node()}, [](Node& self) {
        const auto& X = self.parents[0];
        if (X->requires_grad) X->pending.array() += self.pending(0, 0);
    }));
}

Var mean(const Var& x) {
    const auto n = static_cast<double>(x.value().size());
    if (n == 0) throw std::invalid_argument("mean: empty array");
    Array out(1, 1);
    out(0, 0) = x.value().sum() / n;
    return Var(make_node(std::move(out), {x.node()}, [n](Node& self) {
        const auto& X = self.parents[0];
        if (X->requires_grad) X->pending.array() += self.pending(0, 0) / n;
    }));
}

Var mean_rows(const Var& x) {
    if (x.rows() == 0) throw std::invalid_argument("mean_rows: empty array");
    const auto n = static_cast<double>(x.rows());
    Array out = x.value().colwise().sum() / n;
    return Var(make_node(std::move(out), {x.node()}, [n](Node& self) {
        const auto& X = self.parents[0];
        if (X->requires_grad) X->pending.rowwise() += self.pending.row(0) / n;
    }));
}

Var sum_cols(const Var& x) {
    Array out = x.value().rowwise().sum();
    return Var(make_node(std::move(out), {x.node()}, [](Node& self) {
        const auto& X = self.parents[0];
        if (X->requires_grad) X->pending.colwise() += self.pending.col(0);
    }));
}

Var softmax_rows(const Var& x, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("softmax_rows: temperature must be > 0");
    if (x.cols() == 0) throw std::invalid_argument("softmax_rows: empty rows");
    Array out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mx = x.value().row(i).maxCoeff();
        out.row(i) = ((x.value().row(i).array() - mx) / tau).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return Var(make_node(std::move(out), {x.node()}, [tau](Node& self) {
        const auto& X = self.parents[0];
        if (!X->requires_grad) return;
        // d/dx_j = s_j (g_j - <g, s>) / tau
        const auto& s = self.value;
        const Eigen::VectorXd dot = (self.pending.cwiseProduct(s)).rowwise().sum();
        Array g = self.pending;
        g.colwise() -= dot;
        X->pending += (g.cwiseProduct(s)) / tau;
    }));
}

Var kl_to(std::span<const double> target, const Var& q) {
    if (q.rows() != 1 || static_cast<std::size_t>(q.cols()) != target.size()) {
        throw std::invalid_argument("kl_to: q must be 1 x " + std::to_string(target.size()));
    }
    RowVector p(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) p(static_cast<Eigen::Index>(i)) = target[i];
    double value = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > 0.0) value += p(i) * (std::log(p(i)) - std::log(std::max(q.value()(0, i), kProbFloor)));
    }
    Array out(1, 1);
    out(0, 0) = value;
    return Var(make_node(std::move(out), {q.node()}, [p](Node& self) {
        const auto& Q = self.parents[0];
        if (!Q->requires_grad) return;
        const double g = self.pending(0, 0);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double qi = Q->value(0, i);
            if (p(i) > 0.0 && qi >= kProbFloor) Q->pending(0, i) -= g * p(i) / qi;
        }
    }));
}

std::vector<double> softmax_temperature(std::span<const double> logits, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("softmax_temperature: temperature must be > 0");
    if (logits.empty()) throw std::invalid_argument("softmax_temperature: empty logits");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / tau);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
    if (p.empty()) throw std::invalid_argument("kl_divergence: empty distributions");
    KlResult r;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        double qi = q[i];
        if (qi < kProbFloor) {
            qi = kProbFloor;
            r.clamped = true;
        }
        r.value += p[i] * (std::log(p[i]) - std::log(qi));
    }
    // Rounding can leave a tiny negative residue when p == q.
    r.value = std::max(r.value, 0.0);
    return r;
}

}  // namespace mclgan::grad
