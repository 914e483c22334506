#include "mclgan/grad.hpp"
#include "testing.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace mclgan;
using grad::Array;
using grad::Var;
using testing::gradient_error;
using testing::random_array;

namespace {

Array scalar(double v) {
    Array a(1, 1);
    a(0, 0) = v;
    return a;
}

// Builds a random expression over fresh leaves. The op sequence is drawn from
// `rng`; every primitive used by the losses appears.
struct RandomGraph {
    std::vector<Var> leaves;
    std::vector<int> ops;
    std::vector<Var> extras;  // operands consumed by binary ops, one per op
    Eigen::Index rows;
    Eigen::Index cols;

    explicit RandomGraph(Rng& rng) {
        rows = 1 + static_cast<Eigen::Index>(rng.uniform() * 3);
        cols = 1 + static_cast<Eigen::Index>(rng.uniform() * 3);
        leaves.push_back(Var::leaf(random_array(rows, cols, rng)));
        const int n_ops = 2 + static_cast<int>(rng.uniform() * 4);
        Eigen::Index r = rows;
        Eigen::Index c = cols;
        for (int i = 0; i < n_ops; ++i) {
            const int op = static_cast<int>(rng.uniform() * 16);
            ops.push_back(op);
            Var extra;
            switch (op) {
                case 6:
                case 13:
                    extra = Var::leaf(random_array(r, c, rng));
                    break;
                case 7: {
                    const Eigen::Index out = 1 + static_cast<Eigen::Index>(rng.uniform() * 3);
                    extra = Var::leaf(random_array(c, out, rng));
                    c = out;
                    break;
                }
                case 10:
                    extra = Var::leaf(random_array(1, c, rng));
                    break;
                case 11:
                    r = 1;
                    break;
                case 12:
                    c = 1;
                    break;
                case 14:
                    extra = Var::leaf(random_array(1, c, rng));
                    r += 1;
                    break;
                case 15:
                    r = 1;
                    c = 1;
                    break;
                default:
                    break;
            }
            extras.push_back(extra);
            if (extra.valid()) leaves.push_back(extra);
        }
    }

    Var eval() const {
        Var h = leaves.front();
        for (std::size_t i = 0; i < ops.size(); ++i) {
            const Var& e = extras[i];
            switch (ops[i]) {
                case 0: h = grad::relu(h); break;
                case 1: h = grad::leaky_relu(h, 0.2); break;
                case 2: h = grad::sigmoid(h); break;
                case 3: h = grad::square(h); break;
                case 4: h = grad::scale(h, -1.7); break;
                case 5: h = grad::log_prob(grad::sigmoid(h)); break;
                case 6: h = grad::mul(h, e); break;
                case 7: h = grad::matmul(h, e); break;
                case 8: h = grad::softmax_rows(h, 0.7); break;
                case 9: h = grad::clamp(h, -1.0, 1.0); break;
                case 10: h = grad::add_row(h, e); break;
                case 11: h = grad::mean_rows(h); break;
                case 12: h = grad::sum_cols(h); break;
                case 13: h = grad::sub(h, e); break;
                case 14: h = grad::slice_rows(grad::concat_rows(h, e), 0, h.rows() + 1); break;
                case 15: {
                    const auto q = grad::mean_rows(grad::softmax_rows(h, 1.3));
                    std::vector<double> target(static_cast<std::size_t>(q.cols()), 1.0 / static_cast<double>(q.cols()));
                    h = grad::kl_to(target, q);
                    break;
                }
                default: break;
            }
        }
        return grad::add_scalar(grad::sum(h), 0.25);
    }
};

}  // namespace

TEST_CASE("backward of log at 1 and sigmoid at 0") {
    Var x = Var::leaf(scalar(1.0));
    grad::backward(grad::log(x));
    CHECK(x.grad()(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    Var y = Var::leaf(scalar(0.0));
    grad::backward(grad::sigmoid(y));
    CHECK(y.grad()(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(11);
    Var a = Var::leaf(random_array(3, 2, rng));
    Var b = Var::leaf(random_array(2, 3, rng));
    CHECK(gradient_error({a, b}, [&] { return grad::sum(grad::matmul(a, b)); }) < 1e-4);
}

TEST_CASE("gradients accumulate across backward calls until reset") {
    Var x = Var::leaf(scalar(3.0));
    auto f = [&] { return grad::square(x); };
    grad::backward(f());
    grad::backward(f());
    CHECK(x.grad()(0, 0) == doctest::Approx(12.0));
    x.zero_grad();
    grad::backward(f());
    CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("shared subexpressions are visited once") {
    Var x = Var::leaf(scalar(2.0));
    Var y = grad::square(x);
    Var z = grad::add(y, y);  // d/dx = 4x
    grad::backward(z);
    CHECK(x.grad()(0, 0) == doctest::Approx(8.0));
    CHECK(grad::graph_size(z) == 3);
}

TEST_CASE("non-scalar root is rejected") {
    Var x = Var::leaf(Array::Ones(2, 2));
    CHECK_THROWS_AS(grad::backward(x), std::invalid_argument);
}

TEST_CASE("constants and detached values receive no gradient") {
    Var x = Var::leaf(scalar(2.0));
    Var c = Var::constant(scalar(5.0));
    Var d = grad::detach(x);
    CHECK_FALSE(c.requires_grad());
    CHECK_FALSE(d.requires_grad());
    grad::backward(grad::add(grad::mul(x, c), grad::mul(d, x)));
    CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("grad has the same shape as value") {
    Rng rng(3);
    Var a = Var::leaf(random_array(4, 3, rng));
    grad::backward(grad::mean(grad::relu(a)));
    CHECK(a.grad().rows() == 4);
    CHECK(a.grad().cols() == 3);
}

TEST_CASE("primitive ops pass finite-difference checks on 200 random graphs") {
    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        RandomGraph g(rng);
        worst = std::max(worst, gradient_error(g.leaves, [&] { return g.eval(); }));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("each primitive individually matches finite differences") {
    Rng rng(5);
    Var a = Var::leaf(random_array(3, 4, rng));
    Var b = Var::leaf(random_array(3, 4, rng));
    Var w = Var::leaf(random_array(4, 2, rng));
    Var r = Var::leaf(random_array(1, 4, rng));
    const std::vector<double> target = {0.1, 0.2, 0.3, 0.4};
    const std::vector<std::pair<const char*, std::function<Var()>>> cases = {
        {"add", [&] { return grad::sum(grad::add(a, b)); }},
        {"sub", [&] { return grad::sum(grad::square(grad::sub(a, b))); }},
        {"mul", [&] { return grad::sum(grad::mul(a, b)); }},
        {"matmul", [&] { return grad::sum(grad::square(grad::matmul(a, w))); }},
        {"add_row", [&] { return grad::sum(grad::square(grad::add_row(a, r))); }},
        {"relu", [&] { return grad::sum(grad::mul(grad::relu(a), b)); }},
        {"leaky_relu", [&] { return grad::sum(grad::mul(grad::leaky_relu(a, 0.2), b)); }},
        {"sigmoid", [&] { return grad::sum(grad::mul(grad::sigmoid(a), b)); }},
        {"log_prob", [&] { return grad::sum(grad::log_prob(grad::sigmoid(a))); }},
        {"log", [&] { return grad::sum(grad::log(grad::add_scalar(grad::square(a), 0.5))); }},
        {"clamp", [&] { return grad::sum(grad::mul(grad::clamp(a, -1.0, 1.0), b)); }},
        {"mean", [&] { return grad::mean(grad::square(a)); }},
        {"mean_rows", [&] { return grad::sum(grad::square(grad::mean_rows(a))); }},
        {"sum_cols", [&] { return grad::sum(grad::square(grad::sum_cols(a))); }},
        {"concat/slice", [&] { return grad::sum(grad::square(grad::slice_rows(grad::concat_rows(a, b), 2, 3))); }},
        {"softmax", [&] { return grad::sum(grad::mul(grad::softmax_rows(a, 0.5), b)); }},
        {"kl_to", [&] { return grad::kl_to(target, grad::mean_rows(grad::softmax_rows(a, 1.0))); }},
    };
    for (const auto& [name, f] : cases) {
        CAPTURE(name);
        CHECK(gradient_error({a, b, w, r}, f) < 1e-4);
    }
}

TEST_CASE("log_prob clamps and has zero gradient where clamped") {
    Array v(1, 2);
    v << 0.0, 1.0;
    Var x = Var::leaf(v);
    Var y = grad::log_prob(x);
    CHECK(y.value()(0, 0) == doctest::Approx(std::log(1e-12)));
    CHECK(y.value()(0, 1) == doctest::Approx(std::log1p(-1e-12)).epsilon(1e-15));
    grad::backward(grad::sum(y));
    CHECK(x.grad()(0, 0) == 0.0);
    CHECK(x.grad()(0, 1) == 0.0);
}

TEST_CASE("softmax_temperature values") {
    const std::vector<double> a = {1.0, 0.0};
    auto s = grad::softmax_temperature(a, 1.0);
    CHECK(s[0] == doctest::Approx(0.731059).epsilon(1e-6));
    CHECK(s[1] == doctest::Approx(0.268941).epsilon(1e-6));
    s = grad::softmax_temperature(a, 0.1);
    CHECK(s[0] == doctest::Approx(0.9999546).epsilon(1e-7));
    CHECK(s[1] == doctest::Approx(0.0000454).epsilon(1e-3));

    const std::vector<double> flat = {2.5, 2.5, 2.5};
    for (double tau : {0.1, 1.0, 7.0}) {
        for (double p : grad::softmax_temperature(flat, tau)) CHECK(p == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("softmax_temperature rejects bad input and survives huge logits") {
    const std::vector<double> a = {1.0};
    CHECK_THROWS_AS(grad::softmax_temperature(a, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(grad::softmax_temperature(a, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(grad::softmax_temperature(std::vector<double>{}, 1.0), std::invalid_argument);
    const std::vector<double> big = {1000.0, 999.0};
    const auto s = grad::softmax_temperature(big, 0.1);
    CHECK(std::isfinite(s[0]));
    CHECK(s[0] + s[1] == doctest::Approx(1.0));
}

TEST_CASE("softmax is shift invariant and sums to one") {
    Rng rng(8);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(1 + static_cast<std::size_t>(rng.uniform() * 6));
        for (double& v : x) v = -5.0 + 10.0 * rng.uniform();
        const double tau = 0.05 + 2.0 * rng.uniform();
        const double shift = -50.0 + 100.0 * rng.uniform();
        auto shifted = x;
        for (double& v : shifted) v += shift;
        const auto p = grad::softmax_temperature(x, tau);
        const auto q = grad::softmax_temperature(shifted, tau);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p[i] > 0.0);
            CHECK(std::abs(p[i] - q[i]) < 1e-9);
        }
    }
}

TEST_CASE("kl_divergence values and clamping flag") {
    const std::vector<double> u = {0.5, 0.5};
    CHECK(grad::kl_divergence(u, std::vector<double>{0.75, 0.25}).value == doctest::Approx(0.143841).epsilon(1e-6));
    CHECK(grad::kl_divergence(std::vector<double>{1.0, 0.0}, u).value == doctest::Approx(0.693147).epsilon(1e-6));
    const auto r = grad::kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
    CHECK(r.clamped);
    CHECK(r.value == doctest::Approx(0.5 * std::log(0.5) + 0.5 * std::log(0.5 / 1e-12)).epsilon(1e-9));
    CHECK_FALSE(grad::kl_divergence(u, u).clamped);
    CHECK_THROWS_AS(grad::kl_divergence(u, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("kl_divergence is non-negative and zero only at equality") {
    Rng rng(13);
    auto simplex = [&](std::size_t n) {
        std::vector<double> p(n);
        double total = 0.0;
        for (double& v : p) total += (v = -std::log(1.0 - rng.uniform()));
        for (double& v : p) v /= total;
        return p;
    };
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 6);
        const auto p = simplex(n);
        const auto q = simplex(n);
        CHECK(grad::kl_divergence(p, q).value > 0.0);
        CHECK(grad::kl_divergence(p, p).value == doctest::Approx(0.0).epsilon(1e-15));
    }
}

TEST_CASE("kl_to matches the pure helper") {
    const std::vector<double> mu = {0.5, 0.5};
    Array q(1, 2);
    q << 0.75, 0.25;
    CHECK(grad::kl_to(mu, Var::constant(q)).item() == doctest::Approx(0.143841).epsilon(1e-6));
}
