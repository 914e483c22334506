#include "mclgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace mclgan::metrics {

using grad::Array;

CoverageReport mode_coverage(const Array& samples, const MixtureSpec& spec, double dist_threshold,
                             double count_threshold) {
    if (!(dist_threshold > 0.0) || !(count_threshold > 0.0)) {
        throw std::invalid_argument("mode_coverage: thresholds must be > 0");
    }
    if (samples.rows() > 0 && samples.cols() != 2) throw std::invalid_argument("mode_coverage: samples must be N x 2");
    CoverageReport report;
    report.per_mode_counts.assign(spec.size(), 0);
    const auto n = samples.rows();
    if (n == 0) return report;

    const double limit2 = dist_threshold * dist_threshold;
    long good = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < spec.size(); ++c) {
            const double dx = samples(i, 0) - spec.centers[c].x;
            const double dy = samples(i, 1) - spec.centers[c].y;
            const double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {
                best_d2 = d2;
                best = c;
            }
        }
        if (best_d2 <= limit2) {
            ++report.per_mode_counts[best];
            ++good;
        }
    }
    const double needed = count_threshold * static_cast<double>(n);
    for (long c : report.per_mode_counts) {
        if (c > 0 && static_cast<double>(c) >= needed) ++report.modes_covered;
    }
    report.high_quality_ratio = static_cast<double>(good) / static_cast<double>(n);
    return report;
}

CoverageReport mode_coverage(const Array& samples, const MixtureSpec& spec) {
    return mode_coverage(samples, spec, 3.0 * spec.std, 0.01);
}

long UtilizationHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), 0L); }

std::vector<double> UtilizationHistogram::shares() const {
    std::vector<double> out(counts.size(), 0.0);
    const long t = total();
    if (t == 0) return out;
    for (std::size_t m = 0; m < counts.size(); ++m) out[m] = static_cast<double>(counts[m]) / static_cast<double>(t);
    return out;
}

double normalized_entropy(const UtilizationHistogram& hist) {
    if (hist.counts.size() < 2 || hist.total() == 0) return 0.0;
    double h = 0.0;
    for (double p : hist.shares()) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(hist.counts.size()));
}

int active_discriminators(const UtilizationHistogram& hist, double activity_threshold) {
    int active = 0;
    for (double p : hist.shares()) {
        if (p > activity_threshold) ++active;
    }
    return active;
}

UtilizationWindow::UtilizationWindow(int heads, int k, std::size_t window_steps)
    : heads_(heads), k_(k), capacity_(window_steps), running_(static_cast<std::size_t>(heads), 0) {
    if (heads < 1 || window_steps < 1) throw std::invalid_argument("UtilizationWindow: bad size");
}

void UtilizationWindow::push(const std::vector<long>& counts, long samples) {
    if (counts.size() != running_.size()) throw std::invalid_argument("UtilizationWindow: head count mismatch");
    steps_.push_back({counts, samples});
    for (std::size_t m = 0; m < counts.size(); ++m) running_[m] += counts[m];
    running_samples_ += samples;
    if (steps_.size() > capacity_) {
        const auto& old = steps_.front();
        for (std::size_t m = 0; m < old.counts.size(); ++m) running_[m] -= old.counts[m];
        running_samples_ -= old.samples;
        steps_.pop_front();
    }
}

UtilizationHistogram UtilizationWindow::histogram() const { return {running_, running_samples_, k_}; }

// ---- k-means ----

namespace {

double sq_dist(const Array& a, Eigen::Index i, const Array& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

Array seed_plus_plus(const Array& pts, int clusters, Rng& rng) {
    const auto n = pts.rows();
    Array centroids(clusters, pts.cols());
    auto first = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
    centroids.row(0) = pts.row(std::min(first, n - 1));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(pts, i, centroids, 0);
    for (int c = 1; c < clusters; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick = n - 1;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (Eigen::Index i = 0; i < n; ++i) {
                u -= d2[static_cast<std::size_t>(i)];
                if (u < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::min(static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)), n - 1);
        }
        centroids.row(c) = pts.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& d = d2[static_cast<std::size_t>(i)];
            d = std::min(d, sq_dist(pts, i, centroids, c));
        }
    }
    return centroids;
}

KMeansResult lloyd(const Array& pts, Array centroids, int max_iter) {
    const auto n = pts.rows();
    const auto k = centroids.rows();
    KMeansResult r;
    r.labels.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < k; ++c) {
                const double d = sq_dist(pts, i, centroids, c);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(c);
                }
            }
            auto& label = r.labels[static_cast<std::size_t>(i)];
            if (label != best) {
                label = best;
                changed = true;
            }
        }
        if (!changed) break;
        Array sums = Array::Zero(k, pts.cols());
        std::vector<long> sizes(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = r.labels[static_cast<std::size_t>(i)];
            sums.row(c) += pts.row(i);
            ++sizes[static_cast<std::size_t>(c)];
        }
        // Empty clusters keep their previous centroid.
        for (Eigen::Index c = 0; c < k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) = sums.row(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
            }
        }
    }
    r.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) r.inertia += sq_dist(pts, i, centroids, r.labels[static_cast<std::size_t>(i)]);
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace

KMeansResult kmeans(const Array& points, int clusters, int restarts, std::uint64_t seed, int max_iter) {
    if (points.rows() < 1) throw std::invalid_argument("kmeans: no points");
    if (clusters < 1 || clusters > points.rows()) throw std::invalid_argument("kmeans: bad cluster count");
    if (restarts < 1) throw std::invalid_argument("kmeans: restarts must be >= 1");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
        auto result = lloyd(points, seed_plus_plus(points, clusters, rng), max_iter);
        result.restart = r;
        if (result.inertia < best.inertia) best = std::move(result);
    }
    return best;
}

// ---- PRD ----

std::vector<double> prd_lambdas(int count, double eps) {
    if (count < 2) throw std::invalid_argument("prd_lambdas: need at least 2 values");
    if (!(eps > 0.0 && eps < std::numbers::pi / 4)) throw std::invalid_argument("prd_lambdas: bad epsilon");
    // tan(pi/2 - eps) = 1 / tan(eps); using the identity keeps the grid
    // symmetric in log space, so lambda = 1 lands exactly on the middle point.
    const double lo = std::log(std::tan(eps));
    const double hi = -lo;
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / (count - 1);
        out[static_cast<std::size_t>(i)] = std::exp(lo + (hi - lo) * t);
    }
    return out;
}

PrdCurve prd_from_histograms(std::span<const double> reference, std::span<const double> eval,
                             std::span<const double> lambdas) {
    if (reference.size() != eval.size() || reference.empty()) {
        throw std::invalid_argument("prd: histograms must be non-empty and the same length");
    }
    PrdCurve curve;
    curve.precision.reserve(lambdas.size());
    curve.recall.reserve(lambdas.size());
    for (double lambda : lambdas) {
        double alpha = 0.0;
        double beta = 0.0;
        for (std::size_t i = 0; i < reference.size(); ++i) {
            alpha += std::min(lambda * reference[i], eval[i]);
            beta += std::min(reference[i], eval[i] / lambda);
        }
        curve.precision.push_back(std::clamp(alpha, 0.0, 1.0));
        curve.recall.push_back(std::clamp(beta, 0.0, 1.0));
    }
    return curve;
}

double f_beta(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double denom = b2 * precision + recall;
    if (denom <= 0.0) return 0.0;
    return (1.0 + b2) * precision * recall / denom;
}

FScores prd_f_scores(const PrdCurve& curve) {
    FScores s;
    for (std::size_t i = 0; i < curve.precision.size(); ++i) {
        s.f8 = std::max(s.f8, f_beta(curve.precision[i], curve.recall[i], 8.0));
        s.f1_8 = std::max(s.f1_8, f_beta(curve.precision[i], curve.recall[i], 1.0 / 8.0));
    }
    return s;
}

FScores prd_f_scores(const Array& real, const Array& fake, std::uint64_t seed, const PrdOptions& options) {
    if (real.rows() == 0 || fake.rows() == 0) throw std::invalid_argument("prd_f_scores: empty sample set");
    if (real.cols() != fake.cols()) throw std::invalid_argument("prd_f_scores: dimension mismatch");
    if (options.bins < 2) throw std::invalid_argument("prd_f_scores: need at least 2 bins");
    Array pooled(real.rows() + fake.rows(), real.cols());
    pooled.topRows(real.rows()) = real;
    pooled.bottomRows(fake.rows()) = fake;
    const int bins = static_cast<int>(std::min<Eigen::Index>(options.bins, pooled.rows()));
    const auto km = kmeans(pooled, bins, options.restarts, seed);

    std::vector<double> p(static_cast<std::size_t>(bins), 0.0);
    std::vector<double> q(static_cast<std::size_t>(bins), 0.0);
    for (Eigen::Index i = 0; i < real.rows(); ++i) p[static_cast<std::size_t>(km.labels[static_cast<std::size_t>(i)])] += 1.0;
    for (Eigen::Index i = 0; i < fake.rows(); ++i) {
        q[static_cast<std::size_t>(km.labels[static_cast<std::size_t>(real.rows() + i)])] += 1.0;
    }
    for (double& v : p) v /= static_cast<double>(real.rows());
    for (double& v : q) v /= static_cast<double>(fake.rows());
    const auto lambdas = prd_lambdas(options.lambdas);
    return prd_f_scores(prd_from_histograms(p, q, lambdas));
}

}  // namespace mclgan::metrics
