#pragma once

#include "mclgan/data.hpp"
#include "mclgan/grad.hpp"

#include <cstdint>
#include <deque>
#include <vector>

namespace mclgan::metrics {

struct CoverageReport {
    int modes_covered = 0;
    double high_quality_ratio = 0.0;
    std::vector<long> per_mode_counts;  // high-quality samples per mode
};

/// Each sample goes to its nearest center; it is high quality when within
/// dist_threshold of that center. A mode is covered when its high-quality
/// count is at least count_threshold * total samples.
CoverageReport mode_coverage(const grad::Array& samples, const MixtureSpec& spec, double dist_threshold,
                             double count_threshold);
/// Defaults: 3 * spec.std and 1%.
CoverageReport mode_coverage(const grad::Array& samples, const MixtureSpec& spec);

struct UtilizationHistogram {
    std::vector<long> counts;  // expert assignments per discriminator
    long window_size = 0;      // samples in the window
    int k = 1;

    [[nodiscard]] long total() const;
    [[nodiscard]] std::vector<double> shares() const;
};

/// Shannon entropy of the assignment shares divided by log M; 0 for an empty
/// histogram and for M = 1.
double normalized_entropy(const UtilizationHistogram& hist);

/// Discriminators whose share of the window's assignments exceeds the threshold.
int active_discriminators(const UtilizationHistogram& hist, double activity_threshold = 0.01);

/// Sliding window over per-step assignment counts.
class UtilizationWindow {
public:
    UtilizationWindow(int heads, int k, std::size_t window_steps);

    /// counts[m] = number of samples in the step that picked head m.
    void push(const std::vector<long>& counts, long samples);
    [[nodiscard]] UtilizationHistogram histogram() const;
    [[nodiscard]] std::size_t steps() const { return steps_.size(); }

private:
    struct Step {
        std::vector<long> counts;
        long samples;
    };
    int heads_;
    int k_;
    std::size_t capacity_;
    std::deque<Step> steps_;
    std::vector<long> running_;
    long running_samples_ = 0;
};

// ---- k-means ----

struct KMeansResult {
    grad::Array centroids;
    std::vector<int> labels;
    double inertia = 0.0;
    int restart = 0;  // index of the restart that produced this result
};

/// Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart is
/// kept (ties to the lowest restart index).
KMeansResult kmeans(const grad::Array& points, int clusters, int restarts, std::uint64_t seed, int max_iter = 300);

// ---- precision/recall for distributions ----

struct PrdCurve {
    std::vector<double> precision;  // alpha(lambda)
    std::vector<double> recall;     // beta(lambda)
};

/// lambda grid: `count` log-spaced values in [tan(eps), tan(pi/2 - eps)].
std::vector<double> prd_lambdas(int count = 1001, double eps = 1e-10);

/// reference = histogram of real samples (p), eval = histogram of generated samples (q).
PrdCurve prd_from_histograms(std::span<const double> reference, std::span<const double> eval,
                             std::span<const double> lambdas);

double f_beta(double precision, double recall, double beta);

struct FScores {
    double f8 = 0.0;       // recall-weighted
    double f1_8 = 0.0;     // precision-weighted
};

FScores prd_f_scores(const PrdCurve& curve);

struct PrdOptions {
    int bins = 20;
    int restarts = 10;
    int lambdas = 1001;
};

/// Bins the pooled samples with seeded k-means, builds both histograms and
/// returns the maximal F_8 and F_1/8 over the PRD curve.
FScores prd_f_scores(const grad::Array& real, const grad::Array& fake, std::uint64_t seed,
                     const PrdOptions& options = {});

}  // namespace mclgan::metrics
