#pragma once

#include "mclgan/grad.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mclgan {

/// xoshiro256** (Blackman & Vigna), seeded by expanding a 64-bit seed with
/// SplitMix64. The stream is fixed by the algorithm, so identical seeds give
/// identical samples on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform();
    /// Standard normal via Box-Muller; the second value of each pair is cached.
    double normal();

    /// Independent stream for a (seed, stream id) pair.
    static Rng stream(std::uint64_t seed, std::uint64_t stream_id);

private:
    std::array<std::uint64_t, 4> s_{};
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct MixtureSpec {
    std::vector<Point2> centers;
    double std = 0.05;
    std::vector<double> weights;

    [[nodiscard]] std::size_t size() const { return centers.size(); }
    /// Throws std::invalid_argument when the invariants fail.
    void validate() const;
};

struct SampleBatch {
    grad::Array points;           // N x 2
    std::vector<int> components;  // ground-truth mixture component per row
};

/// n centers evenly spaced on a circle, first center at (radius, 0).
MixtureSpec ring_mixture(int n_components, double radius, double std);
/// side x side grid centred on the origin with the given spacing.
MixtureSpec grid_mixture(int side, double spacing, double std);

SampleBatch sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng);
SampleBatch sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);

grad::Array sample_latents(std::size_t n, int latent_dim, Rng& rng);
grad::Array sample_latents(std::size_t n, int latent_dim, std::uint64_t seed);

/// CSV with header "x,y,component".
void write_batch_csv(std::ostream& out, const SampleBatch& batch);

}  // namespace mclgan
