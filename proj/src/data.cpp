#include "mclgan/data.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace mclgan {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
}

Rng Rng::stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t sm = seed ^ (0xd1b54a32d192ed03ULL * (stream_id + 1));
    return Rng(splitmix64(sm));
}

std::uint64_t Rng::next_u64() {
    const auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

void MixtureSpec::validate() const {
    if (centers.empty()) throw std::invalid_argument("mixture: no components");
    if (!(std > 0.0) || !std::isfinite(std)) throw std::invalid_argument("mixture: std must be > 0");
    if (weights.size() != centers.size()) {
        throw std::invalid_argument("mixture: weights and centers differ in length");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("mixture: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture: weights must sum to 1");
}

MixtureSpec ring_mixture(int n_components, double radius, double std) {
    if (n_components < 1) throw std::invalid_argument("ring_mixture: need at least one component");
    if (!(radius > 0.0)) throw std::invalid_argument("ring_mixture: radius must be > 0");
    MixtureSpec spec;
    spec.std = std;
    for (int i = 0; i < n_components; ++i) {
        const double angle = 2.0 * std::numbers::pi * i / n_components;
        spec.centers.push_back({radius * std::cos(angle), radius * std::sin(angle)});
    }
    spec.weights.assign(n_components, 1.0 / n_components);
    spec.validate();
    return spec;
}

MixtureSpec grid_mixture(int side, double spacing, double std) {
    if (side < 1) throw std::invalid_argument("grid_mixture: side must be >= 1");
    if (!(spacing > 0.0)) throw std::invalid_argument("grid_mixture: spacing must be > 0");
    MixtureSpec spec;
    spec.std = std;
    const double offset = 0.5 * (side - 1) * spacing;
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            spec.centers.push_back({i * spacing - offset, j * spacing - offset});
        }
    }
    spec.weights.assign(spec.centers.size(), 1.0 / static_cast<double>(spec.centers.size()));
    spec.validate();
    return spec;
}

SampleBatch sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng) {
    spec.validate();
    std::vector<double> cumulative(spec.weights.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < spec.weights.size(); ++c) cumulative[c] = (acc += spec.weights[c]);

    SampleBatch batch;
    batch.points.resize(static_cast<Eigen::Index>(n), 2);
    batch.components.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * acc;
        std::size_t c = 0;
        while (c + 1 < cumulative.size() && u >= cumulative[c]) ++c;
        const auto row = static_cast<Eigen::Index>(i);
        batch.points(row, 0) = spec.centers[c].x + spec.std * rng.normal();
        batch.points(row, 1) = spec.centers[c].y + spec.std * rng.normal();
        batch.components[i] = static_cast<int>(c);
    }
    return batch;
}

SampleBatch sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return sample_mixture(spec, n, rng);
}

grad::Array sample_latents(std::size_t n, int latent_dim, Rng& rng) {
    if (latent_dim < 1) throw std::invalid_argument("sample_latents: latent_dim must be >= 1");
    grad::Array z(static_cast<Eigen::Index>(n), latent_dim);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = rng.normal();
    }
    return z;
}

grad::Array sample_latents(std::size_t n, int latent_dim, std::uint64_t seed) {
    Rng rng(seed);
    return sample_latents(n, latent_dim, rng);
}

void write_batch_csv(std::ostream& out, const SampleBatch& batch) {
    out << "x,y,component\n";
    for (Eigen::Index i = 0; i < batch.points.rows(); ++i) {
        out << fmt::format("{:.17g},{:.17g},{}\n", batch.points(i, 0), batch.points(i, 1),
                           batch.components[static_cast<std::size_t>(i)]);
    }
}

}  // namespace mclgan
