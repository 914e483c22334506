#pragma once

#include "mclgan/data.hpp"
#include "mclgan/grad.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mclgan {

enum class Activation { linear, relu, leaky_relu };

/// Whether a forward pass records gradients for the network's own parameters.
/// Frozen passes still propagate gradients to the input.
enum class ParamMode { trainable, frozen };

struct Linear {
    grad::Var weight;  // in x out
    grad::Var bias;    // 1 x out

    Linear(int in, int out, double init_bound, Rng& rng);
    [[nodiscard]] grad::Var forward(const grad::Var& x, ParamMode mode) const;
    [[nodiscard]] int in_features() const { return static_cast<int>(weight.rows()); }
    [[nodiscard]] int out_features() const { return static_cast<int>(weight.cols()); }
    [[nodiscard]] Linear clone() const;

private:
    Linear() = default;
};

/// Fully connected stack. `activate_last` applies the hidden activation after
/// the final layer as well (used for the discriminator trunk).
class Mlp {
public:
    Mlp(int in, const std::vector<int>& widths, Activation act, bool activate_last, Rng& rng);

    [[nodiscard]] grad::Var forward(const grad::Var& x, ParamMode mode) const;
    [[nodiscard]] std::vector<grad::Var> parameters() const;
    [[nodiscard]] int in_features() const { return in_; }
    [[nodiscard]] int out_features() const;
    [[nodiscard]] const std::vector<Linear>& layers() const { return layers_; }
    [[nodiscard]] Mlp clone() const;

private:
    int in_;
    std::vector<Linear> layers_;
    Activation act_;
    bool activate_last_;
};

inline constexpr double kLeakySlope = 0.2;

struct GeneratorSpec {
    int latent_dim = 2;
    int data_dim = 2;
    std::vector<int> hidden = {128, 128, 128};
};

class GeneratorNet {
public:
    GeneratorNet(const GeneratorSpec& spec, Rng& rng);

    [[nodiscard]] grad::Var forward(const grad::Var& z, ParamMode mode = ParamMode::trainable) const;
    [[nodiscard]] grad::Array sample(const grad::Array& z) const;
    /// Deep copy; copies share no parameter storage.
    [[nodiscard]] GeneratorNet clone() const;

    [[nodiscard]] std::vector<grad::Var> parameters() const { return mlp_.parameters(); }
    [[nodiscard]] const GeneratorSpec& spec() const { return spec_; }
    [[nodiscard]] const Mlp& mlp() const { return mlp_; }

private:
    GeneratorSpec spec_;
    Mlp mlp_;
};

struct DiscriminatorSpec {
    int data_dim = 2;
    std::vector<int> trunk = {128, 128, 128};
    int heads = 8;
};

struct HeadOutputs {
    grad::Var logits;  // N x M
    grad::Var scores;  // sigmoid(logits)
};

/// Shared feature trunk followed by M scalar heads. The heads are stored as
/// one feature x M weight matrix and a 1 x M bias; column m is head m.
class MultiDiscriminator {
public:
    MultiDiscriminator(const DiscriminatorSpec& spec, Rng& rng);

    [[nodiscard]] HeadOutputs forward(const grad::Var& x, ParamMode mode = ParamMode::trainable) const;
    [[nodiscard]] HeadOutputs forward(const grad::Array& x, ParamMode mode = ParamMode::trainable) const;

    [[nodiscard]] std::vector<grad::Var> parameters() const;
    [[nodiscard]] MultiDiscriminator clone() const;
    [[nodiscard]] int heads() const { return spec_.heads; }
    [[nodiscard]] int feature_dim() const { return trunk_.out_features(); }
    [[nodiscard]] const DiscriminatorSpec& spec() const { return spec_; }
    [[nodiscard]] std::size_t parameter_count() const;

    /// Mutable views onto head m's parameters: column m of the head weight
    /// matrix and entry m of the head bias.
    [[nodiscard]] auto head_weight(int m) { return head_.weight.mutable_value().col(m); }
    [[nodiscard]] double& head_bias(int m) { return head_.bias.mutable_value()(0, m); }
    [[nodiscard]] const Mlp& trunk() const { return trunk_; }

    [[nodiscard]] std::uint64_t trunk_evaluations() const { return trunk_calls_; }

private:
    DiscriminatorSpec spec_;
    Mlp trunk_;
    Linear head_;
    mutable std::uint64_t trunk_calls_ = 0;
};

// ---- checkpoints ----
//
// Little-endian container:
//   magic "MCLGANCK" (8 bytes), u32 version (=1), u32 entry count, then per entry
//   u32 name length, name bytes, u32 rank, u64 dims[rank], f64 data (row-major).

using NamedArrays = std::map<std::string, grad::Array>;

void write_checkpoint(std::ostream& out, const NamedArrays& arrays);
NamedArrays read_checkpoint(std::istream& in);

NamedArrays export_parameters(const GeneratorNet& gen, const MultiDiscriminator& disc);
/// Rebuilds both networks (architecture stored under "meta.*") from a checkpoint.
struct LoadedNetworks {
    GeneratorNet generator;
    MultiDiscriminator discriminator;
};
LoadedNetworks import_parameters(const NamedArrays& arrays);

/// Order-sensitive FNV-1a hash over parameter bytes; used to detect updates.
std::uint64_t parameter_hash(const std::vector<grad::Var>& params);

}  // namespace mclgan
