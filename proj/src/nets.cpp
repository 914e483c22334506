#include "mclgan/nets.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mclgan {

using grad::Array;
using grad::Var;

namespace {

// He-style bound for layers feeding a rectifier, LeCun-style for linear outputs.
double init_bound(int fan_in, bool rectified) {
    return std::sqrt((rectified ? 6.0 : 3.0) / static_cast<double>(fan_in));
}

Var apply(Activation act, const Var& x) {
    switch (act) {
        case Activation::relu: return grad::relu(x);
        case Activation::leaky_relu: return grad::leaky_relu(x, kLeakySlope);
        case Activation::linear: return x;
    }
    return x;
}

Var view(const Var& param, ParamMode mode) {
    return mode == ParamMode::trainable ? param : grad::detach(param);
}

}  // namespace

Linear::Linear(int in, int out, double bound, Rng& rng) {
    if (in < 1 || out < 1) throw std::invalid_argument("Linear: dimensions must be positive");
    Array w(in, out);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = bound * (2.0 * rng.uniform() - 1.0);
    }
    weight = Var::leaf(std::move(w));
    bias = Var::leaf(Array::Zero(1, out));
}

Var Linear::forward(const Var& x, ParamMode mode) const {
    if (x.cols() != weight.rows()) {
        throw std::invalid_argument("Linear: expected " + std::to_string(weight.rows()) +
                                    " input columns, got " + std::to_string(x.cols()));
    }
    return grad::add_row(grad::matmul(x, view(weight, mode)), view(bias, mode));
}

Linear Linear::clone() const {
    Linear copy;
    copy.weight = Var::leaf(weight.value());
    copy.bias = Var::leaf(bias.value());
    return copy;
}

Mlp::Mlp(int in, const std::vector<int>& widths, Activation act, bool activate_last, Rng& rng)
    : in_(in), act_(act), activate_last_(activate_last) {
    if (widths.empty()) throw std::invalid_argument("Mlp: need at least one layer");
    int fan_in = in;
    for (std::size_t l = 0; l < widths.size(); ++l) {
        const bool rectified = act != Activation::linear && (activate_last || l + 1 < widths.size());
        layers_.emplace_back(fan_in, widths[l], init_bound(fan_in, rectified), rng);
        fan_in = widths[l];
    }
}

Var Mlp::forward(const Var& x, ParamMode mode) const {
    Var h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        h = layers_[l].forward(h, mode);
        if (activate_last_ || l + 1 < layers_.size()) h = apply(act_, h);
    }
    return h;
}

std::vector<Var> Mlp::parameters() const {
    std::vector<Var> out;
    for (const auto& layer : layers_) {
        out.push_back(layer.weight);
        out.push_back(layer.bias);
    }
    return out;
}

Mlp Mlp::clone() const {
    Mlp copy = *this;
    for (auto& layer : copy.layers_) layer = layer.clone();
    return copy;
}

int Mlp::out_features() const { return layers_.back().out_features(); }

namespace {
std::vector<int> with_output(std::vector<int> hidden, int out) {
    hidden.push_back(out);
    return hidden;
}
}  // namespace

GeneratorNet::GeneratorNet(const GeneratorSpec& spec, Rng& rng)
    : spec_(spec), mlp_(spec.latent_dim, with_output(spec.hidden, spec.data_dim), Activation::relu, false, rng) {}

Var GeneratorNet::forward(const Var& z, ParamMode mode) const {
    if (z.cols() != spec_.latent_dim) {
        throw std::invalid_argument("generator: expected latent dimension " +
                                    std::to_string(spec_.latent_dim) + ", got " +
                                    std::to_string(z.cols()));
    }
    return mlp_.forward(z, mode);
}

Array GeneratorNet::sample(const Array& z) const {
    return forward(Var::constant(z), ParamMode::frozen).value();
}

GeneratorNet GeneratorNet::clone() const {
    GeneratorNet copy = *this;
    copy.mlp_ = mlp_.clone();
    return copy;
}

MultiDiscriminator::MultiDiscriminator(const DiscriminatorSpec& spec, Rng& rng)
    : spec_(spec),
      trunk_(spec.data_dim, spec.trunk, Activation::leaky_relu, true, rng),
      head_(spec.trunk.empty() ? spec.data_dim : spec.trunk.back(), spec.heads,
            init_bound(spec.trunk.empty() ? spec.data_dim : spec.trunk.back(), false), rng) {
    if (spec.heads < 1) throw std::invalid_argument("discriminator: need at least one head");
}

HeadOutputs MultiDiscriminator::forward(const Var& x, ParamMode mode) const {
    if (x.cols() != spec_.data_dim) {
        throw std::invalid_argument("discriminator: expected data dimension " +
                                    std::to_string(spec_.data_dim) + ", got " +
                                    std::to_string(x.cols()));
    }
    ++trunk_calls_;
    const Var features = trunk_.forward(x, mode);
    HeadOutputs out;
    out.logits = head_.forward(features, mode);
    out.scores = grad::sigmoid(out.logits);
    return out;
}

HeadOutputs MultiDiscriminator::forward(const Array& x, ParamMode mode) const {
    return forward(Var::constant(x), mode);
}

std::vector<Var> MultiDiscriminator::parameters() const {
    auto out = trunk_.parameters();
    out.push_back(head_.weight);
    out.push_back(head_.bias);
    return out;
}

MultiDiscriminator MultiDiscriminator::clone() const {
    MultiDiscriminator copy = *this;
    copy.trunk_ = trunk_.clone();
    copy.head_ = head_.clone();
    copy.trunk_calls_ = 0;
    return copy;
}

std::size_t MultiDiscriminator::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += static_cast<std::size_t>(p.value().size());
    return n;
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[8] = {'M', 'C', 'L', 'G', 'A', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated stream");
    return v;
}

Array vector_array(const std::vector<int>& v) {
    Array a(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) a(0, static_cast<Eigen::Index>(i)) = v[i];
    return a;
}

std::vector<int> array_vector(const Array& a) {
    std::vector<int> v;
    for (Eigen::Index i = 0; i < a.size(); ++i) v.push_back(static_cast<int>(a.data()[i]));
    return v;
}

std::string fmt_param_name(const char* net, std::size_t index) {
    return fmt::format("{}.layer{}.{}", net, index / 2, index % 2 == 0 ? "weight" : "bias");
}

const Array& require(const NamedArrays& arrays, const std::string& name) {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint: missing array '" + name + "'");
    return it->second;
}

void copy_into(Var& target, const Array& source, const std::string& name) {
    if (target.rows() != source.rows() || target.cols() != source.cols()) {
        throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    target.mutable_value() = source;
}

}  // namespace

void write_checkpoint(std::ostream& out, const NamedArrays& arrays) {
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, a] : arrays) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, static_cast<std::uint64_t>(a.rows()));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(a.cols()));
        out.write(reinterpret_cast<const char*>(a.data()),
                  static_cast<std::streamsize>(a.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

NamedArrays read_checkpoint(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("checkpoint: unsupported version");
    const auto count = get<std::uint32_t>(in);
    NamedArrays arrays;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto len = get<std::uint32_t>(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const auto rank = get<std::uint32_t>(in);
        if (rank > 2) throw std::runtime_error("checkpoint: rank > 2 not supported");
        std::uint64_t dims[2] = {1, 1};
        for (std::uint32_t r = 0; r < rank; ++r) dims[r + (2 - rank)] = get<std::uint64_t>(in);
        Array a(static_cast<Eigen::Index>(dims[0]), static_cast<Eigen::Index>(dims[1]));
        in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated data for '" + name + "'");
        arrays.emplace(std::move(name), std::move(a));
    }
    return arrays;
}

NamedArrays export_parameters(const GeneratorNet& gen, const MultiDiscriminator& disc) {
    NamedArrays out;
    const auto& gs = gen.spec();
    out["meta.gen.latent_dim"] = vector_array({gs.latent_dim});
    out["meta.gen.data_dim"] = vector_array({gs.data_dim});
    out["meta.gen.hidden"] = vector_array(gs.hidden);
    const auto& ds = disc.spec();
    out["meta.disc.data_dim"] = vector_array({ds.data_dim});
    out["meta.disc.trunk"] = vector_array(ds.trunk);
    out["meta.disc.heads"] = vector_array({ds.heads});

    const auto gp = gen.parameters();
    for (std::size_t i = 0; i < gp.size(); ++i) out[fmt_param_name("gen", i)] = gp[i].value();
    const auto dp = disc.parameters();
    for (std::size_t i = 0; i < dp.size(); ++i) out[fmt_param_name("disc", i)] = dp[i].value();
    return out;
}

LoadedNetworks import_parameters(const NamedArrays& arrays) {
    GeneratorSpec gs;
    gs.latent_dim = array_vector(require(arrays, "meta.gen.latent_dim")).at(0);
    gs.data_dim = array_vector(require(arrays, "meta.gen.data_dim")).at(0);
    gs.hidden = array_vector(require(arrays, "meta.gen.hidden"));
    DiscriminatorSpec ds;
    ds.data_dim = array_vector(require(arrays, "meta.disc.data_dim")).at(0);
    ds.trunk = array_vector(require(arrays, "meta.disc.trunk"));
    ds.heads = array_vector(require(arrays, "meta.disc.heads")).at(0);

    Rng rng(0);
    LoadedNetworks nets{GeneratorNet(gs, rng), MultiDiscriminator(ds, rng)};
    auto gp = nets.generator.parameters();
    for (std::size_t i = 0; i < gp.size(); ++i) {
        const auto name = fmt_param_name("gen", i);
        copy_into(gp[i], require(arrays, name), name);
    }
    auto dp = nets.discriminator.parameters();
    for (std::size_t i = 0; i < dp.size(); ++i) {
        const auto name = fmt_param_name("disc", i);
        copy_into(dp[i], require(arrays, name), name);
    }
    return nets;
}

std::uint64_t parameter_hash(const std::vector<Var>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.value().data());
        const auto n = static_cast<std::size_t>(p.value().size()) * sizeof(double);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace mclgan
