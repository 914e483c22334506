#include "mclgan/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mclgan {

double balance_weight(std::int64_t step, double base, double half_life, ScheduleKind kind) {
    if (step < 0) throw std::invalid_argument("balance_weight: step must be >= 0");
    if (!(base >= 0.0)) throw std::invalid_argument("balance_weight: base must be >= 0");
    if (kind == ScheduleKind::constant) return base;
    if (!(half_life > 0.0)) throw std::invalid_argument("balance_weight: half_life must be > 0");
    const double t = static_cast<double>(step) / half_life;
    if (kind == ScheduleKind::exponential) return base * std::exp2(-t);
    return base * std::max(0.0, 1.0 - 0.5 * t);
}

MixtureSpec DataConfig::mixture() const {
    if (kind == "ring") return ring_mixture(components, radius, std);
    if (kind == "grid") return grid_mixture(grid_side, grid_spacing, std);
    throw std::invalid_argument("data.kind must be ring or grid, got '" + kind + "'");
}

GeneratorSpec TrainConfig::generator_spec() const { return {latent_dim, 2, gen_hidden}; }

DiscriminatorSpec TrainConfig::discriminator_spec() const { return {2, disc_trunk, heads}; }

double TrainConfig::coverage_threshold() const { return coverage_distance.value_or(3.0 * data.std); }

void TrainConfig::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("config: ") + what);
    };
    require(heads >= 1, "heads must be >= 1");
    require(weights.k >= 1 && weights.k <= heads, "experts must lie in [1, heads]");
    require(latent_dim >= 1, "latent_dim must be >= 1");
    weights.validate();
    (void)weights.target_distribution(heads);
    require(half_life_d > 0.0 && half_life_g > 0.0, "half lives must be > 0");
    for (const auto* a : {&adam_d, &adam_g}) {
        require(a->lr >= 0.0 && std::isfinite(a->lr), "learning rates must be finite and >= 0");
        require(a->beta1 >= 0.0 && a->beta1 < 1.0 && a->beta2 >= 0.0 && a->beta2 < 1.0, "adam betas must lie in [0, 1)");
        require(a->eps > 0.0, "adam_eps must be > 0");
    }
    require(batch_real >= 1 && batch_fake >= 1, "batch sizes must be >= 1");
    require(steps >= 0, "steps must be >= 0");
    require(disc_steps >= 1, "disc_steps must be >= 1");
    require(eval_interval >= 1, "eval_interval must be >= 1");
    require(eval_samples >= 1, "eval_samples must be >= 1");
    require(snapshot_points >= 1, "snapshot_points must be >= 1");
    require(utilization_window >= 1, "utilization_window must be >= 1");
    require(activity_threshold >= 0.0 && activity_threshold < 1.0, "activity_threshold must lie in [0, 1)");
    require(!coverage_distance || *coverage_distance > 0.0, "coverage_distance must be > 0");
    require(coverage_fraction > 0.0 && coverage_fraction <= 1.0, "coverage_fraction must lie in (0, 1]");
    require(prd_bins >= 2 && prd_restarts >= 1 && prd_lambdas >= 2, "bad prd settings");
    require(!gen_hidden.empty() && !disc_trunk.empty(), "network widths must be non-empty");
    for (int w : gen_hidden) require(w >= 1, "widths must be >= 1");
    for (int w : disc_trunk) require(w >= 1, "widths must be >= 1");
    data.mixture().validate();
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw std::invalid_argument(fmt::format("config: bad value '{}' for key '{}'", text, key));
    }
    return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw std::invalid_argument(fmt::format("config: bad boolean '{}' for key '{}'", text, key));
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    if (trim(text).empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
    return out;
}

ScheduleKind parse_schedule(const std::string& text) {
    if (text == "exponential") return ScheduleKind::exponential;
    if (text == "linear") return ScheduleKind::linear;
    if (text == "constant") return ScheduleKind::constant;
    throw std::invalid_argument("config: balance_schedule must be exponential, linear or constant");
}

std::string_view schedule_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::exponential: return "exponential";
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::constant: return "constant";
    }
    return "exponential";
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
    std::string key;
    Setter set;
    Getter get;
};

std::string num(double v) { return fmt::format("{}", v); }

template <typename T>
std::string join(const std::vector<T>& v) {
    return fmt::format("{}", fmt::join(v, ","));
}

template <typename M>
Field scalar_field(std::string key, M member) {
    return {key,
            [member](TrainConfig& c, const std::string& k, const std::string& v) {
                using T = std::remove_reference_t<decltype(c.*member)>;
                c.*member = parse_number<T>(k, v);
            },
            [member](const TrainConfig& c) { return fmt::format("{}", c.*member); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(scalar_field("heads", &TrainConfig::heads));
        f.push_back({"experts", [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.weights.k = parse_number<int>(k, v);
                     },
                     [](const TrainConfig& c) { return fmt::format("{}", c.weights.k); }});
        f.push_back(scalar_field("latent_dim", &TrainConfig::latent_dim));
        f.push_back({"variant",
                     [](TrainConfig& c, const std::string&, const std::string& v) { c.variant = losses::parse_variant(v); },
                     [](const TrainConfig& c) { return std::string(losses::to_string(c.variant)); }});
        auto weight = [&f](std::string key, double losses::LossWeights::*member) {
            f.push_back({key,
                         [member](TrainConfig& c, const std::string& k, const std::string& v) {
                             c.weights.*member = parse_number<double>(k, v);
                         },
                         [member](const TrainConfig& c) { return num(c.weights.*member); }});
        };
        weight("alpha", &losses::LossWeights::alpha);
        weight("beta_d", &losses::LossWeights::beta_d);
        weight("beta_g", &losses::LossWeights::beta_g);
        weight("gamma", &losses::LossWeights::gamma);
        weight("tau", &losses::LossWeights::tau);
        weight("soft_label", &losses::LossWeights::soft_label);
        f.push_back({"reduction",
                     [](TrainConfig& c, const std::string&, const std::string& v) {
                         c.weights.reduction = losses::parse_reduction(v);
                     },
                     [](const TrainConfig& c) { return std::string(losses::to_string(c.weights.reduction)); }});
        f.push_back({"mu",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.weights.mu = parse_list<double>(k, v);
                     },
                     [](const TrainConfig& c) { return join(c.weights.mu); }});
        f.push_back({"balance_schedule",
                     [](TrainConfig& c, const std::string&, const std::string& v) { c.schedule = parse_schedule(v); },
                     [](const TrainConfig& c) { return std::string(schedule_name(c.schedule)); }});
        f.push_back(scalar_field("half_life_d", &TrainConfig::half_life_d));
        f.push_back(scalar_field("half_life_g", &TrainConfig::half_life_g));
        auto adam = [&f](std::string key, double AdamConfig::*member, bool both) {
            if (both) {
                f.push_back({key,
                             [member](TrainConfig& c, const std::string& k, const std::string& v) {
                                 c.adam_d.*member = c.adam_g.*member = parse_number<double>(k, v);
                             },
                             [member](const TrainConfig& c) { return num(c.adam_d.*member); }});
                return;
            }
            f.push_back({key + "_d",
                         [member](TrainConfig& c, const std::string& k, const std::string& v) {
                             c.adam_d.*member = parse_number<double>(k, v);
                         },
                         [member](const TrainConfig& c) { return num(c.adam_d.*member); }});
            f.push_back({key + "_g",
                         [member](TrainConfig& c, const std::string& k, const std::string& v) {
                             c.adam_g.*member = parse_number<double>(k, v);
                         },
                         [member](const TrainConfig& c) { return num(c.adam_g.*member); }});
        };
        adam("lr", &AdamConfig::lr, false);
        adam("adam_beta1", &AdamConfig::beta1, true);
        adam("adam_beta2", &AdamConfig::beta2, true);
        adam("adam_eps", &AdamConfig::eps, true);
        f.push_back(scalar_field("batch_real", &TrainConfig::batch_real));
        f.push_back(scalar_field("batch_fake", &TrainConfig::batch_fake));
        f.push_back(scalar_field("steps", &TrainConfig::steps));
        f.push_back(scalar_field("disc_steps", &TrainConfig::disc_steps));
        f.push_back({"gen_experts_after_disc_update",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.gen_experts_after_disc_update = parse_bool(k, v);
                     },
                     [](const TrainConfig& c) { return std::string(c.gen_experts_after_disc_update ? "true" : "false"); }});
        f.push_back(scalar_field("eval_interval", &TrainConfig::eval_interval));
        f.push_back(scalar_field("eval_samples", &TrainConfig::eval_samples));
        f.push_back({"snapshot_steps",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.snapshot_steps = parse_list<std::int64_t>(k, v);
                     },
                     [](const TrainConfig& c) { return join(c.snapshot_steps); }});
        f.push_back(scalar_field("snapshot_points", &TrainConfig::snapshot_points));
        f.push_back(scalar_field("utilization_window", &TrainConfig::utilization_window));
        f.push_back(scalar_field("activity_threshold", &TrainConfig::activity_threshold));
        f.push_back({"coverage_distance",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         if (v == "auto") {
                             c.coverage_distance.reset();
                         } else {
                             c.coverage_distance = parse_number<double>(k, v);
                         }
                     },
                     [](const TrainConfig& c) {
                         return c.coverage_distance ? num(*c.coverage_distance) : std::string("auto");
                     }});
        f.push_back(scalar_field("coverage_fraction", &TrainConfig::coverage_fraction));
        f.push_back({"eval_prd",
                     [](TrainConfig& c, const std::string& k, const std::string& v) { c.eval_prd = parse_bool(k, v); },
                     [](const TrainConfig& c) { return std::string(c.eval_prd ? "true" : "false"); }});
        f.push_back(scalar_field("prd_bins", &TrainConfig::prd_bins));
        f.push_back(scalar_field("prd_restarts", &TrainConfig::prd_restarts));
        f.push_back(scalar_field("prd_lambdas", &TrainConfig::prd_lambdas));
        f.push_back(scalar_field("seed", &TrainConfig::seed));
        f.push_back({"data.kind", [](TrainConfig& c, const std::string&, const std::string& v) { c.data.kind = v; },
                     [](const TrainConfig& c) { return c.data.kind; }});
        f.push_back({"data.components",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.data.components = parse_number<int>(k, v);
                     },
                     [](const TrainConfig& c) { return fmt::format("{}", c.data.components); }});
        auto data_real = [&f](std::string key, double DataConfig::*member) {
            f.push_back({key,
                         [member](TrainConfig& c, const std::string& k, const std::string& v) {
                             c.data.*member = parse_number<double>(k, v);
                         },
                         [member](const TrainConfig& c) { return num(c.data.*member); }});
        };
        data_real("data.radius", &DataConfig::radius);
        data_real("data.std", &DataConfig::std);
        data_real("data.grid_spacing", &DataConfig::grid_spacing);
        f.push_back({"data.grid_side",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.data.grid_side = parse_number<int>(k, v);
                     },
                     [](const TrainConfig& c) { return fmt::format("{}", c.data.grid_side); }});
        f.push_back({"gen.hidden",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.gen_hidden = parse_list<int>(k, v);
                     },
                     [](const TrainConfig& c) { return join(c.gen_hidden); }});
        f.push_back({"disc.trunk",
                     [](TrainConfig& c, const std::string& k, const std::string& v) {
                         c.disc_trunk = parse_list<int>(k, v);
                     },
                     [](const TrainConfig& c) { return join(c.disc_trunk); }});
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

std::vector<std::pair<std::string, std::string>> read_pairs(std::istream& in) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw std::invalid_argument(fmt::format("config line {}: expected key = value", lineno));
        std::string key = trim(std::string_view(body).substr(0, eq));
        std::string value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(fmt::format("config line {}: empty key", lineno));
        if (!seen.insert(key).second) throw std::invalid_argument(fmt::format("config line {}: duplicate key '{}'", lineno, key));
        pairs.emplace_back(std::move(key), std::move(value));
    }
    return pairs;
}

}  // namespace

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (f == nullptr) throw std::invalid_argument("config: unknown key '" + key + "'");
    f->set(config, key, value);
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

TrainConfig parse_config(std::istream& in) {
    const auto pairs = read_pairs(in);
    TrainConfig config;
    bool has_tau = false;
    bool has_lr_d = false;
    bool has_lr_g = false;
    for (const auto& [key, value] : pairs) {
        set_config_value(config, key, value);
        has_tau |= key == "tau";
        has_lr_d |= key == "lr_d";
        has_lr_g |= key == "lr_g";
    }
    if (config.variant == losses::LossVariant::least_squares) {
        if (!has_tau) config.weights.tau = 0.1;
        if (!has_lr_d) config.adam_d.lr = 1e-4;
        if (!has_lr_g) config.adam_g.lr = 1e-4;
    }
    config.validate();
    return config;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    return parse_config(in);
}

void write_config(std::ostream& out, const TrainConfig& config) {
    for (const auto& f : fields()) out << f.key << " = " << f.get(config) << '\n';
}

DataConfig parse_data_spec(std::istream& in) {
    TrainConfig config;
    for (const auto& [key, value] : read_pairs(in)) {
        if (key.rfind("data.", 0) != 0) throw std::invalid_argument("data spec: unexpected key '" + key + "'");
        set_config_value(config, key, value);
    }
    config.data.mixture().validate();
    return config.data;
}

}  // namespace mclgan
