#include "mclgan/trainer.hpp"

#include "mclgan/gan_losses.hpp"

#include <fmt/format.h>
#include <fmt/os.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace mclgan {

using grad::Array;
using grad::Var;

namespace {

// Stream ids at and above this offset are reserved for evaluation batches.
constexpr std::uint64_t kEvalStreamBase = 1ULL << 32;

Rng stream(std::uint64_t seed, Stream s) { return Rng::stream(seed, static_cast<std::uint64_t>(s)); }

GeneratorNet build_generator(const TrainConfig& c) {
    Rng rng = stream(c.seed, Stream::gen_init);
    return GeneratorNet(c.generator_spec(), rng);
}

MultiDiscriminator build_discriminator(const TrainConfig& c) {
    Rng rng = stream(c.seed, Stream::disc_init);
    return MultiDiscriminator(c.discriminator_spec(), rng);
}

bool finite(const StepLosses& l) {
    for (double v : {l.d_total, l.d_expert_real, l.d_expert_fake, l.d_nonexpert, l.d_balance, l.d_sparsity, l.g_total,
                     l.g_expert, l.g_nonexpert, l.g_balance}) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void copy_disc_terms(StepLosses& l, const losses::DiscLossTerms& t) {
    l.d_total = t.total.item();
    l.d_expert_real = t.expert_real;
    l.d_expert_fake = t.expert_fake;
    l.d_nonexpert = t.nonexpert;
    l.d_balance = t.balance;
    l.d_sparsity = t.sparsity;
}

void copy_gen_terms(StepLosses& l, const losses::GenLossTerms& t) {
    l.g_total = t.total.item();
    l.g_expert = t.expert;
    l.g_nonexpert = t.nonexpert;
    l.g_balance = t.balance;
}

std::string describe(const Diagnostic& d) {
    const auto& l = d.losses;
    return fmt::format(
        "non-finite loss at step {}: d_total={} (expert_real={}, expert_fake={}, nonexpert={}, balance={}, "
        "sparsity={}), g_total={} (expert={}, nonexpert={}, balance={})",
        d.step, l.d_total, l.d_expert_real, l.d_expert_fake, l.d_nonexpert, l.d_balance, l.d_sparsity, l.g_total,
        l.g_expert, l.g_nonexpert, l.g_balance);
}

[[noreturn]] void diverged(const TrainState& s, const StepLosses& l, const Array& real, const Array& fake) {
    Diagnostic d;
    d.step = s.step + 1;
    d.losses = l;
    d.real = real;
    d.fake = fake;
    d.real_logits = s.discriminator.forward(real, ParamMode::frozen).logits.value();
    d.fake_logits = s.discriminator.forward(fake, ParamMode::frozen).logits.value();
    throw TrainingDiverged(std::move(d));
}

}  // namespace

TrainingDiverged::TrainingDiverged(Diagnostic d) : std::runtime_error(describe(d)), diag_(std::move(d)) {}

TrainState make_state(const TrainConfig& config) {
    config.validate();
    GeneratorNet gen = build_generator(config);
    MultiDiscriminator disc = build_discriminator(config);
    Adam opt_g(gen.parameters(), config.adam_g);
    Adam opt_d(disc.parameters(), config.adam_d);
    return TrainState{config,
                      config.data.mixture(),
                      std::move(gen),
                      std::move(disc),
                      std::move(opt_g),
                      std::move(opt_d),
                      stream(config.seed, Stream::data),
                      stream(config.seed, Stream::latent),
                      0,
                      metrics::UtilizationWindow(config.heads, config.weights.k,
                                                 static_cast<std::size_t>(config.utilization_window))};
}

StepResult train_step(TrainState& s) {
    const TrainConfig& c = s.config;
    const int k = c.weights.k;
    StepResult r;
    StepLosses& l = r.losses;
    l.step = s.step + 1;
    l.beta_d = balance_weight(s.step, c.weights.beta_d, c.half_life_d, c.schedule);
    l.beta_g = balance_weight(s.step, c.weights.beta_g, c.half_life_g, c.schedule);

    // Discriminator update(s). The generator output enters as a constant.
    Var fake;
    HeadOutputs fake_out_pre;
    for (int d = 0; d < c.disc_steps; ++d) {
        r.real = sample_mixture(s.spec, static_cast<std::size_t>(c.batch_real), s.data_rng).points;
        r.latents = sample_latents(static_cast<std::size_t>(c.batch_fake), c.latent_dim, s.latent_rng);
        fake = s.generator.forward(Var::constant(r.latents), ParamMode::trainable);
        r.fake = fake.value();

        const auto real_out = s.discriminator.forward(r.real, ParamMode::trainable);
        fake_out_pre = s.discriminator.forward(r.fake, ParamMode::trainable);
        r.real_experts = mcl::select_topk(real_out.scores.value(), k);
        const auto terms = losses::total_disc_loss(real_out, fake_out_pre, r.real_experts, c.weights, l.beta_d,
                                                   c.variant);
        copy_disc_terms(l, terms);
        if (!std::isfinite(l.d_total)) diverged(s, l, r.real, r.fake);
        s.opt_d.zero_grad();
        grad::backward(terms.total);
        s.opt_d.step();
    }
    // Only the generator update may write gradients from here on; the
    // discriminator graph above is no longer referenced.
    s.opt_g.zero_grad();

    // Generator update through frozen discriminators.
    const auto fake_out = s.discriminator.forward(fake, ParamMode::frozen);
    const Array& selection_scores = c.gen_experts_after_disc_update ? fake_out.scores.value()
                                                                    : fake_out_pre.scores.value();
    r.fake_experts = mcl::select_topk(selection_scores, k);
    const Array real_logits = s.discriminator.forward(r.real, ParamMode::frozen).logits.value();
    const auto gterms = losses::total_gen_loss(fake_out, real_logits, r.fake_experts, c.weights, l.beta_g, c.variant);
    copy_gen_terms(l, gterms);
    if (!finite(l)) diverged(s, l, r.real, r.fake);
    grad::backward(gterms.total);
    s.opt_g.step();
    s.opt_d.zero_grad();

    s.window.push(r.real_experts.counts(), static_cast<long>(r.real_experts.samples()));
    ++s.step;
    return r;
}

StepLosses evaluate_losses(const TrainState& s, std::uint64_t stream_id) {
    const TrainConfig& c = s.config;
    Rng rng = Rng::stream(c.seed, kEvalStreamBase + stream_id);
    StepLosses l;
    l.step = s.step;
    l.beta_d = balance_weight(s.step, c.weights.beta_d, c.half_life_d, c.schedule);
    l.beta_g = balance_weight(s.step, c.weights.beta_g, c.half_life_g, c.schedule);
    const Array real = sample_mixture(s.spec, static_cast<std::size_t>(c.batch_real), rng).points;
    const Array z = sample_latents(static_cast<std::size_t>(c.batch_fake), c.latent_dim, rng);
    const Array fake = s.generator.sample(z);
    const auto real_out = s.discriminator.forward(real, ParamMode::frozen);
    const auto fake_out = s.discriminator.forward(fake, ParamMode::frozen);
    const auto v = mcl::select_topk(real_out.scores.value(), c.weights.k);
    const auto u = mcl::select_topk(fake_out.scores.value(), c.weights.k);
    copy_disc_terms(l, losses::total_disc_loss(real_out, fake_out, v, c.weights, l.beta_d, c.variant));
    copy_gen_terms(l, losses::total_gen_loss(fake_out, real_out.logits.value(), u, c.weights, l.beta_g, c.variant));
    return l;
}

EvalReport evaluate_generator(const GeneratorNet& gen, const MixtureSpec& spec, int n, std::uint64_t seed,
                              const EvalOptions& options) {
    if (n < 1) throw std::invalid_argument("evaluate_generator: n must be >= 1");
    Rng latent_rng = Rng::stream(seed, 0);
    const Array fake = gen.sample(sample_latents(static_cast<std::size_t>(n), gen.spec().latent_dim, latent_rng));
    EvalReport report;
    report.coverage = metrics::mode_coverage(fake, spec, options.coverage_distance, options.coverage_fraction);
    if (options.prd) {
        Rng data_rng = Rng::stream(seed, 1);
        const Array real = sample_mixture(spec, static_cast<std::size_t>(n), data_rng).points;
        report.prd = metrics::prd_f_scores(real, fake, seed, options.prd_options);
    }
    return report;
}

// ---- run_experiment ----

std::vector<std::string> metrics_columns() {
    return {"step",     "beta_d",      "beta_g",      "d_total",     "d_expert_real", "d_expert_fake", "d_nonexpert",
            "d_balance", "d_sparsity", "g_total",     "g_expert",    "g_nonexpert",   "g_balance",     "coverage",
            "hq_ratio", "f8",          "f1_8",        "entropy",     "active_disc"};
}

namespace {

std::string g9(double v) { return fmt::format("{:.9g}", v); }

std::string metrics_row(const MetricsRecord& r) {
    const auto& l = r.losses;
    const std::string f8 = r.eval.prd ? g9(r.eval.prd->f8) : "nan";
    const std::string f1_8 = r.eval.prd ? g9(r.eval.prd->f1_8) : "nan";
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}", r.step, g9(l.beta_d), g9(l.beta_g),
                       g9(l.d_total), g9(l.d_expert_real), g9(l.d_expert_fake), g9(l.d_nonexpert), g9(l.d_balance),
                       g9(l.d_sparsity), g9(l.g_total), g9(l.g_expert), g9(l.g_nonexpert), g9(l.g_balance),
                       r.eval.coverage.modes_covered, g9(r.eval.coverage.high_quality_ratio), f8, f1_8, g9(r.entropy),
                       r.active_disc);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

void write_snapshot(const std::filesystem::path& path, const TrainState& s) {
    Rng rng = stream(s.config.seed, Stream::snapshot);
    const Array z = sample_latents(static_cast<std::size_t>(s.config.snapshot_points), s.config.latent_dim, rng);
    const Array x = s.generator.sample(z);
    const Array scores = s.discriminator.forward(x, ParamMode::frozen).scores.value();
    const auto experts = mcl::select_topk(scores, 1);
    std::string text = "x,y,expert_id\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index m = 0;
        while (!experts(i, m)) ++m;
        text += fmt::format("{:.17g},{:.17g},{}\n", x(i, 0), x(i, 1), m);
    }
    write_file(path, text);
}

void write_utilization(const std::filesystem::path& path, const metrics::UtilizationHistogram& h) {
    std::string text = "head,count,share\n";
    const auto shares = h.shares();
    for (std::size_t m = 0; m < h.counts.size(); ++m) text += fmt::format("{},{},{}\n", m, h.counts[m], g9(shares[m]));
    write_file(path, text);
}

void write_diagnostic(const std::filesystem::path& dir, const Diagnostic& d) {
    std::string text = "set,x,y";
    for (Eigen::Index m = 0; m < d.real_logits.cols(); ++m) text += fmt::format(",logit_{}", m);
    text += '\n';
    auto rows = [&text](const char* name, const Array& pts, const Array& logits) {
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            text += fmt::format("{},{:.17g},{:.17g}", name, pts(i, 0), pts(i, 1));
            for (Eigen::Index m = 0; m < logits.cols(); ++m) text += fmt::format(",{:.17g}", logits(i, m));
            text += '\n';
        }
    };
    rows("real", d.real, d.real_logits);
    rows("fake", d.fake, d.fake_logits);
    write_file(dir / fmt::format("diverged_{}.csv", d.step), text);
}

EvalOptions eval_options(const TrainConfig& c) {
    EvalOptions o;
    o.coverage_distance = c.coverage_threshold();
    o.coverage_fraction = c.coverage_fraction;
    o.prd = c.eval_prd;
    o.prd_options = {c.prd_bins, c.prd_restarts, c.prd_lambdas};
    return o;
}

std::uint64_t eval_seed(std::uint64_t seed, std::int64_t step) {
    std::uint64_t state = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(step) + 1));
    return splitmix64(state);
}

MetricsRecord make_record(const TrainState& s, const StepLosses& losses) {
    MetricsRecord r;
    r.step = s.step;
    r.losses = losses;
    // Each record draws its evaluation batch from its own stream.
    r.eval = evaluate_generator(s.generator, s.spec, s.config.eval_samples,
                                eval_seed(s.config.seed, s.step), eval_options(s.config));
    r.utilization = s.window.histogram();
    r.entropy = metrics::normalized_entropy(r.utilization);
    r.active_disc = metrics::active_discriminators(r.utilization, s.config.activity_threshold);
    return r;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
    const auto cols = metrics_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : records) out << metrics_row(r) << '\n';
}

RunLog run_experiment(const TrainConfig& config, const RunOptions& options) {
    TrainState s = make_state(config);
    RunLog log;
    log.config = config;
    const auto& dir = options.out_dir;
    std::optional<std::ofstream> metrics_out;
    if (dir) {
        std::filesystem::create_directories(*dir);
        std::ostringstream echo;
        write_config(echo, config);
        write_file(*dir / "config.echo", echo.str());
        metrics_out.emplace(*dir / "metrics.csv", std::ios::binary);
        if (!*metrics_out) throw std::runtime_error("cannot write metrics.csv");
        const auto cols = metrics_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) *metrics_out << (i ? "," : "") << cols[i];
        *metrics_out << '\n';
    }

    auto is_snapshot = [&](std::int64_t step) {
        return std::find(config.snapshot_steps.begin(), config.snapshot_steps.end(), step) != config.snapshot_steps.end();
    };
    auto emit = [&](const StepLosses& losses) {
        MetricsRecord rec = make_record(s, losses);
        if (dir) {
            *metrics_out << metrics_row(rec) << '\n';
            metrics_out->flush();
            write_utilization(*dir / fmt::format("utilization_{}.csv", s.step), rec.utilization);
        }
        if (options.on_record) options.on_record(rec);
        log.records.push_back(std::move(rec));
    };
    auto checkpoint = [&]() {
        const auto path = *dir / fmt::format("checkpoint_{}.bin", s.step);
        std::ofstream out(path, std::ios::binary);
        write_checkpoint(out, export_parameters(s.generator, s.discriminator));
        if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
        return path;
    };

    emit(evaluate_losses(s, 0));
    if (dir && is_snapshot(0)) write_snapshot(*dir / "snapshot_0.csv", s);
    if (options.keep_step_losses) log.steps.reserve(static_cast<std::size_t>(config.steps));

    while (s.step < config.steps) {
        StepResult r;
        try {
            r = train_step(s);
        } catch (const TrainingDiverged& e) {
            if (dir) write_diagnostic(*dir, e.diagnostic());
            throw;
        }
        if (options.keep_step_losses) log.steps.push_back(r.losses);
        if (dir && is_snapshot(s.step)) {
            write_snapshot(*dir / fmt::format("snapshot_{}.csv", s.step), s);
            if (s.step != config.steps) checkpoint();
        }
        if (s.step % config.eval_interval == 0 || s.step == config.steps) emit(r.losses);
    }
    if (dir) log.checkpoint = checkpoint();
    return log;
}

// ---- sweeps ----

std::vector<SweepRun> run_sweep(const TrainConfig& base, const SweepOptions& options) {
    if (options.values.empty()) throw std::invalid_argument("sweep: no values");
    if (options.seeds < 1) throw std::invalid_argument("sweep: seeds must be >= 1");
    // Validate every point up front so a bad value fails before any training.
    std::vector<SweepRun> runs;
    std::vector<TrainConfig> configs;
    for (const auto& value : options.values) {
        for (int i = 0; i < options.seeds; ++i) {
            TrainConfig c = base;
            set_config_value(c, options.param, value);
            c.seed += static_cast<std::uint64_t>(i);
            c.validate();
            configs.push_back(c);
            runs.push_back({value, c.seed, {}});
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto worker = [&]() {
        for (std::size_t i = next++; i < runs.size(); i = next++) {
            try {
                RunOptions ro;
                ro.keep_step_losses = false;
                if (options.out_dir) {
                    ro.out_dir = *options.out_dir / fmt::format("{}={}", options.param, runs[i].value) /
                                 fmt::format("seed_{}", runs[i].seed);
                }
                runs[i].log = run_experiment(configs[i], ro);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const int jobs = std::clamp(options.jobs, 1, static_cast<int>(runs.size()));
    std::vector<std::thread> threads;
    for (int j = 1; j < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);

    if (options.out_dir) {
        std::ostringstream summary;
        summary << options.param << ",seed";
        for (const auto& col : metrics_columns()) summary << ',' << col;
        summary << '\n';
        for (const auto& run : runs) {
            summary << run.value << ',' << run.seed << ',' << metrics_row(run.log.records.back()) << '\n';
        }
        write_file(*options.out_dir / "summary.csv", summary.str());
    }
    return runs;
}

}  // namespace mclgan
