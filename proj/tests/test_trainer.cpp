#include "mclgan/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace mclgan;
using grad::Array;
using grad::Var;

namespace {

TrainConfig small_config() {
    TrainConfig c;
    c.gen_hidden = {16, 16};
    c.disc_trunk = {16, 16};
    c.batch_real = 16;
    c.batch_fake = 32;
    c.steps = 20;
    c.eval_interval = 10;
    c.eval_samples = 400;
    c.eval_prd = false;
    c.snapshot_steps = {10};
    c.snapshot_points = 32;
    c.utilization_window = 5;
    return c;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mclgan_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<Array> values(const std::vector<Var>& params) {
    std::vector<Array> out;
    for (const auto& p : params) out.push_back(p.value());
    return out;
}

// First Adam step with bias correction: p - lr * g / (|g| + eps).
void check_first_adam_step(const std::vector<Array>& before, const std::vector<Var>& grads_from,
                           const std::vector<Var>& after, const AdamConfig& cfg) {
    REQUIRE(before.size() == after.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        const Array& g = grads_from[i].grad();
        const Array expected = (before[i].array() - cfg.lr * g.array() / (g.array().abs() + cfg.eps)).matrix();
        worst = std::max(worst, (expected - after[i].value()).cwiseAbs().maxCoeff());
    }
    CHECK(worst < 1e-12);
}

}  // namespace

TEST_CASE("zero learning rate leaves every parameter unchanged") {
    auto c = small_config();
    c.adam_d.lr = 0.0;
    c.adam_g.lr = 0.0;
    auto s = make_state(c);
    const auto hg = parameter_hash(s.generator.parameters());
    const auto hd = parameter_hash(s.discriminator.parameters());
    for (int i = 0; i < 5; ++i) (void)train_step(s);
    CHECK(parameter_hash(s.generator.parameters()) == hg);
    CHECK(parameter_hash(s.discriminator.parameters()) == hd);
    CHECK(s.step == 5);
}

TEST_CASE("one step matches a scripted recomputation") {
    for (auto variant : {losses::LossVariant::standard, losses::LossVariant::hinge, losses::LossVariant::least_squares}) {
        const std::string variant_name(losses::to_string(variant));
        CAPTURE(variant_name);
        auto c = small_config();
        c.variant = variant;
        c.heads = 4;
        c.weights.k = 2;
        c.weights.gamma = 1e-3;
        c.weights.beta_g = 0.2;
        auto s = make_state(c);
        for (int i = 0; i < 3; ++i) (void)train_step(s);
        // Fresh optimizers so the next update is a first Adam step.
        s.opt_d = Adam(s.discriminator.parameters(), c.adam_d);
        s.opt_g = Adam(s.generator.parameters(), c.adam_g);

        const GeneratorNet g0 = s.generator.clone();
        const MultiDiscriminator d0 = s.discriminator.clone();
        Rng data_rng = s.data_rng;
        Rng latent_rng = s.latent_rng;
        const auto step = s.step;

        const auto r = train_step(s);

        const Array real = sample_mixture(s.spec, 16, data_rng).points;
        const Array z = sample_latents(32, 2, latent_rng);
        CHECK(r.real == real);
        CHECK(r.latents == z);
        const Array fake = g0.sample(z);
        CHECK(r.fake == fake);

        const double beta_d = balance_weight(step, c.weights.beta_d, c.half_life_d, c.schedule);
        const double beta_g = balance_weight(step, c.weights.beta_g, c.half_life_g, c.schedule);
        CHECK(r.losses.beta_d == beta_d);

        // Discriminator: loss on the pre-step networks, v from the real scores.
        const auto d_before = values(d0.parameters());
        const auto real_out = d0.forward(real);
        const auto fake_out = d0.forward(fake);
        const auto v = mcl::select_topk(real_out.scores.value(), 2);
        CHECK(v.mask() == r.real_experts.mask());
        const auto dterms = losses::total_disc_loss(real_out, fake_out, v, c.weights, beta_d, variant);
        CHECK(dterms.total.item() == doctest::Approx(r.losses.d_total).epsilon(1e-12));
        grad::backward(dterms.total);
        check_first_adam_step(d_before, d0.parameters(), s.discriminator.parameters(), c.adam_d);

        // Generator: frozen updated discriminator, u from its scores on the same fakes.
        const auto g_before = values(g0.parameters());
        const Var fake_var = g0.forward(Var::constant(z));
        const auto gen_out = s.discriminator.forward(fake_var, ParamMode::frozen);
        const auto u = mcl::select_topk(gen_out.scores.value(), 2);
        CHECK(u.mask() == r.fake_experts.mask());
        const Array real_logits = s.discriminator.forward(real, ParamMode::frozen).logits.value();
        const auto gterms = losses::total_gen_loss(gen_out, real_logits, u, c.weights, beta_g, variant);
        CHECK(gterms.total.item() == doctest::Approx(r.losses.g_total).epsilon(1e-12));
        grad::backward(gterms.total);
        check_first_adam_step(g_before, g0.parameters(), s.generator.parameters(), c.adam_g);
    }
}

TEST_CASE("the discriminator update never moves the generator and vice versa") {
    auto c = small_config();
    c.adam_g.lr = 0.0;
    auto s = make_state(c);
    const auto hg = parameter_hash(s.generator.parameters());
    const auto hd = parameter_hash(s.discriminator.parameters());
    (void)train_step(s);
    CHECK(parameter_hash(s.generator.parameters()) == hg);
    CHECK(parameter_hash(s.discriminator.parameters()) != hd);

    c = small_config();
    c.adam_d.lr = 0.0;
    s = make_state(c);
    const auto hg2 = parameter_hash(s.generator.parameters());
    const auto hd2 = parameter_hash(s.discriminator.parameters());
    (void)train_step(s);
    CHECK(parameter_hash(s.generator.parameters()) != hg2);
    CHECK(parameter_hash(s.discriminator.parameters()) == hd2);
}

TEST_CASE("100 steps are deterministic per seed") {
    auto c = small_config();
    auto a = make_state(c);
    auto b = make_state(c);
    for (int i = 0; i < 100; ++i) {
        const auto ra = train_step(a);
        const auto rb = train_step(b);
        REQUIRE(ra.losses.d_total == rb.losses.d_total);
        REQUIRE(ra.losses.g_total == rb.losses.g_total);
    }
    CHECK(parameter_hash(a.generator.parameters()) == parameter_hash(b.generator.parameters()));
    CHECK(parameter_hash(a.discriminator.parameters()) == parameter_hash(b.discriminator.parameters()));
    c.seed = 1;
    auto other = make_state(c);
    CHECK(parameter_hash(other.generator.parameters()) != parameter_hash(a.generator.parameters()));
}

TEST_CASE("utilization window sums to window times k") {
    auto c = small_config();
    c.heads = 5;
    c.weights.k = 2;
    auto s = make_state(c);
    for (int i = 0; i < 12; ++i) (void)train_step(s);
    const auto h = s.window.histogram();
    CHECK(h.total() == 5L * c.batch_real * 2);
}

TEST_CASE("zero steps produce exactly one record") {
    auto c = small_config();
    c.steps = 0;
    const auto log = run_experiment(c);
    REQUIRE(log.records.size() == 1);
    CHECK(log.records[0].step == 0);
    CHECK(log.steps.empty());
}

TEST_CASE("run writes its artifacts and records at the right steps") {
    auto c = small_config();
    c.steps = 25;
    const auto dir = scratch_dir("run");
    RunOptions o;
    o.out_dir = dir;
    int callbacks = 0;
    o.on_record = [&](const MetricsRecord&) { ++callbacks; };
    const auto log = run_experiment(c, o);
    REQUIRE(log.records.size() == 4);
    CHECK(log.records[1].step == 10);
    CHECK(log.records[3].step == 25);
    CHECK(callbacks == 4);
    CHECK(log.steps.size() == 25);
    for (const char* f : {"metrics.csv", "config.echo", "snapshot_10.csv", "checkpoint_10.bin", "checkpoint_25.bin",
                          "utilization_0.csv", "utilization_25.csv"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
    }
    std::istringstream echo(slurp(dir / "config.echo"));
    std::ostringstream expected;
    write_config(expected, c);
    CHECK(echo.str() == expected.str());

    std::istringstream metrics(slurp(dir / "metrics.csv"));
    std::string header;
    std::getline(metrics, header);
    CHECK(header.rfind("step,beta_d,beta_g,d_total", 0) == 0);
    int rows = 0;
    for (std::string line; std::getline(metrics, line);) ++rows;
    CHECK(rows == 4);

    std::ifstream ck(dir / "checkpoint_25.bin", std::ios::binary);
    const auto nets = import_parameters(read_checkpoint(ck));
    const Array z = sample_latents(8, 2, 3);
    const auto state_free = make_state(c);
    CHECK(nets.generator.sample(z) != state_free.generator.sample(z));
    std::filesystem::remove_all(dir);
}

TEST_CASE("metrics.csv is byte-identical across runs with the same seed") {
    auto c = small_config();
    c.steps = 40;
    c.eval_prd = true;
    c.prd_restarts = 2;
    const auto a = scratch_dir("det_a");
    const auto b = scratch_dir("det_b");
    RunOptions oa;
    oa.out_dir = a;
    RunOptions ob;
    ob.out_dir = b;
    (void)run_experiment(c, oa);
    (void)run_experiment(c, ob);
    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
    CHECK(slurp(a / "snapshot_10.csv") == slurp(b / "snapshot_10.csv"));
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST_CASE("sweep over alpha writes one run per value with its config echo") {
    auto c = small_config();
    c.steps = 10;
    const auto dir = scratch_dir("sweep");
    SweepOptions o;
    o.param = "alpha";
    o.values = {"0", "0.01", "0.1"};
    o.seeds = 2;
    o.jobs = 2;
    o.out_dir = dir;
    const auto runs = run_sweep(c, o);
    REQUIRE(runs.size() == 6);
    CHECK(runs[0].value == "0");
    CHECK(runs[1].seed == 1);
    for (const auto& run : runs) {
        const auto run_dir = dir / ("alpha=" + run.value) / ("seed_" + std::to_string(run.seed));
        std::istringstream echo(slurp(run_dir / "config.echo"));
        const auto back = parse_config(echo);
        CHECK(back.weights.alpha == std::stod(run.value));
        CHECK(back.seed == run.seed);
        CHECK(std::filesystem::exists(run_dir / "metrics.csv"));
    }
    CHECK(std::filesystem::exists(dir / "summary.csv"));

    // Serial and concurrent sweeps agree.
    o.jobs = 1;
    o.out_dir.reset();
    const auto serial = run_sweep(c, o);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        CHECK(serial[i].log.records.back().losses.d_total == runs[i].log.records.back().losses.d_total);
    }

    o.values = {"0.1", "-1"};
    CHECK_THROWS_AS(run_sweep(c, o), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sweeping the seed key offsets from the swept value") {
    auto c = small_config();
    c.steps = 2;
    SweepOptions o;
    o.param = "seed";
    o.values = {"5", "9"};
    o.seeds = 2;
    const auto runs = run_sweep(c, o);
    REQUIRE(runs.size() == 4);
    CHECK(runs[0].seed == 5);
    CHECK(runs[1].seed == 6);
    CHECK(runs[2].seed == 9);
    CHECK(runs[3].log.config.seed == 10);
}

TEST_CASE("a NaN parameter aborts with a diagnostic") {
    auto c = small_config();
    auto s = make_state(c);
    s.discriminator.head_weight(0)(0) = std::numeric_limits<double>::quiet_NaN();
    try {
        (void)train_step(s);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.diagnostic().step == 1);
        CHECK(e.diagnostic().real.rows() == c.batch_real);
        CHECK(e.diagnostic().fake_logits.cols() == c.heads);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("evaluation losses do not disturb training streams") {
    auto c = small_config();
    auto a = make_state(c);
    auto b = make_state(c);
    (void)evaluate_losses(a, 0);
    const auto l1 = evaluate_losses(a, 0);
    const auto l2 = evaluate_losses(a, 0);
    CHECK(l1.d_total == l2.d_total);
    CHECK(train_step(a).losses.d_total == train_step(b).losses.d_total);
}
