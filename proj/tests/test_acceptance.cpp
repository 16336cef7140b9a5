// Acceptance suite: one test per criterion, each printing a pass/fail line.
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "vburst/gradcheck.hpp"
#include "vburst/trainer.hpp"

using namespace vburst;

namespace {

namespace fs = std::filesystem;

double seconds_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("criterion %2d [%s]: %s (%s)\n", criterion, name.c_str(),
                pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

// Lean backbone for the desk-scale learnability runs; everything else uses
// the library defaults.
RunConfig learnability_config(Architecture arch, Strategy strategy) {
    RunConfig cfg;
    cfg.architecture = arch;
    cfg.strategy = strategy;
    cfg.epochs = 10;
    cfg.backbone.conv_channels = 16;
    cfg.backbone.d_model = 32;
    cfg.backbone.n_layers = 2;
    cfg.backbone.n_heads = 2;
    cfg.backbone.ff_mult = 2;
    cfg.heads.hidden_width = 64;
    return cfg;
}

struct LearnabilityRun {
    TrainResult result;
    double secs = 0.0;
};

struct SharedRuns {
    Dataset dataset;
    std::map<std::string, LearnabilityRun> runs;

    const LearnabilityRun& get(Architecture arch, Strategy strategy, std::uint64_t seed) {
        const std::string key = std::string(to_string(arch)) + "/" + to_string(strategy) +
                                "/" + std::to_string(seed);
        auto it = runs.find(key);
        if (it != runs.end()) return it->second;
        const auto start = std::chrono::steady_clock::now();
        LearnabilityRun run;
        run.result = train_run(learnability_config(arch, strategy), dataset, seed);
        run.secs = seconds_since(start);
        std::printf("  run %s: best UAR %.4f, high CCC %.4f, monitor %.4f, %.0f s\n",
                    key.c_str(), run.result.best_val.type_uar, run.result.best_val.high_ccc,
                    run.result.best_monitor, run.secs);
        std::fflush(stdout);
        return runs.emplace(key, std::move(run)).first->second;
    }
};

SharedRuns& shared_runs() {
    static SharedRuns* shared = [] {
        auto* s = new SharedRuns;
        GenConfig gen;
        gen.n = 4000;
        gen.seed = 11;
        s->dataset = generate_synthetic(gen);
        return s;
    }();
    return *shared;
}

}  // namespace

TEST(Acceptance, Criterion1_GradientCorrectness) {
    const auto start = std::chrono::steady_clock::now();
    const auto rows = run_gradcheck(7, 100);
    const double secs = seconds_since(start);
    bool all_pass = true;
    double worst = 0.0;
    std::string failed;
    for (const auto& r : rows) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.pass) {
            all_pass = false;
            failed += " " + r.name;
        }
    }
    const bool time_ok = secs < 120.0;
    report(1, "gradient correctness", all_pass && time_ok,
           std::to_string(rows.size()) + " ops, 100 trials each, worst rel err " +
               std::to_string(worst) + ", " + std::to_string(secs) + " s" + failed);
    EXPECT_TRUE(all_pass) << failed;
    EXPECT_LT(secs, 120.0);
}

TEST(Acceptance, Criterion2_FormulaOracles) {
    bool pass = true;

    // ccc: independent scalar evaluation of the example pair.
    {
        const std::vector<double> x = {1, 2, 3}, y = {2, 4, 6};
        double mx = 2, my = 4, vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < 3; ++i) {
            vx += (x[i] - mx) * (x[i] - mx) / 3;
            vy += (y[i] - my) * (y[i] - my) / 3;
            cov += (x[i] - mx) * (y[i] - my) / 3;
        }
        const double expected = 2 * cov / (vx + vy + (mx - my) * (mx - my));
        pass = pass && std::abs(ccc(x, y) - expected) < 1e-9;
        EXPECT_NEAR(ccc(x, y), expected, 1e-9);
        EXPECT_NEAR(expected, 8.0 / 22.0, 1e-12);
    }
    // pearson.
    EXPECT_NEAR(pearson({1, 2, 3}, {1, 3, 2}), 0.5, 1e-9);
    pass = pass && std::abs(pearson({1, 2, 3}, {1, 3, 2}) - 0.5) < 1e-9;

    // uar via brute-force confusion counting.
    EXPECT_NEAR(uar({0, 0, 1, 1}, {0, 1, 1, 1}, 2).value, 0.75, 1e-9);
    pass = pass && std::abs(uar({0, 0, 1, 1}, {0, 1, 1, 1}, 2).value - 0.75) < 1e-9;

    // dwa weights: K * softmax(r / T), scalar route.
    {
        DwaState s(2, 2.0);
        s.push_epoch({1.0, 1.0});
        s.push_epoch({1.0, 2.0});
        const auto w = dwa_weights(s);
        const double e0 = std::exp(0.5), e1 = std::exp(1.0);
        EXPECT_NEAR(w[0], 2 * e0 / (e0 + e1), 1e-9);
        EXPECT_NEAR(w[1], 2 * e1 / (e0 + e1), 1e-9);
        EXPECT_NEAR(w[0], 0.755081337596, 1e-9);
        pass = pass && std::abs(w[0] - 2 * e0 / (e0 + e1)) < 1e-9;
    }
    // rruw at alpha=(1, e), phi=1, losses (1, 1).
    {
        UncertaintyState u(2, 1.0);
        u.log_alpha[1].tensor.data()[0] = 1.0;
        std::vector<Tensor> losses = {Tensor::scalar(1.0, true), Tensor::scalar(1.0, true)};
        const double expected = 1.0 + std::exp(-2.0) + std::log(3.0);
        EXPECT_NEAR(rruw_loss(losses, u).item(), expected, 1e-9);
        EXPECT_NEAR(expected, 2.233947571905, 1e-9);
        pass = pass && std::abs(rruw_loss(losses, u).item() - expected) < 1e-9;

        // druw: same state plus dynamic weights from ratios (1, 2) at T=2.
        DwaState d(2, 2.0);
        d.push_epoch({1.0, 1.0});
        d.push_epoch({1.0, 2.0});
        const auto w = dwa_weights(d);
        const double druw_expected = expected + w[0] + w[1];
        EXPECT_NEAR(druw_loss(losses, u, d).item(), druw_expected, 1e-6);
        EXPECT_NEAR(druw_expected, 4.233947571905, 1e-6);
        pass = pass && std::abs(druw_loss(losses, u, d).item() - druw_expected) < 1e-6;
    }
    report(2, "formula oracles", pass, "ccc, pearson, uar, dwa, rruw, druw");
}

TEST(Acceptance, Criterion3_DwaContract) {
    bool pass = true;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(0.05, 3.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        DwaState s(4, 2.0);
        std::vector<double> a(4), b(4);
        for (int i = 0; i < 4; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
        }
        s.push_epoch(a);
        s.push_epoch(b);
        double sum = 0.0;
        for (double w : dwa_weights(s)) sum += w;
        worst = std::max(worst, std::abs(sum - 4.0));
    }
    pass = pass && worst < 1e-9;
    EXPECT_LT(worst, 1e-9);

    DwaState hot(3, 1e6);
    hot.push_epoch({1.0, 1.0, 1.0});
    hot.push_epoch({0.2, 2.9, 1.1});
    for (double w : dwa_weights(hot)) {
        pass = pass && std::abs(w - 1.0) < 1e-4;
        EXPECT_NEAR(w, 1.0, 1e-4);
    }

    DwaState empty(4, 2.0);
    std::vector<Tensor> losses = {Tensor::scalar(0.31, true), Tensor::scalar(1.7, true),
                                  Tensor::scalar(0.055, true), Tensor::scalar(2.21, true)};
    const bool bitwise = dwa_loss(losses, empty).item() == uniform_loss(losses).item();
    pass = pass && bitwise;
    EXPECT_TRUE(bitwise);

    report(3, "dwa contract", pass,
           "sum-to-K worst dev " + std::to_string(worst) + ", T->inf limit, no-history fallback");
}

TEST(Acceptance, Criterion4_RruwConstraintDynamics) {
    const double phi = 1.0;
    UncertaintyState u(4, phi);
    std::vector<Parameter> params(u.log_alpha.begin(), u.log_alpha.end());
    AdamWConfig ocfg;
    ocfg.weight_decay = 0.0;
    AdamW opt(params, {1e-3, 1e-3, 1e-3}, ocfg);
    auto residual = [&] {
        double s = 0.0;
        for (const auto& p : u.log_alpha) s += std::abs(p.tensor.item());
        return std::abs(phi - s);
    };
    const double initial = residual();
    for (int step = 0; step < 500; ++step) {
        std::vector<Tensor> losses;
        for (int i = 0; i < 4; ++i) losses.push_back(Tensor::scalar(1.5, true));
        rruw_loss(losses, u).backward();
        opt.step();
    }
    const double final_res = residual();
    const bool pass = final_res <= initial * 0.1;
    report(4, "rruw constraint dynamics", pass,
           "residual " + std::to_string(initial) + " -> " + std::to_string(final_res) +
               " after 500 alpha-only steps");
    EXPECT_LE(final_res, initial * 0.1);
}

TEST(Acceptance, Criterion5_DeskScaleLearnability) {
    SharedRuns& shared = shared_runs();
    bool pass = true;
    std::string detail;
    for (Architecture arch :
         {Architecture::vanilla, Architecture::chain, Architecture::branch}) {
        for (Strategy strategy : {Strategy::uniform, Strategy::dwa}) {
            const auto& run = shared.get(arch, strategy, 21);
            const double uar_best = run.result.best_val.type_uar;
            const double ccc_best = run.result.best_val.high_ccc;
            const bool run_ok = uar_best >= 0.60 && ccc_best >= 0.5 && run.secs < 600.0;
            pass = pass && run_ok;
            detail += std::string(to_string(arch)) + "+" + to_string(strategy) + " UAR " +
                      std::to_string(uar_best).substr(0, 5) + " CCC " +
                      std::to_string(ccc_best).substr(0, 5) + "; ";
            EXPECT_GE(uar_best, 0.60) << to_string(arch) << "+" << to_string(strategy);
            EXPECT_GE(ccc_best, 0.5) << to_string(arch) << "+" << to_string(strategy);
            EXPECT_LT(run.secs, 600.0) << to_string(arch) << "+" << to_string(strategy);
        }
    }
    report(5, "desk-scale learnability", pass, detail);
}

TEST(Acceptance, Criterion6_RelativeOrderingProbe) {
    SharedRuns& shared = shared_runs();
    double uniform_mean = 0.0, dwa_mean = 0.0;
    for (std::uint64_t seed : {21, 22, 23}) {
        uniform_mean += shared.get(Architecture::chain, Strategy::uniform, seed).result
                            .best_monitor / 3.0;
        dwa_mean += shared.get(Architecture::chain, Strategy::dwa, seed).result
                        .best_monitor / 3.0;
    }
    const bool ordering_holds = dwa_mean >= uniform_mean;
    // Informational probe: the report is the deliverable, the inequality is
    // not a gate on synthetic data.
    report(6, "relative ordering probe (soft)", true,
           "chain over 3 seeds: dwa mean monitor " + std::to_string(dwa_mean) +
               (ordering_holds ? " >= " : " < ") + "uniform mean monitor " +
               std::to_string(uniform_mean) +
               (ordering_holds ? "" : " [informational: ordering not preserved]"));
    SUCCEED();
}

TEST(Acceptance, Criterion7_TeacherForcingSemantics) {
    BackboneConfig bb;
    bb.conv_channels = 8;
    bb.d_model = 16;
    bb.n_layers = 2;
    bb.n_heads = 2;
    bb.ff_mult = 2;
    bb.sample_len = 512;
    bb.mask_prob = 0.0;

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::vector<std::vector<double>> waves(2, std::vector<double>(512));
    for (auto& w : waves)
        for (auto& v : w) v = unif(rng);
    BatchLabels truth;
    truth.type = {1, 5};
    truth.culture = {0, 2};
    truth.two = Tensor::from_data({2, 2}, {0.2, 0.8, 0.6, 0.4});
    truth.high = Tensor::filled({2, 10}, 0.5);

    auto build = [&] {
        std::mt19937_64 init(23);
        return Model(Architecture::chain, bb, HeadConfig{.hidden_width = 32}, task_specs(),
                     init);
    };
    Model base = build();
    auto& chain = dynamic_cast<ChainHeads&>(base.heads());

    (void)base.forward(waves, &truth, true);
    const bool train_source_ok = std::string(chain.last_conditioning_source()) == "truth";
    const HeadOutput eval_before = base.forward(waves, nullptr, false);
    const bool eval_source_ok = std::string(chain.last_conditioning_source()) == "prediction";
    const HeadOutput train_before = base.forward(waves, &truth, true);

    Model perturbed = build();
    for (auto& p : perturbed.heads().parameters())
        if (p.name.rfind("heads.chain.type", 0) == 0)
            for (auto& v : p.tensor.data()) v += 0.05;
    const HeadOutput eval_after = perturbed.forward(waves, nullptr, false);
    const HeadOutput train_after = perturbed.forward(waves, &truth, true);

    const bool eval_shifts = eval_before.two.data() != eval_after.two.data() &&
                             eval_before.culture.data() != eval_after.culture.data();
    const bool train_shielded = train_before.two.data() == train_after.two.data() &&
                                train_before.culture.data() == train_after.culture.data();
    const bool pass = train_source_ok && eval_source_ok && eval_shifts && train_shielded;
    report(7, "teacher forcing semantics", pass,
           std::string("train source=truth: ") + (train_source_ok ? "yes" : "no") +
               ", eval source=prediction: " + (eval_source_ok ? "yes" : "no") +
               ", perturbation alters eval only: " +
               (eval_shifts && train_shielded ? "yes" : "no"));
    EXPECT_TRUE(pass);
}

TEST(Acceptance, Criterion8_MaskingRate) {
    std::mt19937_64 rng(19);
    Tensor features = Tensor::filled({10000, 4}, 1.0);
    Tensor masked = time_feature_mask(features, 0.05, rng);
    std::vector<bool> col_masked(4, true);
    for (int c = 0; c < 4; ++c)
        for (int f = 0; f < 10000 && col_masked[c]; ++f)
            if (masked.at(f, c) != 0.0) col_masked[c] = false;
    int zero_rows = 0;
    for (int f = 0; f < 10000; ++f) {
        bool all_zero = true;
        for (int c = 0; c < 4; ++c)
            if (!col_masked[c] && masked.at(f, c) != 0.0) all_zero = false;
        if (all_zero) ++zero_rows;
    }
    const double rate = zero_rows / 10000.0;
    const bool pass = rate >= 0.04 && rate <= 0.06;
    report(8, "masking rate", pass,
           "empirical zeroed-row fraction " + std::to_string(rate) + " at p=0.05");
    EXPECT_GE(rate, 0.04);
    EXPECT_LE(rate, 0.06);
}

TEST(Acceptance, Criterion9_PlateauScheduler) {
    PlateauScheduler sched(5, 0.5);
    GroupRates rates{1e-5, 1e-3, 1e-3};
    int halvings = 0;
    for (int epoch = 1; epoch <= 6; ++epoch)
        if (sched.observe(0.42)) {
            rates.scale(0.5);
            ++halvings;
        }
    const bool pass = halvings == 1 && rates.backbone == 5e-6 && rates.head == 5e-4;
    report(9, "plateau scheduler", pass,
           "flat monitor for 6 epochs: " + std::to_string(halvings) +
               " halving(s), rates now 5e-06 / 0.0005");
    EXPECT_EQ(halvings, 1);
    EXPECT_DOUBLE_EQ(rates.backbone, 5e-6);
    EXPECT_DOUBLE_EQ(rates.head, 5e-4);
}

TEST(Acceptance, Criterion10_Determinism) {
    GenConfig gen;
    gen.n = 200;
    gen.seed = 29;
    gen.wave_len = 512;
    const Dataset ds = generate_synthetic(gen);

    RunConfig cfg;
    cfg.architecture = Architecture::chain;
    cfg.strategy = Strategy::druw;
    cfg.epochs = 3;
    cfg.backbone.conv_channels = 8;
    cfg.backbone.d_model = 16;
    cfg.backbone.n_layers = 2;
    cfg.backbone.n_heads = 2;
    cfg.backbone.ff_mult = 2;
    cfg.backbone.sample_len = 512;
    cfg.heads.hidden_width = 32;

    auto read_file = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
    };
    std::vector<std::string> logs, best_ckpts, last_ckpts;
    for (int rep = 0; rep < 2; ++rep) {
        const std::string dir =
            (fs::temp_directory_path() / ("vburst_determinism_" + std::to_string(rep)))
                .string();
        fs::remove_all(dir);
        fs::create_directories(dir);
        (void)train_run(cfg, ds, 31, dir);
        logs.push_back(read_file(dir + "/epoch_log.csv"));
        best_ckpts.push_back(read_file(dir + "/best.ckpt"));
        last_ckpts.push_back(read_file(dir + "/last.ckpt"));
        fs::remove_all(dir);
    }
    const bool logs_match = !logs[0].empty() && logs[0] == logs[1];
    const bool ckpts_match = !best_ckpts[0].empty() && best_ckpts[0] == best_ckpts[1] &&
                             !last_ckpts[0].empty() && last_ckpts[0] == last_ckpts[1];
    report(10, "determinism", logs_match && ckpts_match,
           std::string("epoch logs byte-identical: ") + (logs_match ? "yes" : "no") +
               ", checkpoints byte-identical: " + (ckpts_match ? "yes" : "no"));
    EXPECT_TRUE(logs_match);
    EXPECT_TRUE(ckpts_match);
}
