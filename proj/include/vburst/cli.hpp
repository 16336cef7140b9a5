#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vburst/config.hpp"
#include "vburst/data.hpp"
#include "vburst/gradcheck.hpp"
#include "vburst/trainer.hpp"

namespace vburst {

namespace cli_detail {

namespace fs = std::filesystem;

inline std::string default_out_root() {
    const char* env = std::getenv("VBURST_OUT");
    return env && *env ? env : "vburst_out";
}

inline Config load_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
    Config cfg = Config::defaults();
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& kv : overrides) cfg.apply_override(kv);
    return cfg;
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "'");
}

inline Dataset load_data_dir(const std::string& dir) {
    const std::string manifest = dir + "/manifest.csv";
    const std::string signals = dir + "/signals.bin";
    if (!fs::exists(manifest)) throw ConfigError("missing file '" + manifest + "'");
    if (!fs::exists(signals)) throw ConfigError("missing file '" + signals + "'");
    return read_dataset(manifest, signals);
}

inline int cmd_generate(const std::string& config_path, std::string out_dir,
                        const std::vector<std::string>& overrides) {
    Config cfg = load_config(config_path, overrides);
    if (out_dir.empty()) out_dir = default_out_root() + "/data";
    ensure_dir(out_dir);

    GenConfig gen;
    gen.n = cfg.get_int("data.n");
    gen.seed = cfg.get_u64("data.seed");
    gen.class_count = cfg.get_int("data.classes");
    gen.emo_dim = cfg.get_int("data.emo_dims");
    gen.cultures = cfg.get_int("data.cultures");
    gen.wave_len = cfg.get_int("data.wave_len");
    gen.train_frac = cfg.get_double("data.train_frac");
    gen.val_frac = cfg.get_double("data.val_frac");
    Dataset ds = generate_synthetic(gen);
    write_manifest(out_dir + "/manifest.csv", ds);
    write_signals(out_dir + "/signals.bin", ds);
    cfg.write_resolved(out_dir + "/config.resolved");

    nlohmann::json summary;
    summary["count"] = ds.samples.size();
    summary["wave_len"] = gen.wave_len;
    for (const char* split : {"train", "val", "test"})
        summary["splits"][split] = ds.split_indices(split).size();
    std::vector<int> type_counts(gen.class_count, 0), culture_counts(gen.cultures, 0);
    std::vector<double> high_min(gen.emo_dim, 1.0), high_max(gen.emo_dim, 0.0),
        high_mean(gen.emo_dim, 0.0);
    double a_min = 1.0, a_max = 0.0, v_min = 1.0, v_max = 0.0;
    for (const auto& s : ds.samples) {
        ++type_counts[s.type_label];
        ++culture_counts[s.culture];
        for (int d = 0; d < gen.emo_dim; ++d) {
            high_min[d] = std::min(high_min[d], s.high[d]);
            high_max[d] = std::max(high_max[d], s.high[d]);
            high_mean[d] += s.high[d] / ds.samples.size();
        }
        a_min = std::min(a_min, s.arousal);
        a_max = std::max(a_max, s.arousal);
        v_min = std::min(v_min, s.valence);
        v_max = std::max(v_max, s.valence);
    }
    summary["type_counts"] = type_counts;
    summary["culture_counts"] = culture_counts;
    summary["high"] = {{"min", high_min}, {"max", high_max}, {"mean", high_mean}};
    summary["arousal"] = {{"min", a_min}, {"max", a_max}};
    summary["valence"] = {{"min", v_min}, {"max", v_max}};
    std::ofstream js(out_dir + "/summary.json");
    js << summary.dump(2) << "\n";

    std::cout << "wrote " << ds.samples.size() << " samples to " << out_dir << "\n";
    return 0;
}

inline void print_metrics_table(std::ostream& os, const std::string& label,
                                const EvalMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-12s %8s %8s %8s %8s %8s %8s %8s\n", label.c_str(),
                  "UAR", "CCC", "ρ", "CCC", "ρ", "CCC", "ρ");
    os << "             |  type   |       two        |       high       |     culture\n" << buf;
    std::snprintf(buf, sizeof(buf), "%-12s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", "",
                  m.type_uar, m.two_ccc, m.two_rho, m.high_ccc, m.high_rho, m.culture_ccc,
                  m.culture_rho);
    os << buf;
}

inline std::string metrics_csv_header() {
    return "type_uar,two_ccc,two_rho,high_ccc,high_rho,culture_ccc,culture_rho";
}

inline std::string metrics_csv_row(const EvalMetrics& m) {
    std::ostringstream os;
    os << detail::fmt(m.type_uar) << ',' << detail::fmt(m.two_ccc) << ','
       << detail::fmt(m.two_rho) << ',' << detail::fmt(m.high_ccc) << ','
       << detail::fmt(m.high_rho) << ',' << detail::fmt(m.culture_ccc) << ','
       << detail::fmt(m.culture_rho);
    return os.str();
}

inline int cmd_train(const std::string& config_path, const std::string& data_dir,
                     std::string out_dir, const std::vector<std::string>& overrides) {
    Config cfg = load_config(config_path, overrides);
    RunConfig rc = run_config_from(cfg);
    Dataset ds = load_data_dir(data_dir);
    if (out_dir.empty()) out_dir = default_out_root() + "/train";
    ensure_dir(out_dir);
    to_config(rc).write_resolved(out_dir + "/config.resolved");

    MultiSeedReport report = multi_seed(rc, ds, out_dir);

    std::ofstream csv(out_dir + "/report.csv");
    csv << "seed," << metrics_csv_header() << ",monitor\n";
    for (const auto& run : report.runs)
        csv << run.seed << ',' << metrics_csv_row(run.best) << ','
            << detail::fmt(run.best_monitor) << "\n";
    csv << "best," << metrics_csv_row(report.best_of) << ",\n";

    for (const auto& run : report.runs)
        print_metrics_table(std::cout, "seed " + std::to_string(run.seed), run.best);
    print_metrics_table(std::cout, "best-of", report.best_of);
    std::cout << "run artifacts in " << out_dir << "\n";
    return 0;
}

inline int cmd_evaluate(const std::string& checkpoint, const std::string& data_dir,
                        const std::string& split, std::string out_dir) {
    if (!fs::exists(checkpoint)) throw ConfigError("missing file '" + checkpoint + "'");
    Dataset ds = load_data_dir(data_dir);
    EvalMetrics m = evaluate_checkpoint(checkpoint, ds, split);
    print_metrics_table(std::cout, split, m);
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        std::ofstream csv(out_dir + "/metrics.csv");
        csv << metrics_csv_header() << "\n" << metrics_csv_row(m) << "\n";
    }
    return 0;
}

inline int cmd_gradcheck(std::uint64_t seed, int trials) {
    const auto rows = run_gradcheck(seed, trials);
    bool all_pass = true;
    std::printf("%-24s %12s  %s\n", "op", "max_rel_err", "result");
    for (const auto& r : rows) {
        std::printf("%-24s %12.3e  %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "pass" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    std::printf("%zu ops checked, %d trials each\n", rows.size(), trials);
    return all_pass ? 0 : 1;
}

inline int cmd_weight_trace(const std::string& run_dir, std::string out_file) {
    const std::string log_path = run_dir + "/epoch_log.csv";
    const std::string cfg_path = run_dir + "/config.resolved";
    if (!fs::exists(log_path)) throw ConfigError("missing file '" + log_path + "'");
    if (!fs::exists(cfg_path)) throw ConfigError("missing file '" + cfg_path + "'");
    Config cfg = Config::defaults();
    cfg.load_file(cfg_path);
    const std::string strategy = cfg.get("trainer.strategy");

    std::ifstream in(log_path);
    std::string line;
    check(static_cast<bool>(std::getline(in, line)), "weight-trace: empty epoch log");
    check(line == epoch_log_header(), "weight-trace: unexpected epoch log header");

    if (out_file.empty()) out_file = run_dir + "/weight_trace.csv";
    std::ofstream out(out_file);
    out << "epoch,strategy,task,lambda,alpha\n";
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) f.push_back(field);
        f.resize(8);
        // Uniform weighting has no recorded lambda; its weight is fixed at 1.
        const std::string lambda = f[6].empty() ? (strategy == "uniform" ? "1" : "") : f[6];
        out << f[0] << ',' << strategy << ',' << f[1] << ',' << lambda << ',' << f[7] << "\n";
    }
    std::cout << "wrote " << out_file << "\n";
    return 0;
}

}  // namespace cli_detail

/// Command-line entry point; returns the process exit status.
/// 0 success, 1 internal failure, 2 configuration/usage error.
inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"vocal-burst multi-task learning engine"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, checkpoint, split = "val", run_dir, out_file;
    std::vector<std::string> overrides;
    std::uint64_t gc_seed = 7;
    int gc_trials = 100;

    auto* gen = app.add_subcommand("generate-data", "write a synthetic dataset");
    gen->add_option("--config", config_path, "config file (INI)");
    gen->add_option("--out", out_dir, "output directory");
    gen->add_option("overrides", overrides, "key=value config overrides");

    auto* train = app.add_subcommand("train", "train one or more seeds");
    train->add_option("--config", config_path, "config file (INI)");
    train->add_option("--data", data_dir, "directory with manifest.csv and signals.bin")
        ->required();
    train->add_option("--out", out_dir, "output directory");
    train->add_option("overrides", overrides, "key=value config overrides");

    auto* eval = app.add_subcommand("evaluate", "score a checkpoint on a split");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval->add_option("--data", data_dir, "directory with manifest.csv and signals.bin")
        ->required();
    eval->add_option("--split", split, "train | val | test");
    eval->add_option("--out", out_dir, "directory for metrics.csv");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all gradients");
    gc->add_option("--seed", gc_seed, "rng seed");
    gc->add_option("--trials", gc_trials, "trials per op");

    auto* trace = app.add_subcommand("weight-trace", "export per-epoch weight trajectories");
    trace->add_option("--run", run_dir, "training run directory")->required();
    trace->add_option("--out", out_file, "output csv path");

    try {
        app.parse(argc, argv);
        if (gen->parsed())
            return cli_detail::cmd_generate(config_path, out_dir, overrides);
        if (train->parsed()) return cli_detail::cmd_train(config_path, data_dir, out_dir, overrides);
        if (eval->parsed()) return cli_detail::cmd_evaluate(checkpoint, data_dir, split, out_dir);
        if (gc->parsed()) return cli_detail::cmd_gradcheck(gc_seed, gc_trials);
        if (trace->parsed()) return cli_detail::cmd_weight_trace(run_dir, out_file);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace vburst
