#include "fedsim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fedsim/checkpoint.hpp"
#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/simulation.hpp"
#include "fedsim/verify.hpp"

namespace fedsim {

namespace {

ExperimentConfig base_config(const std::string& config_path) {
    if (config_path.empty()) {
        ExperimentConfig cfg;
        validate_config(cfg);
        return cfg;
    }
    return load_config_file(config_path);
}

std::string ensure_dir(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    return out_dir;
}

std::string run_summary_line(const std::vector<RoundRecord>& records,
                             const std::optional<double>& target) {
    if (records.empty()) return "no rounds were run";
    const RoundRecord& last = records.back();
    std::string line = "final round " + std::to_string(last.round) +
                       ": train_loss=" + format_double(last.train_loss) +
                       " test_loss=" + format_double(last.test_loss) +
                       " test_acc=" + format_double(last.test_accuracy);
    if (target) {
        std::optional<int> hit = rounds_to_target(records, *target);
        line += hit ? ", target " + format_double(*target) + " reached at round " + std::to_string(*hit)
                    : ", target " + format_double(*target) + " not reached";
    }
    return line;
}

int do_run(const std::string& config_path, const std::optional<uint64_t>& seed, const std::string& out_dir,
           const std::string& checkpoint_path) {
    ExperimentConfig cfg = base_config(config_path);
    if (seed) cfg.master_seed = *seed;

    ExperimentResult result = run_experiment(cfg);

    const std::string csv_path = ensure_dir(out_dir) + "/run_" + strategy_name(cfg.strategy.variant) +
                                 "_seed" + std::to_string(cfg.master_seed) + ".csv";
    write_metrics_csv(csv_path, result.records, cfg.master_seed);
    std::cout << "wrote " << csv_path << " (" << result.records.size() << " rounds)\n";
    if (!checkpoint_path.empty()) {
        write_checkpoint(result.final_params, checkpoint_path);
        std::cout << "wrote " << checkpoint_path << " (" << result.final_params.size() << " parameters)\n";
    }
    std::cout << run_summary_line(result.records, cfg.target_accuracy) << "\n";
    return 0;
}

struct SweepCell {
    ExperimentConfig cfg;
    std::string name;  // strategy_rho..._E..._K..._N..._seed...
};

std::vector<SweepCell> build_cells(const ExperimentConfig& base, std::vector<std::string> strategies,
                                   std::vector<double> rhos, std::vector<int> epochs_list,
                                   std::vector<int> ks, std::vector<int> ns,
                                   std::vector<uint64_t> seeds) {
    if (strategies.empty()) strategies = {strategy_name(base.strategy.variant)};
    if (rhos.empty()) rhos = {base.rho};
    if (epochs_list.empty()) epochs_list = {base.epochs};
    if (ks.empty()) ks = {base.k_selected};
    if (ns.empty()) ns = {base.n_devices};
    if (seeds.empty()) seeds = {base.master_seed};

    std::vector<SweepCell> cells;
    for (const std::string& strat : strategies)
        for (double rho : rhos)
            for (int epochs : epochs_list)
                for (int k : ks)
                    for (int n : ns)
                        for (uint64_t seed : seeds) {
                            SweepCell cell;
                            cell.cfg = base;
                            try {
                                cell.cfg.strategy.variant = strategy_from_name(strat);
                            } catch (const std::invalid_argument& e) {
                                throw ConfigError(std::string("config: key 'strategy': ") + e.what());
                            }
                            cell.cfg.rho = rho;
                            cell.cfg.epochs = epochs;
                            // an epoch override keeps tau_max legal but never raises it
                            cell.cfg.tau_max = std::min(base.tau_max, epochs - 1);
                            cell.cfg.k_selected = k;
                            cell.cfg.n_devices = n;
                            cell.cfg.master_seed = seed;
                            validate_config(cell.cfg);
                            cell.name = strat + "_rho" + format_double(rho) + "_E" + std::to_string(epochs) +
                                        "_K" + std::to_string(k) + "_N" + std::to_string(n) + "_seed" +
                                        std::to_string(seed);
                            cells.push_back(std::move(cell));
                        }
    return cells;
}

int do_sweep(const std::string& config_path, std::vector<std::string> strategies, std::vector<double> rhos,
             std::vector<int> epochs_list, std::vector<int> ks, std::vector<int> ns,
             std::vector<uint64_t> seeds, const std::string& out_dir) {
    ExperimentConfig base = base_config(config_path);
    // every cell is validated before any cell runs; a bad grid costs nothing
    std::vector<SweepCell> cells =
        build_cells(base, std::move(strategies), std::move(rhos), std::move(epochs_list), std::move(ks),
                    std::move(ns), std::move(seeds));
    ensure_dir(out_dir);

    std::string summary = "strategy,rho,epochs,k_selected,n_devices,seed,rounds_to_target,final_test_acc\n";
    for (const SweepCell& cell : cells) {
        ExperimentResult result = run_experiment(cell.cfg);
        const std::string csv_path = out_dir + "/sweep_" + cell.name + ".csv";
        write_metrics_csv(csv_path, result.records, cell.cfg.master_seed);

        int to_target = -1;
        if (cell.cfg.target_accuracy) {
            std::optional<int> hit = rounds_to_target(result.records, *cell.cfg.target_accuracy);
            if (hit) to_target = *hit;
        }
        const double final_acc = result.records.empty() ? 0.0 : result.records.back().test_accuracy;
        summary += strategy_name(cell.cfg.strategy.variant);
        summary += ',' + format_double(cell.cfg.rho) + ',' + std::to_string(cell.cfg.epochs) + ',' +
                   std::to_string(cell.cfg.k_selected) + ',' + std::to_string(cell.cfg.n_devices) + ',' +
                   std::to_string(cell.cfg.master_seed) + ',' + std::to_string(to_target) + ',' +
                   format_double(final_acc) + '\n';
        std::cout << cell.name << ": " << run_summary_line(result.records, cell.cfg.target_accuracy) << "\n";
    }

    const std::string summary_path = out_dir + "/summary.csv";
    std::ofstream out(summary_path, std::ios::trunc);
    if (!out) throw std::runtime_error("sweep: cannot open '" + summary_path + "'");
    out << summary;
    std::cout << "wrote " << cells.size() << " run files and " << summary_path << "\n";
    return 0;
}

int do_check(const std::string& config_path, const std::string& suite, const std::string& out_path) {
    ExperimentConfig cfg = base_config(config_path);
    if (!out_path.empty()) std::ofstream(out_path, std::ios::trunc);  // fresh report file

    bool all_pass = true;
    auto report = [&](const std::string& line) {
        if (!out_path.empty()) append_line(out_path, line);
    };

    if (suite == "all" || suite == "degeneracy") {
        ExperimentConfig dcfg = cfg;
        dcfg.rho = 0.0;
        dcfg.strategy.eta_g = 1.0;
        dcfg.rounds = std::min(cfg.rounds, 50);
        DegeneracyResult result = degeneracy_check(dcfg);
        report(degeneracy_jsonl(result));
        if (result.identical) {
            std::cout << "degeneracy: PASS (" << result.rounds_compared << " rounds bit-identical)\n";
        } else {
            all_pass = false;
            std::cout << "degeneracy: FAIL (diverged at round " << result.first_divergent_round << ", coord "
                      << result.first_divergent_coord << ", max |diff| " << format_double(result.max_abs_diff)
                      << ")\n";
        }
    }
    if (suite == "all" || suite == "sampling") {
        SamplingReport result = sampling_study(cfg.n_devices, cfg.k_selected, 100000, cfg.master_seed);
        report(sampling_report_jsonl(result));
        std::cout << "sampling: " << (result.within_threshold ? "PASS" : "FAIL") << " (max |freq - "
                  << format_double(result.expected) << "| = " << format_double(result.max_abs_dev)
                  << ", 3-sigma threshold " << format_double(result.threshold) << ")\n";
        if (!result.within_threshold) all_pass = false;
    }
    if (suite == "all" || suite == "approx") {
        ApproxErrorReport result = approximation_error_study(cfg, 200);
        report(approx_report_jsonl(result));
        const bool pass = result.win_rate > 0.5;
        std::cout << "approx: " << (pass ? "PASS" : "FAIL") << " (win_rate " << format_double(result.win_rate)
                  << " over " << result.trials.size() << " trials; eta exponent "
                  << format_double(result.eta_exponent) << ", tau exponent "
                  << format_double(result.tau_exponent) << ", empirical M "
                  << format_double(result.empirical_m) << ")\n";
        if (!pass) all_pass = false;
    }
    return all_pass ? 0 : 1;
}

int do_partition_info(const std::string& config_path) {
    ExperimentConfig cfg = base_config(config_path);
    ExperimentEnv env = prepare_environment(cfg);
    std::cout << "partition: N=" << cfg.n_devices << " devices, P=" << cfg.classes_per_device
              << " classes per device, C=" << env.train.num_classes << " classes, "
              << env.train.x.rows << " samples\n";
    int total = 0;
    for (const Shard& shard : env.shards) {
        std::cout << "device " << shard.device_id << ": " << shard.x.rows << " samples, classes";
        for (int c : shard.class_set) std::cout << ' ' << c;
        std::cout << "\n";
        total += shard.x.rows;
    }
    std::cout << "total " << total << " samples across " << env.shards.size() << " shards\n";
    return 0;
}

}  // namespace

int cli_run(std::vector<std::string> args) {
    CLI::App app{"Deterministic simulator of federated learning with straggling devices"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", checkpoint_path, suite = "all", check_out;
    std::optional<uint64_t> seed;
    std::vector<std::string> strategies;
    std::vector<double> rhos;
    std::vector<int> epochs_list, ks, ns;
    std::vector<uint64_t> seeds;

    CLI::App* run = app.add_subcommand("run", "Run one experiment and write a metrics CSV");
    run->add_option("--config", config_path, "Config file (defaults apply when omitted)");
    run->add_option("--seed", seed, "Override master_seed");
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();
    run->add_option("--checkpoint", checkpoint_path, "Also write final parameters here");

    CLI::App* sweep = app.add_subcommand("sweep", "Cross-product of rho/epochs/K/N/strategy/seed values");
    sweep->add_option("--config", config_path, "Base config file");
    sweep->add_option("--strategy", strategies, "Strategy names")->delimiter(',');
    sweep->add_option("--rho", rhos, "Straggler fractions")->delimiter(',');
    sweep->add_option("--epochs", epochs_list, "Local step counts")->delimiter(',');
    sweep->add_option("--k", ks, "Devices per round")->delimiter(',');
    sweep->add_option("--n", ns, "Device populations")->delimiter(',');
    sweep->add_option("--seed", seeds, "Master seeds")->delimiter(',');
    sweep->add_option("--out", out_dir, "Output directory")->capture_default_str();

    CLI::App* check = app.add_subcommand("check", "Run verification suites; nonzero exit on failure");
    check->add_option("--suite", suite, "all|degeneracy|sampling|approx")
        ->check(CLI::IsMember({"all", "degeneracy", "sampling", "approx"}))
        ->capture_default_str();
    check->add_option("--config", config_path, "Config file the suites run against");
    check->add_option("--out", check_out, "Append one JSON line per suite to this file");

    CLI::App* pinfo = app.add_subcommand("partition-info", "Print shard sizes and class sets");
    pinfo->add_option("--config", config_path, "Config file");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
        if (run->parsed()) return do_run(config_path, seed, out_dir, checkpoint_path);
        if (sweep->parsed()) return do_sweep(config_path, strategies, rhos, epochs_list, ks, ns, seeds, out_dir);
        if (check->parsed()) return do_check(config_path, suite, check_out);
        if (pinfo->parsed()) return do_partition_info(config_path);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedsim
