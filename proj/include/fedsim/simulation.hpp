#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/server.hpp"

namespace fedsim {

// Raised for bad or inconsistent experiment settings; the message names the
// offending key(s). The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataConfig {
    enum class Source { Synth, Idx } source = Source::Synth;
    // synth blobs
    int samples_per_class = 250;
    int test_samples_per_class = 250;
    double class_sep = 1.75;
    double noise_sigma = 0.5;
    // idx files
    std::string idx_images;
    std::string idx_labels;
    std::string idx_test_images;
    std::string idx_test_labels;
};

struct ExperimentConfig {
    int n_devices = 50;        // N
    int k_selected = 10;       // K, sampled per round with replacement
    int epochs = 5;            // E, in local minibatch steps
    int batch_size = 10;
    int rounds = 200;          // T
    double eta_l0 = 0.05;
    double gamma = 0.0;        // eta_l decays by (1 - gamma) each round
    double rho = 0.5;          // straggler fraction of the K slots
    int tau_max = 4;           // <= E - 1
    StrategyConfig strategy;   // variant + eta_g + mu
    ModelSpec model{ModelKind::Logistic, 20, 2, 32};
    DataConfig data;
    int classes_per_device = 2;  // P
    uint64_t master_seed = 42;
    std::optional<double> target_accuracy;  // set -> run_experiment may stop early
    int eval_every = 1;
    int threads = 1;  // > 1 enables per-slot concurrency inside a round
};

// Cross-field invariants (K <= N, tau_max <= E - 1, ...); throws ConfigError
// messages naming the offending keys.
void validate_config(const ExperimentConfig& cfg);

struct RoundRecord {
    int round = 0;
    Strategy strategy = Strategy::FedLga;
    double train_loss = 0.0;     // post-aggregation, union of this round's shards
    double test_loss = 0.0;
    double test_accuracy = 0.0;
    double rho_effective = 0.0;  // realized straggler fraction
    double eta_l = 0.0;
    double wall_ms = 0.0;
};

struct ExperimentEnv {
    Dataset train;
    Dataset test;
    std::vector<Shard> shards;
};

// Builds datasets and the device partition for a config (synth or idx source).
ExperimentEnv prepare_environment(const ExperimentConfig& cfg);

struct RoundResult {
    ParamVector w_next;
    RoundRecord record;
};

// One communication round: sample devices, plan staleness, train each slot
// (serially or on cfg.threads workers; results are bit-identical either way),
// correct stragglers if the strategy is fedlga, aggregate, evaluate.
RoundResult run_round(const ParamVector& w_t, const ExperimentConfig& cfg, const ExperimentEnv& env, int t,
                      bool evaluate = true);

struct ExperimentResult {
    ParamVector final_params;
    std::vector<RoundRecord> records;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// First round whose test accuracy reaches the target, if any.
std::optional<int> rounds_to_target(const std::vector<RoundRecord>& records, double target);

// eta_l0 * (1 - gamma)^t, computed by repeated multiplication so that
// lr(t + 1) == (1 - gamma) * lr(t) holds exactly in floating point.
double lr_schedule(double eta_l0, double gamma, int t);

}  // namespace fedsim
