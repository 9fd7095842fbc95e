#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/simulation.hpp"

namespace fedsim {

// One straggler-vs-oracle comparison. err_raw is the distance between the
// truncated and the true full-length delta; err_hat is the same distance after
// the Taylor correction.
struct ApproxTrial {
    double eta_l = 0.0;
    int tau = 0;
    double err_hat = 0.0;
    double err_raw = 0.0;
    double grad_norm = 0.0;  // full-shard gradient norm at w_t
    bool win = false;        // err_hat < err_raw
};

struct ApproxErrorReport {
    std::vector<ApproxTrial> trials;
    std::vector<double> eta_grid;
    std::vector<double> eta_mean_err;    // mean err_hat per eta point
    std::vector<int> tau_grid;
    std::vector<double> tau_mean_err;    // mean err_hat per tau point
    std::vector<double> tau_median_err;  // median err_hat per tau point
    double eta_exponent = 0.0;           // log-log slope of err_hat vs eta_l
    double tau_exponent = 0.0;           // log-log slope of err_hat vs tau
    double win_rate = 0.0;
    double empirical_m = 0.0;            // max err_hat / (eta^2 tau^2 |g|^2)
    int trials_per_cell = 0;
    int aborted_trials = 0;              // divergent training aborts a trial; it is counted, not scored
};

// Runs `trials` (>= 30, spread over a log grid of eta_l in [1e-3, 1e-1] and
// the tau grid {2..tau_max}) straggler trials against the continue_train
// oracle. The full-model estimate comes from genuine full workers sampled the
// same way a round would.
ApproxErrorReport approximation_error_study(const ExperimentConfig& cfg, int trials);

struct SamplingReport {
    int n_devices = 0;
    int k = 0;
    int trials = 0;
    std::vector<double> freq;   // per-device slot appearances / trials
    double expected = 0.0;      // K / N
    double max_abs_dev = 0.0;
    double sigma = 0.0;         // exact binomial std of freq: sqrt(K (1/N) (1 - 1/N) / trials)
    double threshold = 0.0;     // 3 sigma
    bool within_threshold = false;
};

// Frequency audit of the with-replacement device sampler.
SamplingReport sampling_study(int n_devices, int k, int trials, uint64_t seed);

struct DegeneracyResult {
    bool identical = false;
    int rounds_compared = 0;
    int first_divergent_round = -1;
    int first_divergent_coord = -1;
    double max_abs_diff = 0.0;
};

// Runs fedlga and fedavg side by side on cfg (strategy field overridden) and
// compares parameter trajectories bit-exactly. With rho = 0 and eta_g = 1 the
// two must be identical; any other setting is expected to diverge.
DegeneracyResult degeneracy_check(const ExperimentConfig& cfg);

}  // namespace fedsim
