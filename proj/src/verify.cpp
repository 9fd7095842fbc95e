#include "fedsim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fedsim {

namespace {

double least_squares_slope(const std::vector<double>& log_x, const std::vector<double>& log_y) {
    const size_t n = log_x.size();
    if (n < 2 || log_y.size() != n) throw std::invalid_argument("slope fit needs >= 2 points");
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += log_x[i];
        my += log_y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (log_x[i] - mx) * (log_y[i] - my);
        sxx += (log_x[i] - mx) * (log_x[i] - mx);
    }
    return sxy / sxx;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ApproxErrorReport approximation_error_study(const ExperimentConfig& cfg, int trials) {
    validate_config(cfg);
    if (trials < 30) throw std::invalid_argument("approximation_error_study: need >= 30 trials");
    if (cfg.tau_max < 2)
        throw std::invalid_argument("approximation_error_study: tau_max >= 2 required (no stragglers otherwise)");

    ExperimentEnv env = prepare_environment(cfg);

    ApproxErrorReport report;
    report.eta_grid = {1e-3, 3.1622776601683794e-3, 1e-2, 3.1622776601683794e-2, 1e-1};
    for (int tau = 2; tau <= cfg.tau_max; ++tau) report.tau_grid.push_back(tau);
    const int cells = static_cast<int>(report.eta_grid.size() * report.tau_grid.size());
    report.trials_per_cell = (trials + cells - 1) / cells;

    // as many full workers per trial as a default round would have
    const int n_full = std::max(1, cfg.k_selected - static_cast<int>(std::lround(cfg.rho * cfg.k_selected)));
    LocalObjective plain;

    uint64_t trial_id = 0;
    for (double eta : report.eta_grid) {
        for (int tau : report.tau_grid) {
            for (int rep = 0; rep < report.trials_per_cell; ++rep, ++trial_id) {
                ParamVector w_t = init_params(
                    cfg.model, derive_stream(cfg.master_seed, trial_id, 0, StreamPurpose::Trial).state);

                Rng pick_rng = derive_stream(cfg.master_seed, trial_id, 1, StreamPurpose::Trial);
                std::vector<int> picked = sample_devices(cfg.n_devices, 1 + n_full, pick_rng);
                const int straggler = picked[0];
                const Shard& shard = env.shards[straggler];
                const int epochs_run = cfg.epochs - tau + 1;

                try {
                    // straggler: E_i steps, snapshot, then the oracle continuation
                    // on the same stream gives the true full-length delta
                    BatchStream stream = make_batch_stream(
                        shard, cfg.batch_size, derive_stream(cfg.master_seed, trial_id, 2, StreamPurpose::Trial));
                    ParamVector w_partial = w_t;
                    sgd_steps(cfg.model, w_partial, stream, epochs_run, eta, plain, nullptr);
                    ParamVector w_full =
                        continue_train(cfg.model, w_partial, stream, cfg.epochs - epochs_run, eta);
                    ParamVector delta_partial = sub(w_partial, w_t);
                    ParamVector delta_true = sub(w_full, w_t);

                    LocalUpdate update;
                    update.device_id = straggler;
                    update.delta = delta_partial;
                    update.tau = tau;
                    update.epochs_run = epochs_run;
                    update.sample_count = shard.x.rows;

                    std::vector<LocalUpdate> full_updates(n_full);
                    std::vector<const LocalUpdate*> full_ptrs(n_full);
                    for (int j = 0; j < n_full; ++j) {
                        full_updates[j] = local_train(
                            cfg.model, picked[1 + j], w_t, env.shards[picked[1 + j]], cfg.epochs, eta,
                            cfg.batch_size, plain,
                            derive_stream(cfg.master_seed, trial_id, 10 + static_cast<uint64_t>(j),
                                          StreamPurpose::Trial),
                            cfg.epochs);
                        full_ptrs[j] = &full_updates[j];
                    }
                    bool used_fallback = false;
                    ParamVector w_hat = estimate_full_model(w_t, full_ptrs, &used_fallback);
                    ParamVector delta_hat = approximate_update(update, w_t, w_hat, eta, nullptr);

                    ApproxTrial trial;
                    trial.eta_l = eta;
                    trial.tau = tau;
                    trial.err_hat = l2_norm(sub(delta_true, delta_hat));
                    trial.err_raw = l2_norm(sub(delta_true, delta_partial));
                    trial.win = trial.err_hat < trial.err_raw;
                    trial.grad_norm = l2_norm(gradient(cfg.model, w_t, Batch{shard.x, shard.y}));
                    report.trials.push_back(trial);
                } catch (const std::runtime_error&) {
                    ++report.aborted_trials;  // divergence voids the trial, never the study
                }
            }
        }
    }
    if (report.trials.empty())
        throw std::runtime_error("approximation_error_study: every trial diverged; lower eta_l");

    // summary statistics
    int wins = 0;
    for (const ApproxTrial& t : report.trials)
        if (t.win) ++wins;
    report.win_rate = static_cast<double>(wins) / report.trials.size();

    std::vector<double> log_eta, log_eta_err;
    for (double eta : report.eta_grid) {
        double sum = 0.0;
        int count = 0;
        for (const ApproxTrial& t : report.trials)
            if (t.eta_l == eta) {
                sum += t.err_hat;
                ++count;
            }
        report.eta_mean_err.push_back(count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN());
        if (count > 0) {
            log_eta.push_back(std::log(eta));
            log_eta_err.push_back(std::log(sum / count));
        }
    }
    report.eta_exponent = log_eta.size() >= 2 ? least_squares_slope(log_eta, log_eta_err)
                                              : std::numeric_limits<double>::quiet_NaN();

    std::vector<double> log_tau, log_tau_err;
    for (int tau : report.tau_grid) {
        double sum = 0.0;
        std::vector<double> cell;
        for (const ApproxTrial& t : report.trials)
            if (t.tau == tau) {
                sum += t.err_hat;
                cell.push_back(t.err_hat);
            }
        report.tau_mean_err.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                   : sum / cell.size());
        report.tau_median_err.push_back(cell.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                     : median_of(cell));
        if (!cell.empty()) {
            log_tau.push_back(std::log(tau));
            log_tau_err.push_back(std::log(sum / cell.size()));
        }
    }
    report.tau_exponent = log_tau.size() >= 2 ? least_squares_slope(log_tau, log_tau_err)
                                              : std::numeric_limits<double>::quiet_NaN();

    report.empirical_m = 0.0;
    for (const ApproxTrial& t : report.trials) {
        if (t.grad_norm < 1e-12) continue;
        double bound_scale = t.eta_l * t.eta_l * t.tau * t.tau * t.grad_norm * t.grad_norm;
        report.empirical_m = std::max(report.empirical_m, t.err_hat / bound_scale);
    }
    return report;
}

SamplingReport sampling_study(int n_devices, int k, int trials, uint64_t seed) {
    if (n_devices < 1 || k < 1 || trials < 1)
        throw std::invalid_argument("sampling_study: n_devices, k, trials must all be >= 1");
    SamplingReport report;
    report.n_devices = n_devices;
    report.k = k;
    report.trials = trials;
    std::vector<long long> counts(n_devices, 0);
    for (int r = 0; r < trials; ++r) {
        Rng rng = derive_stream(seed, static_cast<uint64_t>(r), 0, StreamPurpose::DeviceSampling);
        for (int d : sample_devices(n_devices, k, rng)) ++counts[d];
    }
    report.expected = static_cast<double>(k) / n_devices;
    report.freq.resize(n_devices);
    report.max_abs_dev = 0.0;
    for (int d = 0; d < n_devices; ++d) {
        report.freq[d] = static_cast<double>(counts[d]) / trials;
        report.max_abs_dev = std::max(report.max_abs_dev, std::fabs(report.freq[d] - report.expected));
    }
    // slot appearances of one device over all trials are Binomial(trials*K, 1/N)
    const double p = 1.0 / n_devices;
    report.sigma = std::sqrt(k * p * (1.0 - p) / trials);
    report.threshold = 3.0 * report.sigma;
    report.within_threshold = report.max_abs_dev <= report.threshold;
    return report;
}

DegeneracyResult degeneracy_check(const ExperimentConfig& cfg) {
    ExperimentConfig cfg_lga = cfg;
    cfg_lga.strategy.variant = Strategy::FedLga;
    ExperimentConfig cfg_avg = cfg;
    cfg_avg.strategy.variant = Strategy::FedAvg;
    validate_config(cfg_lga);

    // strategy does not enter data or stream derivation, so one env serves both
    ExperimentEnv env = prepare_environment(cfg_lga);
    ParamVector w_lga =
        init_params(cfg_lga.model, derive_stream(cfg.master_seed, 0, 0, StreamPurpose::Init).state);
    ParamVector w_avg = w_lga;

    DegeneracyResult result;
    result.identical = true;
    for (int t = 0; t < cfg.rounds; ++t) {
        w_lga = run_round(w_lga, cfg_lga, env, t, false).w_next;
        w_avg = run_round(w_avg, cfg_avg, env, t, false).w_next;
        result.rounds_compared = t + 1;
        for (size_t i = 0; i < w_lga.size(); ++i) {
            double diff = std::fabs(w_lga[i] - w_avg[i]);
            result.max_abs_diff = std::max(result.max_abs_diff, diff);
            if (diff != 0.0 && result.first_divergent_round < 0) {
                result.identical = false;
                result.first_divergent_round = t;
                result.first_divergent_coord = static_cast<int>(i);
            }
        }
        if (!result.identical) break;  // first divergence located; stop early
    }
    return result;
}

}  // namespace fedsim
