#pragma once

#include <string>
#include <vector>

#include "fedsim/device.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class Strategy { FedLga, FedAvg, FedProx, FedNova };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);  // throws on unknown name

struct StrategyConfig {
    Strategy variant = Strategy::FedLga;
    double eta_g = 1.0;  // server step size (fedlga / fednova; fedavg and fedprox fix it at 1)
    double mu = 1.0;     // proximal strength (fedprox)
};

// Per-round schedule: which devices run (slot k may repeat a device) and each
// slot's staleness tau. tau == 1 means a full worker; stragglers draw tau
// uniformly from {2, ..., tau_max}.
struct RoundPlan {
    std::vector<int> selected;
    std::vector<int> tau;
    int n_stragglers = 0;
};

// Per-corrected-device numbers surfaced for diagnostics.
struct ApproxDiagnostics {
    int device_id = -1;
    double delta_norm = 0.0;
    double correction_norm = 0.0;
    bool used_fallback = false;  // full-model estimate fell back to w_t (no full workers)
};

// K uniform draws with replacement.
std::vector<int> sample_devices(int n_devices, int k, Rng& rng);

// round(rho * K) slots become stragglers (distinct slots, chosen uniformly).
RoundPlan plan_round(std::vector<int> selected, double rho, int tau_max, Rng& rng);

// w_hat = w_t + mean(delta) over full-worker updates; empty list falls back to
// w_t and reports it through *used_fallback.
ParamVector estimate_full_model(const ParamVector& w_t, const std::vector<const LocalUpdate*>& full_updates,
                                bool* used_fallback);

// (g g^T) v computed as g * <g, v>; never materializes the outer product.
ParamVector hessian_vector_apply(const ParamVector& g, const ParamVector& v);

// Taylor-corrects a straggler update:
//   g         = -delta / (eta_l * E_i)    (average realized gradient)
//   delta_hat = delta + (g g^T)(w_hat - w_t - delta)
// Requires tau > 1 (full workers must not be corrected) and eta_l != 0.
ParamVector approximate_update(const LocalUpdate& update, const ParamVector& w_t, const ParamVector& w_hat,
                               double eta_l, ApproxDiagnostics* diag);

// Combines effective deltas (corrected or raw, canonical slot order) into the
// next global model. fedlga: w + (eta_g/K) * sum; fedavg/fedprox: w + (1/K) *
// sum; fednova: w + (eta_g * tau_eff / K) * sum(delta_i / E_i) with tau_eff =
// mean E_i.
ParamVector aggregate(const StrategyConfig& strategy, const ParamVector& w_t,
                      const std::vector<LocalUpdate>& updates,
                      const std::vector<const ParamVector*>& effective_deltas);

}  // namespace fedsim
