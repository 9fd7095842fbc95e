#include "fedsim/server.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedsim {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::FedLga: return "fedlga";
        case Strategy::FedAvg: return "fedavg";
        case Strategy::FedProx: return "fedprox";
        case Strategy::FedNova: return "fednova";
    }
    throw std::logic_error("strategy_name: unreachable");
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "fedlga") return Strategy::FedLga;
    if (name == "fedavg") return Strategy::FedAvg;
    if (name == "fedprox") return Strategy::FedProx;
    if (name == "fednova") return Strategy::FedNova;
    throw std::invalid_argument("unknown strategy '" + name + "' (expected fedlga|fedavg|fedprox|fednova)");
}

std::vector<int> sample_devices(int n_devices, int k, Rng& rng) {
    if (n_devices < 1) throw std::invalid_argument("sample_devices: n_devices must be >= 1");
    if (k < 1) throw std::invalid_argument("sample_devices: k must be >= 1");
    std::vector<int> selected(k);
    for (int i = 0; i < k; ++i) selected[i] = static_cast<int>(rng.below(static_cast<uint64_t>(n_devices)));
    return selected;
}

RoundPlan plan_round(std::vector<int> selected, double rho, int tau_max, Rng& rng) {
    const int k = static_cast<int>(selected.size());
    if (k == 0) throw std::invalid_argument("plan_round: no selected devices");
    if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("plan_round: rho must be in [0, 1]");
    if (tau_max < 1) throw std::invalid_argument("plan_round: tau_max must be >= 1");
    if (rho > 0.0 && tau_max < 2)
        throw std::invalid_argument("plan_round: rho > 0 requires tau_max >= 2");

    RoundPlan plan;
    plan.selected = std::move(selected);
    plan.tau.assign(k, 1);
    plan.n_stragglers = static_cast<int>(std::lround(rho * k));

    // choose n_stragglers distinct slots: partial Fisher-Yates over slot ids
    std::vector<int> slots(k);
    std::iota(slots.begin(), slots.end(), 0);
    for (int i = 0; i < plan.n_stragglers; ++i) {
        int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(k - i)));
        std::swap(slots[i], slots[j]);
        plan.tau[slots[i]] = rng.uniform_int(2, tau_max);
    }
    return plan;
}

ParamVector estimate_full_model(const ParamVector& w_t, const std::vector<const LocalUpdate*>& full_updates,
                                bool* used_fallback) {
    if (used_fallback) *used_fallback = full_updates.empty();
    if (full_updates.empty()) return w_t;  // nothing to average; callers see the flag
    ParamVector w_hat = w_t;
    const double inv = 1.0 / static_cast<double>(full_updates.size());
    for (const LocalUpdate* u : full_updates) {
        if (u->tau != 1)
            throw std::invalid_argument("estimate_full_model: update with tau=" + std::to_string(u->tau) +
                                        " is not a full worker");
        if (u->delta.size() != w_t.size())
            throw std::invalid_argument("estimate_full_model: delta dim mismatch");
    }
    for (const LocalUpdate* u : full_updates) axpy(inv, u->delta, w_hat);
    return w_hat;
}

ParamVector hessian_vector_apply(const ParamVector& g, const ParamVector& v) {
    if (g.size() != v.size()) throw std::invalid_argument("hessian_vector_apply: dim mismatch");
    const double gv = dot(g, v);
    ParamVector out(g.size());
    for (size_t i = 0; i < g.size(); ++i) out[i] = g[i] * gv;
    return out;
}

ParamVector approximate_update(const LocalUpdate& update, const ParamVector& w_t, const ParamVector& w_hat,
                               double eta_l, ApproxDiagnostics* diag) {
    if (update.tau <= 1)
        throw std::invalid_argument("approximate_update: device " + std::to_string(update.device_id) +
                                    " is a full worker (tau=1); nothing to correct");
    if (eta_l == 0.0) throw std::invalid_argument("approximate_update: eta_l must be nonzero");
    if (update.epochs_run < 1) throw std::invalid_argument("approximate_update: epochs_run must be >= 1");
    if (update.delta.size() != w_t.size() || w_hat.size() != w_t.size())
        throw std::invalid_argument("approximate_update: dim mismatch");

    // average realized gradient over the E_i steps the device did run
    ParamVector g(update.delta.size());
    const double scale = -1.0 / (eta_l * update.epochs_run);
    for (size_t i = 0; i < g.size(); ++i) g[i] = scale * update.delta[i];

    // displacement from the device's stopping point to the estimated full run
    ParamVector disp(w_t.size());
    for (size_t i = 0; i < disp.size(); ++i) disp[i] = w_hat[i] - (w_t[i] + update.delta[i]);

    ParamVector correction = hessian_vector_apply(g, disp);
    ParamVector delta_hat = update.delta;
    axpy(1.0, correction, delta_hat);

    if (diag) {
        diag->device_id = update.device_id;
        diag->delta_norm = l2_norm(update.delta);
        diag->correction_norm = l2_norm(correction);
    }
    if (!all_finite(delta_hat))
        throw std::runtime_error("approximate_update: corrected delta non-finite for device " +
                                 std::to_string(update.device_id));
    return delta_hat;
}

ParamVector aggregate(const StrategyConfig& strategy, const ParamVector& w_t,
                      const std::vector<LocalUpdate>& updates,
                      const std::vector<const ParamVector*>& effective_deltas) {
    const size_t k = updates.size();
    if (k == 0) throw std::invalid_argument("aggregate: no updates");
    if (effective_deltas.size() != k) throw std::invalid_argument("aggregate: slot count mismatch");
    if (!(strategy.eta_g > 0.0)) throw std::invalid_argument("aggregate: eta_g must be positive");
    for (const ParamVector* d : effective_deltas)
        if (!d || d->size() != w_t.size()) throw std::invalid_argument("aggregate: delta dim mismatch");

    // Per-slot coefficients, then one accumulation pass in slot order. fedavg
    // and fedlga(eta_g=1) produce the identical coefficient 1/K, which keeps
    // the degenerate case bit-exact.
    std::vector<double> coeff(k);
    switch (strategy.variant) {
        case Strategy::FedLga:
            for (size_t i = 0; i < k; ++i) coeff[i] = strategy.eta_g / static_cast<double>(k);
            break;
        case Strategy::FedAvg:
        case Strategy::FedProx:
            for (size_t i = 0; i < k; ++i) coeff[i] = 1.0 / static_cast<double>(k);
            break;
        case Strategy::FedNova: {
            double tau_eff = 0.0;
            for (const LocalUpdate& u : updates) {
                if (u.epochs_run < 1) throw std::invalid_argument("aggregate: epochs_run must be >= 1");
                tau_eff += u.epochs_run;
            }
            tau_eff /= static_cast<double>(k);
            for (size_t i = 0; i < k; ++i)
                coeff[i] = strategy.eta_g * tau_eff / (static_cast<double>(k) * updates[i].epochs_run);
            break;
        }
    }

    ParamVector w_next = w_t;
    for (size_t i = 0; i < k; ++i) axpy(coeff[i], *effective_deltas[i], w_next);
    if (!all_finite(w_next))
        throw std::runtime_error("aggregate: " + strategy_name(strategy.variant) +
                                 " produced non-finite parameters");
    return w_next;
}

}  // namespace fedsim
