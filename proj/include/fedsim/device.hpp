#pragma once

#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

// What a device sends back after a round: the parameter delta (final minus
// initial), its staleness tau = E - E_i + 1, and bookkeeping.
struct LocalUpdate {
    int device_id = -1;
    ParamVector delta;
    int tau = 1;
    int epochs_run = 0;   // E_i, in local steps
    int sample_count = 0;
};

struct LocalObjective {
    enum class Variant { Plain, Prox } variant = Variant::Plain;
    double mu = 0.0;  // proximal strength, Prox only
};

// Runs `steps` minibatch SGD steps in place. For the proximal objective the
// step gradient is grad(w) + mu * (w - *anchor). Throws if parameters go
// non-finite (no clipping anywhere in this codebase; divergence must be loud).
void sgd_steps(const ModelSpec& spec, ParamVector& w, BatchStream& stream, int steps, double eta_l,
               const LocalObjective& objective, const ParamVector* anchor);

// Full device round: epochs_to_run steps from w_t, delta = w_final - w_t,
// tau = expected_epochs - epochs_to_run + 1.
LocalUpdate local_train(const ModelSpec& spec, int device_id, const ParamVector& w_t, const Shard& shard,
                        int epochs_to_run, double eta_l, int batch_size, const LocalObjective& objective,
                        Rng rng, int expected_epochs);

// Oracle companion to local_train: resumes a partially trained model on the
// same batch stream. local_train(E) == local_train(k) then continue_train(E-k)
// bit-exactly, plain objective.
ParamVector continue_train(const ModelSpec& spec, const ParamVector& w_partial, BatchStream& stream,
                           int extra_steps, double eta_l);

}  // namespace fedsim
