#include "fedsim/device.hpp"

#include <stdexcept>
#include <string>

namespace fedsim {

void sgd_steps(const ModelSpec& spec, ParamVector& w, BatchStream& stream, int steps, double eta_l,
               const LocalObjective& objective, const ParamVector* anchor) {
    if (steps < 0) throw std::invalid_argument("sgd_steps: negative step count");
    if (!(eta_l > 0.0)) throw std::invalid_argument("sgd_steps: eta_l must be positive");
    if (objective.variant == LocalObjective::Variant::Prox && anchor == nullptr)
        throw std::invalid_argument("sgd_steps: proximal objective needs an anchor");
    for (int s = 0; s < steps; ++s) {
        Batch batch = next_batch(stream);
        ParamVector g = gradient(spec, w, batch);
        if (objective.variant == LocalObjective::Variant::Prox)
            axpy(objective.mu, sub(w, *anchor), g);
        axpy(-eta_l, g, w);
        if (!all_finite(w))
            throw std::runtime_error("sgd_steps: parameters went non-finite at local step " +
                                     std::to_string(s + 1) + " (eta_l=" + std::to_string(eta_l) + ")");
    }
}

LocalUpdate local_train(const ModelSpec& spec, int device_id, const ParamVector& w_t, const Shard& shard,
                        int epochs_to_run, double eta_l, int batch_size, const LocalObjective& objective,
                        Rng rng, int expected_epochs) {
    if (expected_epochs < 1) throw std::invalid_argument("local_train: expected_epochs must be >= 1");
    if (epochs_to_run < 1 || epochs_to_run > expected_epochs)
        throw std::invalid_argument("local_train: epochs_to_run " + std::to_string(epochs_to_run) +
                                    " outside [1, " + std::to_string(expected_epochs) + "]");
    if (shard.x.rows == 0)
        throw std::invalid_argument("local_train: device " + std::to_string(device_id) + " has an empty shard");

    BatchStream stream = make_batch_stream(shard, batch_size, rng);
    ParamVector w = w_t;
    try {
        sgd_steps(spec, w, stream, epochs_to_run, eta_l, objective, &w_t);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("local_train: device " + std::to_string(device_id) + ": " + e.what());
    }

    LocalUpdate update;
    update.device_id = device_id;
    update.delta = sub(w, w_t);
    update.epochs_run = epochs_to_run;
    update.tau = expected_epochs - epochs_to_run + 1;
    update.sample_count = shard.x.rows;
    return update;
}

ParamVector continue_train(const ModelSpec& spec, const ParamVector& w_partial, BatchStream& stream,
                           int extra_steps, double eta_l) {
    ParamVector w = w_partial;
    LocalObjective plain;
    sgd_steps(spec, w, stream, extra_steps, eta_l, plain, nullptr);
    return w;
}

}  // namespace fedsim
