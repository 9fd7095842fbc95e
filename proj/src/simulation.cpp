#include "fedsim/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>

namespace fedsim {

void validate_config(const ExperimentConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (cfg.n_devices < 1) fail("n_devices must be >= 1");
    if (cfg.k_selected < 1) fail("k_selected must be >= 1");
    if (cfg.k_selected > cfg.n_devices)
        fail("k_selected (" + std::to_string(cfg.k_selected) + ") exceeds n_devices (" +
             std::to_string(cfg.n_devices) + ")");
    if (cfg.epochs < 1) fail("epochs must be >= 1");
    if (cfg.batch_size < 1) fail("batch_size must be >= 1");
    if (cfg.rounds < 0) fail("rounds must be >= 0");
    if (!(cfg.eta_l0 > 0.0)) fail("eta_l0 must be positive");
    if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) fail("gamma must be in [0, 1)");
    if (cfg.rho < 0.0 || cfg.rho > 1.0) fail("rho must be in [0, 1]");
    if (cfg.tau_max < 1) fail("tau_max must be >= 1");
    if (cfg.tau_max > cfg.epochs - 1)
        fail("tau_max (" + std::to_string(cfg.tau_max) + ") exceeds epochs - 1 (" +
             std::to_string(cfg.epochs - 1) + ")");
    if (cfg.rho > 0.0 && cfg.tau_max < 2)
        fail("rho (" + std::to_string(cfg.rho) + ") > 0 requires tau_max >= 2, got tau_max = " +
             std::to_string(cfg.tau_max));
    if (!(cfg.strategy.eta_g > 0.0)) fail("eta_g must be positive");
    if (cfg.strategy.mu < 0.0) fail("mu must be >= 0");
    if (cfg.model.input_dim < 1) fail("input_dim must be >= 1");
    if (cfg.model.num_classes < 2) fail("num_classes must be >= 2");
    if (cfg.model.kind == ModelKind::Mlp && cfg.model.hidden_dim < 1) fail("hidden_dim must be >= 1");
    if (cfg.classes_per_device < 1 || cfg.classes_per_device > cfg.model.num_classes)
        fail("classes_per_device (" + std::to_string(cfg.classes_per_device) + ") must be in [1, num_classes = " +
             std::to_string(cfg.model.num_classes) + "]");
    if (cfg.target_accuracy && (*cfg.target_accuracy < 0.0 || *cfg.target_accuracy > 1.0))
        fail("target_accuracy must be in [0, 1]");
    if (cfg.eval_every < 1) fail("eval_every must be >= 1");
    if (cfg.threads < 1) fail("threads must be >= 1");
    if (cfg.data.source == DataConfig::Source::Synth) {
        if (cfg.data.samples_per_class < 1) fail("samples_per_class must be >= 1");
        if (cfg.data.test_samples_per_class < 1) fail("test_samples_per_class must be >= 1");
        if (cfg.data.class_sep < 0.0) fail("class_sep must be >= 0");
        if (cfg.data.noise_sigma < 0.0) fail("noise_sigma must be >= 0");
    } else {
        if (cfg.data.idx_images.empty()) fail("idx_images is required when data=idx");
        if (cfg.data.idx_labels.empty()) fail("idx_labels is required when data=idx");
        if (cfg.data.idx_test_images.empty()) fail("idx_test_images is required when data=idx");
        if (cfg.data.idx_test_labels.empty()) fail("idx_test_labels is required when data=idx");
    }
}

ExperimentEnv prepare_environment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    ExperimentEnv env;
    if (cfg.data.source == DataConfig::Source::Synth) {
        uint64_t data_seed = derive_stream(cfg.master_seed, 0, 0, StreamPurpose::DataGen).state;
        TrainTestSplit split =
            synth_train_test(cfg.model.num_classes, cfg.model.input_dim, cfg.data.samples_per_class,
                             cfg.data.test_samples_per_class, cfg.data.class_sep, cfg.data.noise_sigma,
                             data_seed);
        env.train = std::move(split.train);
        env.test = std::move(split.test);
    } else {
        env.train = load_idx(cfg.data.idx_images, cfg.data.idx_labels);
        env.test = load_idx(cfg.data.idx_test_images, cfg.data.idx_test_labels);
        int classes = std::max(env.train.num_classes, env.test.num_classes);
        env.train.num_classes = classes;
        env.test.num_classes = classes;
        if (classes != cfg.model.num_classes)
            throw std::invalid_argument("config: num_classes (" + std::to_string(cfg.model.num_classes) +
                                        ") does not match idx data (" + std::to_string(classes) + " classes)");
        if (env.train.x.cols != cfg.model.input_dim)
            throw std::invalid_argument("config: input_dim (" + std::to_string(cfg.model.input_dim) +
                                        ") does not match idx data (" + std::to_string(env.train.x.cols) + ")");
    }

    PartitionSpec part;
    part.n_devices = cfg.n_devices;
    part.classes_per_device = cfg.classes_per_device;
    part.seed = derive_stream(cfg.master_seed, 0, 0, StreamPurpose::Partition).state;
    env.shards = partition_noniid(env.train, part);
    return env;
}

namespace {

// Mean loss over the union of the round's distinct participating shards,
// sample-weighted (each sample appears once even if its device filled several
// slots).
double union_train_loss(const ModelSpec& spec, const ParamVector& w, const ExperimentEnv& env,
                        const std::vector<int>& selected) {
    std::set<int> devices(selected.begin(), selected.end());
    int total_rows = 0;
    for (int d : devices) total_rows += env.shards[d].x.rows;
    Batch all;
    all.x = Matrix(total_rows, env.train.x.cols);
    all.y.reserve(total_rows);
    int row = 0;
    for (int d : devices) {
        const Shard& s = env.shards[d];
        for (int i = 0; i < s.x.rows; ++i, ++row) {
            const double* src = s.x.row(i);
            std::copy(src, src + s.x.cols, all.x.row(row));
            all.y.push_back(s.y[i]);
        }
    }
    return forward_loss(spec, w, all);
}

}  // namespace

RoundResult run_round(const ParamVector& w_t, const ExperimentConfig& cfg, const ExperimentEnv& env, int t,
                      bool evaluate) {
    const auto start = std::chrono::steady_clock::now();
    const double eta_l = lr_schedule(cfg.eta_l0, cfg.gamma, t);
    const int k = cfg.k_selected;

    Rng sample_rng = derive_stream(cfg.master_seed, static_cast<uint64_t>(t), 0, StreamPurpose::DeviceSampling);
    std::vector<int> selected = sample_devices(cfg.n_devices, k, sample_rng);
    Rng plan_rng = derive_stream(cfg.master_seed, static_cast<uint64_t>(t), 0, StreamPurpose::RoundPlan);
    RoundPlan plan = plan_round(selected, cfg.rho, cfg.tau_max, plan_rng);

    LocalObjective objective;
    if (cfg.strategy.variant == Strategy::FedProx) {
        objective.variant = LocalObjective::Variant::Prox;
        objective.mu = cfg.strategy.mu;
    }

    // Train every slot. Slot results land in slot-indexed cells and every slot
    // derives its own rng stream, so scheduling order cannot affect results.
    std::vector<LocalUpdate> updates(k);
    auto train_slot = [&](int slot) {
        int device = plan.selected[slot];
        int epochs_to_run = cfg.epochs - plan.tau[slot] + 1;
        Rng slot_rng = derive_stream(cfg.master_seed, static_cast<uint64_t>(t), static_cast<uint64_t>(slot),
                                     StreamPurpose::LocalTraining);
        updates[slot] = local_train(cfg.model, device, w_t, env.shards[device], epochs_to_run, eta_l,
                                    cfg.batch_size, objective, slot_rng, cfg.epochs);
    };
    if (cfg.threads > 1 && k > 1) {
        const int n_workers = std::min(cfg.threads, k);
        std::atomic<int> next_slot{0};
        std::vector<std::exception_ptr> errors(n_workers);
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (int w = 0; w < n_workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (int slot; (slot = next_slot.fetch_add(1)) < k;) train_slot(slot);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    } else {
        for (int slot = 0; slot < k; ++slot) train_slot(slot);
    }

    // Straggler correction (fedlga only). Corrected deltas live here so the
    // effective-delta pointers stay valid through aggregation.
    std::vector<ParamVector> corrected(k);
    std::vector<const ParamVector*> effective(k);
    for (int slot = 0; slot < k; ++slot) effective[slot] = &updates[slot].delta;
    if (cfg.strategy.variant == Strategy::FedLga && plan.n_stragglers > 0) {
        std::vector<const LocalUpdate*> full;
        for (int slot = 0; slot < k; ++slot)
            if (updates[slot].tau == 1) full.push_back(&updates[slot]);
        bool used_fallback = false;
        ParamVector w_hat = estimate_full_model(w_t, full, &used_fallback);
        for (int slot = 0; slot < k; ++slot) {
            if (updates[slot].tau == 1) continue;
            ApproxDiagnostics diag;
            corrected[slot] = approximate_update(updates[slot], w_t, w_hat, eta_l, &diag);
            effective[slot] = &corrected[slot];
        }
    }

    ParamVector w_next;
    try {
        w_next = aggregate(cfg.strategy, w_t, updates, effective);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error("round " + std::to_string(t) + ": " + std::string(e.what()));
    }

    RoundResult result;
    result.record.round = t;
    result.record.strategy = cfg.strategy.variant;
    result.record.rho_effective = static_cast<double>(plan.n_stragglers) / k;
    result.record.eta_l = eta_l;
    if (evaluate) {
        result.record.train_loss = union_train_loss(cfg.model, w_next, env, plan.selected);
        result.record.test_loss = forward_loss(cfg.model, w_next, Batch{env.test.x, env.test.y});
        result.record.test_accuracy = accuracy(cfg.model, w_next, env.test.x, env.test.y);
    } else {
        result.record.train_loss = std::numeric_limits<double>::quiet_NaN();
        result.record.test_loss = std::numeric_limits<double>::quiet_NaN();
        result.record.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    result.w_next = std::move(w_next);
    result.record.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    ExperimentEnv env = prepare_environment(cfg);
    ExperimentResult result;
    result.final_params =
        init_params(cfg.model, derive_stream(cfg.master_seed, 0, 0, StreamPurpose::Init).state);
    result.records.reserve(cfg.rounds);
    double last_train_loss = std::numeric_limits<double>::quiet_NaN();
    double last_test_loss = std::numeric_limits<double>::quiet_NaN();
    double last_test_acc = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < cfg.rounds; ++t) {
        bool evaluate = (t % cfg.eval_every == 0) || (t == cfg.rounds - 1);
        RoundResult round = run_round(result.final_params, cfg, env, t, evaluate);
        result.final_params = std::move(round.w_next);
        if (evaluate) {
            last_train_loss = round.record.train_loss;
            last_test_loss = round.record.test_loss;
            last_test_acc = round.record.test_accuracy;
        } else {
            // carry the last evaluated metrics forward so the record stream
            // stays rectangular
            round.record.train_loss = last_train_loss;
            round.record.test_loss = last_test_loss;
            round.record.test_accuracy = last_test_acc;
        }
        result.records.push_back(round.record);
        if (cfg.target_accuracy && evaluate && round.record.test_accuracy >= *cfg.target_accuracy) break;
    }
    return result;
}

std::optional<int> rounds_to_target(const std::vector<RoundRecord>& records, double target) {
    for (const RoundRecord& r : records)
        if (r.test_accuracy >= target) return r.round;
    return std::nullopt;
}

double lr_schedule(double eta_l0, double gamma, int t) {
    if (!(eta_l0 > 0.0)) throw std::invalid_argument("lr_schedule: eta_l0 must be positive");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("lr_schedule: gamma must be in [0, 1)");
    if (t < 0) throw std::invalid_argument("lr_schedule: negative round");
    double eta = eta_l0;
    const double factor = 1.0 - gamma;
    for (int i = 0; i < t; ++i) eta *= factor;
    return eta;
}

}  // namespace fedsim
