#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/matrix.hpp"

namespace fedsim {

enum class ModelKind { Logistic, Mlp };

// Logistic: W (C x D) then b (C).
// Mlp: W1 (H x D), b1 (H), W2 (C x H), b2 (C); ReLU hidden layer.
struct ModelSpec {
    ModelKind kind = ModelKind::Logistic;
    int input_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0;  // mlp only
};

struct Batch {
    Matrix x;                // batch_size x input_dim
    std::vector<int> y;      // class labels
};

int param_count(const ModelSpec& spec);

// Glorot-uniform weights (limit sqrt(6 / (fan_in + fan_out))), zero biases.
ParamVector init_params(const ModelSpec& spec, uint64_t seed);

// Mean softmax cross-entropy over the batch.
double forward_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Analytic gradient of forward_loss.
ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// Central-difference gradient; reference oracle for the analytic one.
ParamVector finite_diff_gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch, double h);

// Per-row softmax probabilities (rows x num_classes).
Matrix softmax_probs(const ModelSpec& spec, const ParamVector& params, const Matrix& x);

// Argmax accuracy; ties go to the lowest class index.
double accuracy(const ModelSpec& spec, const ParamVector& params, const Matrix& x, const std::vector<int>& y);

}  // namespace fedsim
