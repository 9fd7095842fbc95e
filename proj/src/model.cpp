#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

void validate_spec(const ModelSpec& spec) {
    if (spec.input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
    if (spec.num_classes < 2) throw std::invalid_argument("model: num_classes must be >= 2");
    if (spec.kind == ModelKind::Mlp && spec.hidden_dim < 1)
        throw std::invalid_argument("model: hidden_dim must be >= 1 for mlp");
}

void validate_batch(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    validate_spec(spec);
    if (params.size() != static_cast<size_t>(param_count(spec)))
        throw std::invalid_argument("model: parameter vector has dim " + std::to_string(params.size()) +
                                    ", expected " + std::to_string(param_count(spec)));
    if (batch.x.rows == 0) throw std::invalid_argument("model: empty batch");
    if (batch.x.cols != spec.input_dim)
        throw std::invalid_argument("model: batch feature dim " + std::to_string(batch.x.cols) +
                                    ", expected " + std::to_string(spec.input_dim));
    if (batch.y.size() != static_cast<size_t>(batch.x.rows))
        throw std::invalid_argument("model: batch has " + std::to_string(batch.x.rows) + " rows but " +
                                    std::to_string(batch.y.size()) + " labels");
    for (int label : batch.y)
        if (label < 0 || label >= spec.num_classes)
            throw std::invalid_argument("model: label " + std::to_string(label) + " out of range");
}

// Logits for every sample; for mlp also returns post-ReLU activations.
void forward_logits(const ModelSpec& spec, const ParamVector& p, const Matrix& x, Matrix& logits, Matrix* hidden) {
    const int n = x.rows, d = spec.input_dim, c = spec.num_classes;
    logits = Matrix(n, c);
    if (spec.kind == ModelKind::Logistic) {
        const double* w = p.data();            // C x D
        const double* b = p.data() + static_cast<size_t>(c) * d;
        for (int i = 0; i < n; ++i) {
            const double* xi = x.row(i);
            for (int j = 0; j < c; ++j) {
                const double* wj = w + static_cast<size_t>(j) * d;
                double z = b[j];
                for (int k = 0; k < d; ++k) z += wj[k] * xi[k];
                logits.at(i, j) = z;
            }
        }
        return;
    }
    const int h = spec.hidden_dim;
    const double* w1 = p.data();                                        // H x D
    const double* b1 = w1 + static_cast<size_t>(h) * d;                 // H
    const double* w2 = b1 + h;                                          // C x H
    const double* b2 = w2 + static_cast<size_t>(c) * h;                 // C
    Matrix act(n, h);
    for (int i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        for (int j = 0; j < h; ++j) {
            const double* wj = w1 + static_cast<size_t>(j) * d;
            double a = b1[j];
            for (int k = 0; k < d; ++k) a += wj[k] * xi[k];
            act.at(i, j) = a > 0.0 ? a : 0.0;
        }
        for (int j = 0; j < c; ++j) {
            const double* wj = w2 + static_cast<size_t>(j) * h;
            double z = b2[j];
            for (int k = 0; k < h; ++k) z += wj[k] * act.at(i, k);
            logits.at(i, j) = z;
        }
    }
    if (hidden) *hidden = std::move(act);
}

}  // namespace

int param_count(const ModelSpec& spec) {
    validate_spec(spec);
    if (spec.kind == ModelKind::Logistic) return spec.input_dim * spec.num_classes + spec.num_classes;
    return spec.input_dim * spec.hidden_dim + spec.hidden_dim + spec.hidden_dim * spec.num_classes +
           spec.num_classes;
}

ParamVector init_params(const ModelSpec& spec, uint64_t seed) {
    validate_spec(spec);
    ParamVector p(static_cast<size_t>(param_count(spec)), 0.0);
    Rng rng(mix64(seed + 0x9e3779b97f4a7c15ull));
    auto fill_layer = [&rng](double* w, size_t count, int fan_in, int fan_out) {
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (size_t i = 0; i < count; ++i) w[i] = (2.0 * rng.uniform() - 1.0) * limit;
    };
    const int d = spec.input_dim, c = spec.num_classes;
    if (spec.kind == ModelKind::Logistic) {
        fill_layer(p.data(), static_cast<size_t>(c) * d, d, c);
        // biases stay zero
        return p;
    }
    const int h = spec.hidden_dim;
    fill_layer(p.data(), static_cast<size_t>(h) * d, d, h);
    fill_layer(p.data() + static_cast<size_t>(h) * d + h, static_cast<size_t>(c) * h, h, c);
    return p;
}

double forward_loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    validate_batch(spec, params, batch);
    Matrix logits;
    forward_logits(spec, params, batch.x, logits, nullptr);
    const int n = batch.x.rows, c = spec.num_classes;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* z = logits.row(i);
        double zmax = z[0];
        for (int j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(z[j] - zmax);
        // log-sum-exp minus the true-class logit
        total += zmax + std::log(sum) - z[batch.y[i]];
    }
    return total / n;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
    validate_batch(spec, params, batch);
    const int n = batch.x.rows, d = spec.input_dim, c = spec.num_classes;
    Matrix logits, hidden;
    forward_logits(spec, params, batch.x, logits, spec.kind == ModelKind::Mlp ? &hidden : nullptr);

    // dL/dlogits = (softmax - onehot) / n
    Matrix dz(n, c);
    for (int i = 0; i < n; ++i) {
        const double* z = logits.row(i);
        double zmax = z[0];
        for (int j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(z[j] - zmax);
        for (int j = 0; j < c; ++j) dz.at(i, j) = std::exp(z[j] - zmax) / sum / n;
        dz.at(i, batch.y[i]) -= 1.0 / n;
    }

    ParamVector g(params.size(), 0.0);
    if (spec.kind == ModelKind::Logistic) {
        double* gw = g.data();
        double* gb = g.data() + static_cast<size_t>(c) * d;
        for (int i = 0; i < n; ++i) {
            const double* xi = batch.x.row(i);
            for (int j = 0; j < c; ++j) {
                double dzij = dz.at(i, j);
                double* gwj = gw + static_cast<size_t>(j) * d;
                for (int k = 0; k < d; ++k) gwj[k] += dzij * xi[k];
                gb[j] += dzij;
            }
        }
        return g;
    }

    const int h = spec.hidden_dim;
    const double* w2 = params.data() + static_cast<size_t>(h) * d + h;
    double* gw1 = g.data();
    double* gb1 = g.data() + static_cast<size_t>(h) * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + static_cast<size_t>(c) * h;
    for (int i = 0; i < n; ++i) {
        const double* xi = batch.x.row(i);
        for (int j = 0; j < c; ++j) {
            double dzij = dz.at(i, j);
            double* gw2j = gw2 + static_cast<size_t>(j) * h;
            for (int k = 0; k < h; ++k) gw2j[k] += dzij * hidden.at(i, k);
            gb2[j] += dzij;
        }
        for (int k = 0; k < h; ++k) {
            if (hidden.at(i, k) <= 0.0) continue;  // ReLU gate
            double da = 0.0;
            for (int j = 0; j < c; ++j) da += dz.at(i, j) * w2[static_cast<size_t>(j) * h + k];
            double* gw1k = gw1 + static_cast<size_t>(k) * d;
            for (int m = 0; m < d; ++m) gw1k[m] += da * xi[m];
            gb1[k] += da;
        }
    }
    return g;
}

ParamVector finite_diff_gradient(const ModelSpec& spec, const ParamVector& params, const Batch& batch, double h) {
    validate_batch(spec, params, batch);
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: h must be positive");
    ParamVector g(params.size());
    ParamVector w = params;
    for (size_t i = 0; i < w.size(); ++i) {
        double saved = w[i];
        w[i] = saved + h;
        double up = forward_loss(spec, w, batch);
        w[i] = saved - h;
        double down = forward_loss(spec, w, batch);
        w[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

Matrix softmax_probs(const ModelSpec& spec, const ParamVector& params, const Matrix& x) {
    validate_spec(spec);
    if (params.size() != static_cast<size_t>(param_count(spec)))
        throw std::invalid_argument("softmax_probs: parameter dim mismatch");
    if (x.cols != spec.input_dim) throw std::invalid_argument("softmax_probs: feature dim mismatch");
    Matrix logits;
    forward_logits(spec, params, x, logits, nullptr);
    const int c = spec.num_classes;
    for (int i = 0; i < x.rows; ++i) {
        double* z = logits.row(i);
        double zmax = z[0];
        for (int j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            z[j] = std::exp(z[j] - zmax);
            sum += z[j];
        }
        for (int j = 0; j < c; ++j) z[j] /= sum;
    }
    return logits;
}

double accuracy(const ModelSpec& spec, const ParamVector& params, const Matrix& x, const std::vector<int>& y) {
    validate_spec(spec);
    if (x.rows == 0) throw std::invalid_argument("accuracy: empty dataset");
    if (params.size() != static_cast<size_t>(param_count(spec)))
        throw std::invalid_argument("accuracy: parameter dim mismatch");
    if (x.cols != spec.input_dim) throw std::invalid_argument("accuracy: feature dim mismatch");
    if (y.size() != static_cast<size_t>(x.rows)) throw std::invalid_argument("accuracy: label count mismatch");
    Matrix logits;
    forward_logits(spec, params, x, logits, nullptr);
    int hits = 0;
    for (int i = 0; i < x.rows; ++i) {
        const double* z = logits.row(i);
        int best = 0;
        for (int j = 1; j < spec.num_classes; ++j)
            if (z[j] > z[best]) best = j;  // strict >, ties go to the lowest index
        if (best == y[i]) ++hits;
    }
    return static_cast<double>(hits) / x.rows;
}

}  // namespace fedsim
