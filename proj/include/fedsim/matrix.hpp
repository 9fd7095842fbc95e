#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fedsim {

// Flat parameter storage. Every learnable object in the simulator is one of
// these; layout is defined per model in model.cpp.
using ParamVector = std::vector<double>;

// Dense row-major matrix, just enough for feature blocks and logits.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
};

inline double dot(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(const ParamVector& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double linf_norm(const ParamVector& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

inline bool all_finite(const ParamVector& a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

// y += s * x
inline void axpy(double s, const ParamVector& x, ParamVector& y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline ParamVector sub(const ParamVector& a, const ParamVector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sub: size mismatch");
    ParamVector r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

}  // namespace fedsim
