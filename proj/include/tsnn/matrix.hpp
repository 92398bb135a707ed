#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "tsnn/common.hpp"
#include "tsnn/rng.hpp"

namespace tsnn {

/// Dense row-major matrix. Real is float for training, double for the
/// finite-difference oracles in the tests.
template <class Real = float>
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), v(r * c, fill) {}

    Real& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
    const Real& operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }

    Real* row(std::size_t i) { return v.data() + i * cols; }
    const Real* row(std::size_t i) const { return v.data() + i * cols; }

    std::size_t size() const { return v.size(); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const {
        std::ostringstream os;
        os << rows << "x" << cols;
        return os.str();
    }
};

namespace detail {

inline void throw_shape(const char* op, const std::string& a, const std::string& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a + " and " + b);
}

} // namespace detail

/// output[b][j] = sum_i weights[j][i] * input[b][i] + bias[j].
/// Reductions accumulate in double; loop order is fixed and sequential, so
/// results are bit-reproducible.
template <class Real>
Matrix<Real> affine_forward(const Matrix<Real>& input, const Matrix<Real>& weights,
                            const std::vector<Real>& bias) {
    if (input.cols != weights.cols || bias.size() != weights.rows)
        detail::throw_shape("affine_forward", input.shape_str(),
                            weights.shape_str() + " (+bias " + std::to_string(bias.size()) + ")");
    Matrix<Real> out(input.rows, weights.rows);
    for (std::size_t b = 0; b < input.rows; ++b) {
        const Real* x = input.row(b);
        Real* y = out.row(b);
        for (std::size_t j = 0; j < weights.rows; ++j) {
            const Real* w = weights.row(j);
            double acc = static_cast<double>(bias[j]);
            for (std::size_t i = 0; i < input.cols; ++i)
                acc += static_cast<double>(w[i]) * static_cast<double>(x[i]);
            y[j] = static_cast<Real>(acc);
        }
    }
    return out;
}

template <class Real>
struct AffineGrads {
    Matrix<Real> grad_in;         // batch x in
    Matrix<Real> grad_w;          // out x in
    std::vector<Real> grad_b;     // out
};

/// Standard affine gradients; grad_b sums grad_out over the batch.
template <class Real>
AffineGrads<Real> affine_backward(const Matrix<Real>& grad_out, const Matrix<Real>& input,
                                  const Matrix<Real>& weights) {
    if (grad_out.rows != input.rows || grad_out.cols != weights.rows ||
        input.cols != weights.cols)
        detail::throw_shape("affine_backward",
                            grad_out.shape_str() + "/" + input.shape_str(), weights.shape_str());
    AffineGrads<Real> g;
    g.grad_in = Matrix<Real>(input.rows, input.cols);
    g.grad_w = Matrix<Real>(weights.rows, weights.cols);
    g.grad_b.assign(weights.rows, Real(0));

    for (std::size_t b = 0; b < input.rows; ++b) {
        const Real* go = grad_out.row(b);
        const Real* x = input.row(b);
        Real* gi = g.grad_in.row(b);
        for (std::size_t j = 0; j < weights.rows; ++j) {
            const Real gj = go[j];
            if (gj == Real(0)) continue;
            const Real* w = weights.row(j);
            Real* gw = g.grad_w.row(j);
            for (std::size_t i = 0; i < weights.cols; ++i) {
                gi[i] += gj * w[i];
                gw[i] += gj * x[i];
            }
            g.grad_b[j] += gj;
        }
    }
    return g;
}

template <class Real>
struct SoftmaxLoss {
    double loss = 0.0;            // mean over batch of -log softmax[label]
    Matrix<Real> grad_logits;     // (softmax - one_hot) / batch
    Matrix<Real> probs;           // softmax rows
};

/// Numerically stable softmax cross entropy (max subtraction per row).
template <class Real>
SoftmaxLoss<Real> softmax_cross_entropy(const Matrix<Real>& logits,
                                        const std::vector<std::uint32_t>& labels) {
    if (labels.size() != logits.rows)
        detail::throw_shape("softmax_cross_entropy", logits.shape_str(),
                            std::to_string(labels.size()) + " labels");
    SoftmaxLoss<Real> out;
    out.grad_logits = Matrix<Real>(logits.rows, logits.cols);
    out.probs = Matrix<Real>(logits.rows, logits.cols);
    const double inv_batch = 1.0 / static_cast<double>(logits.rows);
    double total = 0.0;
    for (std::size_t b = 0; b < logits.rows; ++b) {
        if (labels[b] >= logits.cols)
            throw DimensionError("softmax_cross_entropy: label " + std::to_string(labels[b]) +
                                 " out of range [0, " + std::to_string(logits.cols) + ")");
        const Real* z = logits.row(b);
        double zmax = z[0];
        for (std::size_t j = 1; j < logits.cols; ++j) zmax = std::max(zmax, static_cast<double>(z[j]));
        double denom = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) denom += std::exp(static_cast<double>(z[j]) - zmax);
        const double log_denom = std::log(denom);
        total += -(static_cast<double>(z[labels[b]]) - zmax - log_denom);
        Real* g = out.grad_logits.row(b);
        Real* p = out.probs.row(b);
        for (std::size_t j = 0; j < logits.cols; ++j) {
            double pj = std::exp(static_cast<double>(z[j]) - zmax - log_denom);
            p[j] = static_cast<Real>(pj);
            g[j] = static_cast<Real>((pj - (labels[b] == j ? 1.0 : 0.0)) * inv_batch);
        }
    }
    out.loss = total * inv_batch;
    return out;
}

/// Uniform He-style init in [-sqrt(6/fan_in), +sqrt(6/fan_in)].
template <class Real = float>
Matrix<Real> init_weights(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Matrix<Real> w(fan_out, fan_in);
    for (auto& x : w.v) x = static_cast<Real>(rng.uniform(-bound, bound));
    return w;
}

template <class Real>
bool all_finite(const Matrix<Real>& m) {
    for (Real x : m.v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

} // namespace tsnn
