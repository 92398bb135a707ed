#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include "tsnn/matrix.hpp"

namespace tsnn {

/// Binary spike record over an encoding window: bits(t, b, j) in {0,1},
/// t in [0, t_e), frame b, neuron j.
template <class Real = float>
struct SpikeTrain {
    std::size_t t_e = 0;
    std::size_t batch = 0;
    std::size_t neurons = 0;
    std::vector<Real> bits; // [t][b][j]

    SpikeTrain() = default;
    SpikeTrain(std::size_t te, std::size_t b, std::size_t n)
        : t_e(te), batch(b), neurons(n), bits(te * b * n, Real(0)) {}

    Real& at(std::size_t t, std::size_t b, std::size_t j) {
        return bits[(t * batch + b) * neurons + j];
    }
    const Real& at(std::size_t t, std::size_t b, std::size_t j) const {
        return bits[(t * batch + b) * neurons + j];
    }

    /// View of timestep t as a batch x neurons matrix.
    Matrix<Real> step(std::size_t t) const {
        Matrix<Real> m(batch, neurons);
        std::copy(bits.begin() + static_cast<std::ptrdiff_t>(t * batch * neurons),
                  bits.begin() + static_cast<std::ptrdiff_t>((t + 1) * batch * neurons),
                  m.v.begin());
        return m;
    }

    /// Per-neuron spike counts (column sums over time), batch x neurons.
    Matrix<Real> counts() const {
        Matrix<Real> c(batch, neurons);
        for (std::size_t t = 0; t < t_e; ++t)
            for (std::size_t i = 0; i < batch * neurons; ++i)
                c.v[i] += bits[t * batch * neurons + i];
        return c;
    }
};

struct IFLayerConfig {
    double threshold = 1.0;
    std::size_t t_e = 10;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
};

/// Synaptic current for one timestep: z_j = sum_i w_ji * theta_i + b_j / T_e.
/// The bias enters as a constant injection spread over the window.
template <class Real>
Matrix<Real> synaptic_current(const Matrix<Real>& weights, const std::vector<Real>& bias,
                              const Matrix<Real>& spikes_at_t, std::size_t t_e) {
    std::vector<Real> b(bias.size());
    for (std::size_t j = 0; j < bias.size(); ++j)
        b[j] = static_cast<Real>(static_cast<double>(bias[j]) / static_cast<double>(t_e));
    return affine_forward(spikes_at_t, weights, b);
}

/// One integrate-and-fire step with reset by subtraction applied within the
/// same step: v += z; fire where v >= threshold; fired neurons lose exactly
/// one threshold. At most one spike per neuron per step.
template <class Real>
Matrix<Real> if_layer_step(Matrix<Real>& v, const Matrix<Real>& current, double threshold) {
    if (!v.same_shape(current))
        detail::throw_shape("if_layer_step", v.shape_str(), current.shape_str());
    if (!all_finite(current)) throw NumericError("if_layer_step: non-finite synaptic current");
    Matrix<Real> spikes(v.rows, v.cols);
    const Real th = static_cast<Real>(threshold);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v.v[i] += current.v[i];
        if (v.v[i] >= th) {
            spikes.v[i] = Real(1);
            v.v[i] -= th;
        }
    }
    return spikes;
}

template <class Real>
struct IFRunResult {
    SpikeTrain<Real> train;
    Matrix<Real> counts;   // batch x out
    Matrix<Real> v_final;  // batch x out
};

/// Runs an IF layer over a full encoding window from V(0) = 0.
/// input_scale, when non-empty, multiplies each input line per frame (used
/// for dropout compensation); the spike record itself stays binary.
template <class Real>
IFRunResult<Real> if_layer_run(const IFLayerConfig& cfg, const Matrix<Real>& weights,
                               const std::vector<Real>& bias, const SpikeTrain<Real>& input,
                               Real input_scale = Real(1)) {
    if (input.t_e != cfg.t_e || input.neurons != weights.cols || bias.size() != weights.rows)
        detail::throw_shape("if_layer_run",
                            std::to_string(input.t_e) + "x" + std::to_string(input.neurons),
                            weights.shape_str());
    const std::size_t batch = input.batch;
    const std::size_t out = weights.rows;
    IFRunResult<Real> r;
    r.train = SpikeTrain<Real>(cfg.t_e, batch, out);
    r.counts = Matrix<Real>(batch, out);
    r.v_final = Matrix<Real>(batch, out);

    // Transposed weights give contiguous rows for the per-spike gather below.
    Matrix<Real> wt(weights.cols, weights.rows);
    for (std::size_t j = 0; j < weights.rows; ++j)
        for (std::size_t i = 0; i < weights.cols; ++i) wt(i, j) = weights(j, i);

    const Real th = static_cast<Real>(cfg.threshold);
    std::vector<Real> bias_step(out);
    for (std::size_t j = 0; j < out; ++j)
        bias_step[j] = static_cast<Real>(static_cast<double>(bias[j]) / static_cast<double>(cfg.t_e));

    Matrix<Real>& v = r.v_final; // membrane state, V(0) = 0
    Matrix<Real> z(batch, out);
    for (std::size_t t = 0; t < cfg.t_e; ++t) {
        for (std::size_t b = 0; b < batch; ++b) {
            Real* zb = z.row(b);
            for (std::size_t j = 0; j < out; ++j) zb[j] = bias_step[j];
            const Real* in = &input.at(t, b, 0);
            for (std::size_t i = 0; i < input.neurons; ++i) {
                const Real s = in[i];
                if (s == Real(0)) continue;
                const Real f = s * input_scale;
                const Real* w = wt.row(i);
                for (std::size_t j = 0; j < out; ++j) zb[j] += f * w[j];
            }
        }
        if (!all_finite(z)) throw NumericError("if_layer_run: non-finite synaptic current");
        for (std::size_t b = 0; b < batch; ++b) {
            Real* vb = v.row(b);
            const Real* zb = z.row(b);
            Real* cb = r.counts.row(b);
            Real* sb = &r.train.at(t, b, 0);
            for (std::size_t j = 0; j < out; ++j) {
                vb[j] += zb[j];
                if (vb[j] >= th) {
                    sb[j] = Real(1);
                    vb[j] -= th;
                    cb[j] += Real(1);
                }
            }
        }
    }
    return r;
}

/// Free aggregate membrane potential: V^f_j = sum_i w_ji * c_i + b_j
/// (the potential reached over the window with firing disabled).
template <class Real>
Matrix<Real> free_membrane_potential(const Matrix<Real>& weights, const std::vector<Real>& bias,
                                     const Matrix<Real>& counts) {
    return affine_forward(counts, weights, bias);
}

template <class Real>
struct EncodeResult {
    Matrix<Real> a0;          // ReLU activations, batch x out
    SpikeTrain<Real> train;
    Matrix<Real> counts;
};

/// Distributes nonnegative activations over the encoding window: emit one
/// spike per step while the residual is >= threshold. Emitted count is
/// exactly min(floor(a0 / threshold), t_e); a residual of exactly
/// k*threshold yields k spikes.
template <class Real>
void distribute_over_window(const Matrix<Real>& a0, double threshold, std::size_t t_e,
                            SpikeTrain<Real>& train, Matrix<Real>& counts) {
    const std::size_t batch = a0.rows, n = a0.cols;
    train = SpikeTrain<Real>(t_e, batch, n);
    counts = Matrix<Real>(batch, n);
    const Real th = static_cast<Real>(threshold);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < n; ++j) {
            Real residual = a0(b, j);
            Real c = 0;
            for (std::size_t t = 0; t < t_e && residual >= th; ++t) {
                train.at(t, b, j) = Real(1);
                residual -= th;
                c += Real(1);
            }
            counts(b, j) = c;
        }
    }
}

/// Encoding layer: a0 = relu(W x + b), then spike emission over the window.
template <class Real>
EncodeResult<Real> encode_features(const Matrix<Real>& enc_weights, const std::vector<Real>& enc_bias,
                                   const Matrix<Real>& features, const IFLayerConfig& cfg) {
    if (!all_finite(features)) throw NumericError("encode_features: non-finite features");
    EncodeResult<Real> r;
    r.a0 = affine_forward(features, enc_weights, enc_bias);
    for (auto& x : r.a0.v) x = std::max(x, Real(0));
    distribute_over_window(r.a0, cfg.threshold, cfg.t_e, r.train, r.counts);
    return r;
}

/// Output decoding: logits are the free membrane potential of the decode
/// layer; output neurons never spike.
template <class Real>
Matrix<Real> decode_output(const Matrix<Real>& out_weights, const std::vector<Real>& out_bias,
                           const Matrix<Real>& counts) {
    return free_membrane_potential(out_weights, out_bias, counts);
}

// ---------------------------------------------------------------------------
// Spike-trace dump. Layout: "SPK1", then layer id, t_e, neuron count as
// 32-bit LE unsigned, then ceil(t_e*neurons/8) bytes of packed bits,
// time-major. One record per (layer, frame).

template <class Real>
void write_spike_record(std::ostream& os, std::uint32_t layer_id, const SpikeTrain<Real>& train,
                        std::size_t frame) {
    os.write("SPK1", 4);
    io::write_u32(os, layer_id);
    io::write_u32(os, static_cast<std::uint32_t>(train.t_e));
    io::write_u32(os, static_cast<std::uint32_t>(train.neurons));
    const std::size_t nbits = train.t_e * train.neurons;
    std::uint8_t acc = 0;
    int filled = 0;
    for (std::size_t k = 0; k < nbits; ++k) {
        const std::size_t t = k / train.neurons, j = k % train.neurons;
        if (train.at(t, frame, j) != Real(0)) acc |= static_cast<std::uint8_t>(1u << filled);
        if (++filled == 8) {
            io::write_u8(os, acc);
            acc = 0;
            filled = 0;
        }
    }
    if (filled > 0) io::write_u8(os, acc);
}

template <class Real>
struct SpikeRecord {
    std::uint32_t layer_id = 0;
    SpikeTrain<Real> train; // batch == 1
};

template <class Real = float>
SpikeRecord<Real> read_spike_record(std::istream& is) {
    io::expect_magic(is, "SPK1", "spike trace");
    SpikeRecord<Real> rec;
    rec.layer_id = io::read_u32(is, "spike trace layer id");
    const std::uint32_t te = io::read_u32(is, "spike trace t_e");
    const std::uint32_t n = io::read_u32(is, "spike trace neuron count");
    rec.train = SpikeTrain<Real>(te, 1, n);
    const std::size_t nbits = static_cast<std::size_t>(te) * n;
    std::uint8_t acc = 0;
    int avail = 0;
    for (std::size_t k = 0; k < nbits; ++k) {
        if (avail == 0) {
            acc = io::read_u8(is, "spike trace payload");
            avail = 8;
        }
        if (acc & 1u) rec.train.at(k / n, 0, k % n) = Real(1);
        acc >>= 1;
        --avail;
    }
    return rec;
}

} // namespace tsnn
