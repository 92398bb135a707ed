#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tsnn/matrix.hpp"
#include "tsnn/rng.hpp"
#include "tsnn/snn.hpp"

namespace tsnn {

template <class Real = float>
struct BatchNorm {
    std::vector<Real> gamma, beta, running_mean, running_var;
    Real momentum = Real(0.1);
    Real eps = Real(1e-5);

    void init(std::size_t n) {
        gamma.assign(n, Real(1));
        beta.assign(n, Real(0));
        running_mean.assign(n, Real(0));
        running_var.assign(n, Real(1));
    }
};

/// One coupled ANN/SNN layer: shared weights, optional batch norm and
/// dropout. The same parameters drive both the spiking forward pass and the
/// auxiliary analog path used for backprop.
template <class Real = float>
struct TandemLayer {
    Matrix<Real> weights;     // out x in
    std::vector<Real> bias;   // out
    bool has_bn = true;
    BatchNorm<Real> bn;
    bool has_dropout = false;
    Real dropout_rate = Real(0);

    std::size_t in_dim() const { return weights.cols; }
    std::size_t out_dim() const { return weights.rows; }
};

template <class Real = float>
struct TandemNetwork {
    TandemLayer<Real> encoder;              // feature -> first spike layer
    std::vector<TandemLayer<Real>> hidden;  // spiking hidden layers
    Matrix<Real> out_weights;               // classes x last hidden
    std::vector<Real> out_bias;             // no BN / dropout / spiking
    IFLayerConfig cfg;                      // threshold and t_e

    std::size_t in_dim() const { return encoder.in_dim(); }
    std::size_t classes() const { return out_weights.rows; }
};

template <class Real = float>
TandemNetwork<Real> make_network(Rng& rng, std::size_t in_dim, std::size_t classes,
                                 std::size_t hidden_layers, std::size_t hidden_units,
                                 std::size_t t_e = 10, Real dropout_rate = Real(0),
                                 double threshold = 1.0) {
    TandemNetwork<Real> net;
    net.cfg.threshold = threshold;
    net.cfg.t_e = t_e;
    auto make_layer = [&](std::size_t in, std::size_t out) {
        TandemLayer<Real> l;
        l.weights = init_weights<Real>(rng, in, out);
        l.bias.assign(out, Real(0));
        l.bn.init(out);
        l.has_dropout = dropout_rate > Real(0);
        l.dropout_rate = dropout_rate;
        return l;
    };
    net.encoder = make_layer(in_dim, hidden_units);
    for (std::size_t i = 0; i < hidden_layers; ++i)
        net.hidden.push_back(make_layer(hidden_units, hidden_units));
    net.out_weights = init_weights<Real>(rng, hidden_units, classes);
    net.out_bias.assign(classes, Real(0));
    return net;
}

/// Pseudo spike count: a = min(floor(v/threshold) * [v > 0], t_e),
/// i.e. clamp(floor(v/threshold), 0, t_e) gated to 0 for v <= 0.
template <class Real>
Real pseudo_spike_count_scalar(Real v_f, double threshold, std::size_t t_e) {
    if (!(static_cast<double>(v_f) > 0.0)) return Real(0);
    double a = std::floor(static_cast<double>(v_f) / threshold);
    return static_cast<Real>(std::min(a, static_cast<double>(t_e)));
}

template <class Real>
Matrix<Real> pseudo_spike_count(const Matrix<Real>& v_f, double threshold, std::size_t t_e) {
    Matrix<Real> a(v_f.rows, v_f.cols);
    for (std::size_t i = 0; i < v_f.size(); ++i)
        a.v[i] = pseudo_spike_count_scalar(v_f.v[i], threshold, t_e);
    return a;
}

/// Batch-norm folded into the affine: w' = gamma*w/sqrt(var+eps),
/// b' = gamma*(b - mean)/sqrt(var+eps) + beta, from running statistics.
template <class Real>
std::pair<Matrix<Real>, std::vector<Real>> fold_batchnorm(const TandemLayer<Real>& layer) {
    if (!layer.has_bn) return {layer.weights, layer.bias};
    const std::size_t out = layer.out_dim(), in = layer.in_dim();
    Matrix<Real> w(out, in);
    std::vector<Real> b(out);
    for (std::size_t j = 0; j < out; ++j) {
        const double s = static_cast<double>(layer.bn.gamma[j]) /
                         std::sqrt(static_cast<double>(layer.bn.running_var[j]) +
                                   static_cast<double>(layer.bn.eps));
        const Real* src = layer.weights.row(j);
        Real* dst = w.row(j);
        for (std::size_t i = 0; i < in; ++i) dst[i] = static_cast<Real>(s * src[i]);
        b[j] = static_cast<Real>(s * (static_cast<double>(layer.bias[j])) -
                                 s * static_cast<double>(layer.bn.running_mean[j]) +
                                 static_cast<double>(layer.bn.beta[j]));
    }
    return {w, b};
}

/// Which activation carries forward between layers.
enum class ForwardPath {
    Tandem,        // SNN spike counts carry; ANN path shadows for backprop
    AnnQuantized,  // pseudo counts carry (pure-ANN baseline, floor quantizer)
    AnnSurrogate   // clamp(v/threshold, 0, t_e) carries (differentiable surrogate)
};

template <class Real = float>
struct LayerTrace {
    bool is_encoder = false;
    Matrix<Real> x_input;       // effective analog input (dropout-scaled carrier)
    Matrix<Real> v_raw;         // pre-BN affine output
    Matrix<Real> v_bn;          // post-BN pre-activation (V^f of the analog path)
    Matrix<Real> xhat;          // BN-normalized intermediate (train mode)
    std::vector<Real> sigma;    // per-unit sqrt(var+eps) of the batch (train mode)
    Matrix<Real> act;           // analog activation a^l, dropout-masked
    Matrix<Real> counts;        // SNN spike counts c^l, dropout-masked (tandem)
    SpikeTrain<Real> spikes;    // SNN spike train s^l, dropout-masked (tandem)
    Matrix<Real> mask;          // dropout mask (empty when not sampled)
};

template <class Real = float>
struct ForwardTrace {
    bool train_mode = false;
    ForwardPath path = ForwardPath::Tandem;
    std::vector<LayerTrace<Real>> layers; // encoder first, then hidden
    Matrix<Real> x_out;                   // input seen by the decode layer
    Matrix<Real> logits;
};

namespace detail {

template <class Real>
void bn_forward_train(const BatchNorm<Real>& bn, const Matrix<Real>& v_raw, LayerTrace<Real>& tr,
                      BatchNorm<Real>* update) {
    const std::size_t batch = v_raw.rows, n = v_raw.cols;
    tr.xhat = Matrix<Real>(batch, n);
    tr.v_bn = Matrix<Real>(batch, n);
    tr.sigma.assign(n, Real(0));
    for (std::size_t j = 0; j < n; ++j) {
        double mu = 0.0;
        for (std::size_t b = 0; b < batch; ++b) mu += v_raw(b, j);
        mu /= static_cast<double>(batch);
        double var = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double d = v_raw(b, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(batch);
        const double sigma = std::sqrt(var + static_cast<double>(bn.eps));
        tr.sigma[j] = static_cast<Real>(sigma);
        for (std::size_t b = 0; b < batch; ++b) {
            const double xh = (v_raw(b, j) - mu) / sigma;
            tr.xhat(b, j) = static_cast<Real>(xh);
            tr.v_bn(b, j) = static_cast<Real>(static_cast<double>(bn.gamma[j]) * xh +
                                              static_cast<double>(bn.beta[j]));
        }
        if (update) {
            const double m = update->momentum;
            update->running_mean[j] =
                static_cast<Real>((1.0 - m) * update->running_mean[j] + m * mu);
            update->running_var[j] =
                static_cast<Real>((1.0 - m) * update->running_var[j] + m * var);
        }
    }
}

template <class Real>
void bn_forward_eval(const BatchNorm<Real>& bn, const Matrix<Real>& v_raw, LayerTrace<Real>& tr) {
    const std::size_t batch = v_raw.rows, n = v_raw.cols;
    tr.v_bn = Matrix<Real>(batch, n);
    for (std::size_t j = 0; j < n; ++j) {
        const double sigma = std::sqrt(static_cast<double>(bn.running_var[j]) +
                                       static_cast<double>(bn.eps));
        for (std::size_t b = 0; b < batch; ++b)
            tr.v_bn(b, j) = static_cast<Real>(
                static_cast<double>(bn.gamma[j]) * (v_raw(b, j) - bn.running_mean[j]) / sigma +
                static_cast<double>(bn.beta[j]));
    }
}

template <class Real>
Matrix<Real> surrogate_activation(const Matrix<Real>& v, double threshold, std::size_t t_e) {
    Matrix<Real> a(v.rows, v.cols);
    const double hi = static_cast<double>(t_e);
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x = static_cast<double>(v.v[i]) / threshold;
        a.v[i] = static_cast<Real>(std::clamp(x, 0.0, hi));
    }
    return a;
}

} // namespace detail

/// Full tandem forward pass over a minibatch of frames.
///
/// Per hidden layer: the analog path computes V^f from the previous layer's
/// spike counts and quantizes it to the pseudo count a^l; the spiking path
/// simulates the IF layer on the previous spike train with BN-folded
/// weights. The SNN-derived counts (never a^l) feed the next layer. In train
/// mode BN uses batch statistics on the analog path, running statistics are
/// updated, and dropout masks are sampled once per layer per frame and
/// applied identically to counts, trains, and analog activations; survivors
/// are compensated by folding 1/(1-p) into the next layer's effective input.
template <class Real>
ForwardTrace<Real> forward(TandemNetwork<Real>& net, const Matrix<Real>& features, bool train,
                           Rng* rng = nullptr, ForwardPath path = ForwardPath::Tandem) {
    if (features.cols != net.encoder.in_dim())
        detail::throw_shape("tandem forward", features.shape_str(), net.encoder.weights.shape_str());
    if (!all_finite(features)) throw NumericError("tandem forward: non-finite features");
    if (train && !rng) throw NumericError("tandem forward: train mode requires an rng");

    const std::size_t batch = features.rows;
    const bool snn = path == ForwardPath::Tandem;
    ForwardTrace<Real> trace;
    trace.train_mode = train;
    trace.path = path;
    trace.layers.resize(1 + net.hidden.size());

    // Folded weights for the spiking path, refreshed from running statistics
    // once per minibatch before any state update.
    std::vector<std::pair<Matrix<Real>, std::vector<Real>>> folded;
    if (snn) {
        folded.push_back(fold_batchnorm(net.encoder));
        for (const auto& l : net.hidden) folded.push_back(fold_batchnorm(l));
    }

    auto sample_mask = [&](const TandemLayer<Real>& layer, LayerTrace<Real>& tr) {
        if (!(train && layer.has_dropout && layer.dropout_rate > Real(0))) return;
        tr.mask = Matrix<Real>(batch, layer.out_dim());
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t j = 0; j < layer.out_dim(); ++j)
                tr.mask(b, j) = rng->bernoulli(layer.dropout_rate) ? Real(0) : Real(1);
    };
    auto apply_mask = [&](LayerTrace<Real>& tr) {
        if (tr.mask.size() == 0) return;
        for (std::size_t i = 0; i < tr.act.size(); ++i) tr.act.v[i] *= tr.mask.v[i];
        if (tr.counts.size())
            for (std::size_t i = 0; i < tr.counts.size(); ++i) tr.counts.v[i] *= tr.mask.v[i];
        for (std::size_t t = 0; t < tr.spikes.t_e; ++t)
            for (std::size_t i = 0; i < batch * tr.spikes.neurons; ++i)
                tr.spikes.bits[t * batch * tr.spikes.neurons + i] *=
                    tr.mask.v[i];
    };
    auto drop_scale = [&](const TandemLayer<Real>& layer) -> Real {
        if (train && layer.has_dropout && layer.dropout_rate > Real(0))
            return Real(1) / (Real(1) - layer.dropout_rate);
        return Real(1);
    };

    // --- encoder ---
    {
        LayerTrace<Real>& tr = trace.layers[0];
        tr.is_encoder = true;
        tr.x_input = features;
        tr.v_raw = affine_forward(features, net.encoder.weights, net.encoder.bias);
        if (net.encoder.has_bn) {
            if (train)
                detail::bn_forward_train(net.encoder.bn, tr.v_raw, tr, &net.encoder.bn);
            else
                detail::bn_forward_eval(net.encoder.bn, tr.v_raw, tr);
        } else {
            tr.v_bn = tr.v_raw;
        }
        tr.act = tr.v_bn;
        for (auto& x : tr.act.v) x = std::max(x, Real(0)); // ReLU a^0
        if (path == ForwardPath::AnnSurrogate)
            tr.act = detail::surrogate_activation(tr.act, net.cfg.threshold, net.cfg.t_e);
        if (snn) {
            IFLayerConfig ecfg = net.cfg;
            ecfg.in_dim = net.encoder.in_dim();
            ecfg.out_dim = net.encoder.out_dim();
            EncodeResult<Real> enc =
                encode_features(folded[0].first, folded[0].second, features, ecfg);
            tr.spikes = std::move(enc.train);
            tr.counts = std::move(enc.counts);
        }
        sample_mask(net.encoder, tr);
        apply_mask(tr);
    }

    // --- hidden layers ---
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
        const TandemLayer<Real>& layer = net.hidden[l];
        const TandemLayer<Real>& prev_layer = (l == 0) ? net.encoder : net.hidden[l - 1];
        LayerTrace<Real>& prev = trace.layers[l];
        LayerTrace<Real>& tr = trace.layers[l + 1];
        const Real s = drop_scale(prev_layer);

        const Matrix<Real>& carrier = snn ? prev.counts : prev.act;
        tr.x_input = carrier;
        if (s != Real(1))
            for (auto& x : tr.x_input.v) x *= s;

        tr.v_raw = affine_forward(tr.x_input, layer.weights, layer.bias);
        if (layer.has_bn) {
            if (train)
                detail::bn_forward_train(layer.bn, tr.v_raw, tr, &net.hidden[l].bn);
            else
                detail::bn_forward_eval(layer.bn, tr.v_raw, tr);
        } else {
            tr.v_bn = tr.v_raw;
        }
        tr.act = (path == ForwardPath::AnnSurrogate)
                     ? detail::surrogate_activation(tr.v_bn, net.cfg.threshold, net.cfg.t_e)
                     : pseudo_spike_count(tr.v_bn, net.cfg.threshold, net.cfg.t_e);
        if (snn) {
            IFLayerConfig hcfg = net.cfg;
            hcfg.in_dim = layer.in_dim();
            hcfg.out_dim = layer.out_dim();
            IFRunResult<Real> run =
                if_layer_run(hcfg, folded[l + 1].first, folded[l + 1].second, prev.spikes, s);
            tr.spikes = std::move(run.train);
            tr.counts = std::move(run.counts);
        }
        sample_mask(layer, tr);
        apply_mask(tr);
    }

    // --- decode ---
    {
        const TandemLayer<Real>& last_layer =
            net.hidden.empty() ? net.encoder : net.hidden.back();
        LayerTrace<Real>& last = trace.layers.back();
        const Real s = drop_scale(last_layer);
        const Matrix<Real>& carrier = snn ? last.counts : last.act;
        trace.x_out = carrier;
        if (s != Real(1))
            for (auto& x : trace.x_out.v) x *= s;
        trace.logits = decode_output(net.out_weights, net.out_bias, trace.x_out);
    }
    return trace;
}

/// SNN-only inference: encoder -> IF layers -> aggregate-potential decode.
/// No analog path, no dropout; BN must have populated running statistics.
/// Optionally records each layer's spike train (encoder output first).
template <class Real>
Matrix<Real> inference_forward(const TandemNetwork<Real>& net, const Matrix<Real>& features,
                               std::vector<SpikeTrain<Real>>* trains_out = nullptr) {
    if (features.cols != net.encoder.in_dim())
        detail::throw_shape("inference_forward", features.shape_str(),
                            net.encoder.weights.shape_str());
    auto [ew, eb] = fold_batchnorm(net.encoder);
    IFLayerConfig ecfg = net.cfg;
    EncodeResult<Real> enc = encode_features(ew, eb, features, ecfg);
    if (trains_out) trains_out->push_back(enc.train);
    SpikeTrain<Real> spikes = std::move(enc.train);
    Matrix<Real> counts = std::move(enc.counts);
    for (const auto& layer : net.hidden) {
        auto [w, b] = fold_batchnorm(layer);
        IFLayerConfig cfg = net.cfg;
        cfg.in_dim = layer.in_dim();
        cfg.out_dim = layer.out_dim();
        IFRunResult<Real> run = if_layer_run(cfg, w, b, spikes);
        if (trains_out) trains_out->push_back(run.train);
        spikes = std::move(run.train);
        counts = std::move(run.counts);
    }
    return decode_output(net.out_weights, net.out_bias, counts);
}

template <class Real = float>
struct LayerGrads {
    Matrix<Real> weights;
    std::vector<Real> bias, gamma, beta;
};

template <class Real = float>
struct NetGrads {
    LayerGrads<Real> encoder;
    std::vector<LayerGrads<Real>> hidden;
    Matrix<Real> out_weights;
    std::vector<Real> out_bias;
    double loss = 0.0;
};

namespace detail {

// Batch-statistics BN backward. Returns grad wrt v_raw; accumulates
// grad_gamma / grad_beta.
template <class Real>
Matrix<Real> bn_backward(const LayerTrace<Real>& tr, const std::vector<Real>& gamma,
                         const Matrix<Real>& g_vbn, std::vector<Real>& g_gamma,
                         std::vector<Real>& g_beta) {
    const std::size_t batch = g_vbn.rows, n = g_vbn.cols;
    Matrix<Real> g_raw(batch, n);
    for (std::size_t j = 0; j < n; ++j) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            sum_g += g_vbn(b, j);
            sum_gx += static_cast<double>(g_vbn(b, j)) * tr.xhat(b, j);
        }
        g_beta[j] = static_cast<Real>(sum_g);
        g_gamma[j] = static_cast<Real>(sum_gx);
        const double scale = static_cast<double>(gamma[j]) / tr.sigma[j];
        const double inv_b = 1.0 / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b)
            g_raw(b, j) = static_cast<Real>(
                scale * (g_vbn(b, j) - inv_b * sum_g - tr.xhat(b, j) * inv_b * sum_gx));
    }
    return g_raw;
}

} // namespace detail

/// Backward pass of the tandem rule: gradients flow through the analog path
/// only. The quantizer backpropagates as a hard-clamp straight-through
/// estimator: 1/threshold inside (0, threshold*t_e), zero outside. Dropout
/// backward reuses the stored masks.
template <class Real>
NetGrads<Real> backward(const TandemNetwork<Real>& net, const ForwardTrace<Real>& trace,
                        const std::vector<std::uint32_t>& labels) {
    if (!trace.train_mode)
        throw NumericError("tandem backward: trace was not produced in train mode");

    NetGrads<Real> g;
    g.hidden.resize(net.hidden.size());

    SoftmaxLoss<Real> sm = softmax_cross_entropy(trace.logits, labels);
    g.loss = sm.loss;

    AffineGrads<Real> og = affine_backward(sm.grad_logits, trace.x_out, net.out_weights);
    g.out_weights = std::move(og.grad_w);
    g.out_bias = std::move(og.grad_b);
    Matrix<Real> g_x = std::move(og.grad_in);

    const double th = net.cfg.threshold;
    const double sat = th * static_cast<double>(net.cfg.t_e);

    for (std::size_t li = trace.layers.size(); li-- > 0;) {
        const LayerTrace<Real>& tr = trace.layers[li];
        const TandemLayer<Real>& layer = (li == 0) ? net.encoder : net.hidden[li - 1];
        LayerGrads<Real>& lg = (li == 0) ? g.encoder : g.hidden[li - 1];

        // Consumer saw x = scale * mask .* act.
        const Real s = (trace.train_mode && layer.has_dropout && layer.dropout_rate > Real(0))
                           ? Real(1) / (Real(1) - layer.dropout_rate)
                           : Real(1);
        Matrix<Real> g_act = std::move(g_x);
        for (std::size_t i = 0; i < g_act.size(); ++i) {
            g_act.v[i] *= s;
            if (tr.mask.size()) g_act.v[i] *= tr.mask.v[i];
        }

        // Activation backward.
        Matrix<Real> g_vbn(g_act.rows, g_act.cols);
        if (tr.is_encoder) {
            // a0 = relu(v_bn); the emitted count is floor(a0/threshold),
            // straight-through inside the clamp window. The baseline path
            // consumed a0 directly, so only the ReLU gate applies there.
            for (std::size_t i = 0; i < g_act.size(); ++i) {
                const double a0 = std::max(static_cast<double>(tr.v_bn.v[i]), 0.0);
                double d = 0.0;
                if (trace.path == ForwardPath::AnnQuantized) {
                    d = tr.v_bn.v[i] > Real(0) ? 1.0 : 0.0;
                } else {
                    if (a0 > 0.0 && a0 < sat) d = (1.0 / th);
                }
                g_vbn.v[i] = static_cast<Real>(g_act.v[i] * d);
            }
        } else {
            for (std::size_t i = 0; i < g_act.size(); ++i) {
                const double v = tr.v_bn.v[i];
                const double d = (v > 0.0 && v < sat) ? (1.0 / th) : 0.0;
                g_vbn.v[i] = static_cast<Real>(g_act.v[i] * d);
            }
        }

        Matrix<Real> g_vraw;
        if (layer.has_bn) {
            lg.gamma.assign(layer.out_dim(), Real(0));
            lg.beta.assign(layer.out_dim(), Real(0));
            g_vraw = detail::bn_backward(tr, layer.bn.gamma, g_vbn, lg.gamma, lg.beta);
        } else {
            g_vraw = std::move(g_vbn);
        }

        AffineGrads<Real> ag = affine_backward(g_vraw, tr.x_input, layer.weights);
        lg.weights = std::move(ag.grad_w);
        lg.bias = std::move(ag.grad_b);
        g_x = std::move(ag.grad_in);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Model file: magic "TSNN", u16 version (=1), then u32 LE counts (t_e, layer
// count, per-layer in/out dims plus a flags byte for BN/dropout presence),
// then parameters as LE f32 in declaration order: weights row-major, bias,
// gamma, beta, mean, var, dropout_rate.

namespace detail {

constexpr std::uint16_t kModelVersion = 1;
constexpr std::uint8_t kFlagBn = 1;
constexpr std::uint8_t kFlagDropout = 2;

template <class Real>
void write_params(std::ostream& os, const TandemLayer<Real>& l) {
    for (Real x : l.weights.v) io::write_f32(os, static_cast<float>(x));
    for (Real x : l.bias) io::write_f32(os, static_cast<float>(x));
    if (l.has_bn) {
        for (Real x : l.bn.gamma) io::write_f32(os, static_cast<float>(x));
        for (Real x : l.bn.beta) io::write_f32(os, static_cast<float>(x));
        for (Real x : l.bn.running_mean) io::write_f32(os, static_cast<float>(x));
        for (Real x : l.bn.running_var) io::write_f32(os, static_cast<float>(x));
    }
    if (l.has_dropout) io::write_f32(os, static_cast<float>(l.dropout_rate));
}

template <class Real>
void read_params(std::istream& is, TandemLayer<Real>& l) {
    for (auto& x : l.weights.v) x = static_cast<Real>(io::read_f32(is, "weights"));
    for (auto& x : l.bias) x = static_cast<Real>(io::read_f32(is, "bias"));
    if (l.has_bn) {
        for (auto& x : l.bn.gamma) x = static_cast<Real>(io::read_f32(is, "bn gamma"));
        for (auto& x : l.bn.beta) x = static_cast<Real>(io::read_f32(is, "bn beta"));
        for (auto& x : l.bn.running_mean) x = static_cast<Real>(io::read_f32(is, "bn mean"));
        for (auto& x : l.bn.running_var) x = static_cast<Real>(io::read_f32(is, "bn var"));
    }
    if (l.has_dropout) l.dropout_rate = static_cast<Real>(io::read_f32(is, "dropout rate"));
}

} // namespace detail

template <class Real>
void serialize(const TandemNetwork<Real>& net, std::ostream& os) {
    os.write("TSNN", 4);
    io::write_u16(os, detail::kModelVersion);
    io::write_u32(os, static_cast<std::uint32_t>(net.cfg.t_e));
    const std::size_t n_layers = 2 + net.hidden.size(); // encoder + hidden + output
    io::write_u32(os, static_cast<std::uint32_t>(n_layers));
    auto write_header = [&](std::size_t in, std::size_t out, std::uint8_t flags) {
        io::write_u32(os, static_cast<std::uint32_t>(in));
        io::write_u32(os, static_cast<std::uint32_t>(out));
        io::write_u8(os, flags);
    };
    auto flags_of = [](const TandemLayer<Real>& l) {
        return static_cast<std::uint8_t>((l.has_bn ? detail::kFlagBn : 0) |
                                         (l.has_dropout ? detail::kFlagDropout : 0));
    };
    write_header(net.encoder.in_dim(), net.encoder.out_dim(), flags_of(net.encoder));
    for (const auto& l : net.hidden) write_header(l.in_dim(), l.out_dim(), flags_of(l));
    write_header(net.out_weights.cols, net.out_weights.rows, 0);

    detail::write_params(os, net.encoder);
    for (const auto& l : net.hidden) detail::write_params(os, l);
    for (Real x : net.out_weights.v) io::write_f32(os, static_cast<float>(x));
    for (Real x : net.out_bias) io::write_f32(os, static_cast<float>(x));
}

template <class Real = float>
TandemNetwork<Real> deserialize(std::istream& is) {
    io::expect_magic(is, "TSNN", "model file");
    const std::uint16_t version = io::read_u16(is, "model version");
    if (version != detail::kModelVersion)
        throw DataError("model file: unsupported version " + std::to_string(version) +
                        " (expected " + std::to_string(detail::kModelVersion) + ")");
    TandemNetwork<Real> net;
    net.cfg.t_e = io::read_u32(is, "model t_e");
    const std::uint32_t n_layers = io::read_u32(is, "model layer count");
    if (n_layers < 2) throw DataError("model file: layer count must be >= 2");

    struct Header {
        std::uint32_t in, out;
        std::uint8_t flags;
    };
    std::vector<Header> headers(n_layers);
    for (auto& h : headers) {
        h.in = io::read_u32(is, "layer in dim");
        h.out = io::read_u32(is, "layer out dim");
        h.flags = io::read_u8(is, "layer flags");
    }
    auto build_layer = [&](const Header& h) {
        TandemLayer<Real> l;
        l.weights = Matrix<Real>(h.out, h.in);
        l.bias.assign(h.out, Real(0));
        l.has_bn = (h.flags & detail::kFlagBn) != 0;
        if (l.has_bn) l.bn.init(h.out);
        l.has_dropout = (h.flags & detail::kFlagDropout) != 0;
        detail::read_params(is, l);
        return l;
    };
    net.encoder = build_layer(headers[0]);
    for (std::size_t i = 1; i + 1 < n_layers; ++i) net.hidden.push_back(build_layer(headers[i]));
    const Header& oh = headers[n_layers - 1];
    net.out_weights = Matrix<Real>(oh.out, oh.in);
    net.out_bias.assign(oh.out, Real(0));
    for (auto& x : net.out_weights.v) x = static_cast<Real>(io::read_f32(is, "output weights"));
    for (auto& x : net.out_bias) x = static_cast<Real>(io::read_f32(is, "output bias"));
    return net;
}

template <class Real>
std::string serialize_to_string(const TandemNetwork<Real>& net) {
    std::ostringstream os(std::ios::binary);
    serialize(net, os);
    return os.str();
}

template <class Real = float>
TandemNetwork<Real> deserialize_from_string(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return deserialize<Real>(is);
}

} // namespace tsnn
