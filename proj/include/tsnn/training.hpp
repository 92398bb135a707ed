#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tsnn/data.hpp"
#include "tsnn/tandem.hpp"

namespace tsnn {

struct TrainConfig {
    double lr0 = 0.08;
    std::size_t batch = 128;
    double halving_threshold = 0.001;
    std::size_t max_epochs = 24;
    std::uint64_t seed = 0;
    double grad_clip = 0.0; // elementwise cap; 0 disables
    ForwardPath path = ForwardPath::Tandem;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_acc = 0.0;
    double lr = 0.0;
};

struct TrainState {
    std::size_t epoch = 0;
    double lr = 0.0;
    double best_metric = -1.0;
    std::vector<EpochRecord> history;
};

namespace detail {

template <class Real>
void check_finite_grad(const Matrix<Real>& g, const char* layer) {
    if (!all_finite(g))
        throw NumericError(std::string("sgd_step: non-finite gradient in ") + layer);
}

template <class Real>
void sgd_apply(Matrix<Real>& p, const Matrix<Real>& g, double lr, double clip, const char* layer) {
    if (!p.same_shape(g)) throw_shape("sgd_step", p.shape_str(), g.shape_str());
    check_finite_grad(g, layer);
    for (std::size_t i = 0; i < p.size(); ++i) {
        double gi = g.v[i];
        if (clip > 0.0) gi = std::clamp(gi, -clip, clip);
        p.v[i] = static_cast<Real>(p.v[i] - lr * gi);
    }
}

template <class Real>
void sgd_apply(std::vector<Real>& p, const std::vector<Real>& g, double lr, double clip,
               const char* layer) {
    if (p.size() != g.size())
        throw DimensionError(std::string("sgd_step: vector size mismatch in ") + layer);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i];
        if (!std::isfinite(gi))
            throw NumericError(std::string("sgd_step: non-finite gradient in ") + layer);
        p[i] = static_cast<Real>(p[i] - lr * (clip > 0.0 ? std::clamp(gi, -clip, clip) : gi));
    }
}

} // namespace detail

/// Plain SGD: p <- p - lr*g for every parameter. No momentum, no decay.
template <class Real>
void sgd_step(TandemNetwork<Real>& net, const NetGrads<Real>& grads, double lr,
              double grad_clip = 0.0) {
    auto step_layer = [&](TandemLayer<Real>& l, const LayerGrads<Real>& g, const char* name) {
        detail::sgd_apply(l.weights, g.weights, lr, grad_clip, name);
        detail::sgd_apply(l.bias, g.bias, lr, grad_clip, name);
        if (l.has_bn) {
            detail::sgd_apply(l.bn.gamma, g.gamma, lr, grad_clip, name);
            detail::sgd_apply(l.bn.beta, g.beta, lr, grad_clip, name);
        }
    };
    step_layer(net.encoder, grads.encoder, "encoder");
    for (std::size_t i = 0; i < net.hidden.size(); ++i) {
        const std::string name = "hidden[" + std::to_string(i) + "]";
        step_layer(net.hidden[i], grads.hidden[i], name.c_str());
    }
    detail::sgd_apply(net.out_weights, grads.out_weights, lr, grad_clip, "output");
    detail::sgd_apply(net.out_bias, grads.out_bias, lr, grad_clip, "output");
}

/// Halve the learning rate when the dev-metric improvement over the best seen
/// so far falls below the threshold; best-so-far tracks the maximum.
inline void lr_schedule_update(TrainState& state, double dev_metric, double halving_threshold) {
    const double improvement = dev_metric - state.best_metric;
    if (improvement < halving_threshold) state.lr *= 0.5;
    state.best_metric = std::max(state.best_metric, dev_metric);
}

/// One SGD epoch over the dataset. Returns the mean training loss
/// (frame-weighted over batches).
template <class Real>
double train_epoch(TandemNetwork<Real>& net, const Dataset<Real>& data, const TrainConfig& cfg,
                   const TrainState& state, Rng& rng) {
    if (data.frames() == 0) throw DataError("train_epoch: empty dataset");
    const auto batches = make_batches(data.frames(), cfg.batch, rng, /*shuffle=*/true);
    double total_loss = 0.0;
    for (const auto& idx : batches) {
        Matrix<Real> x = gather_rows(data.features, idx);
        std::vector<std::uint32_t> y = gather_labels(data.labels, idx);
        ForwardTrace<Real> trace = forward(net, x, /*train=*/true, &rng, cfg.path);
        NetGrads<Real> grads = backward(net, trace, y);
        sgd_step(net, grads, state.lr, cfg.grad_clip);
        total_loss += grads.loss * static_cast<double>(idx.size());
    }
    return total_loss / static_cast<double>(data.frames());
}

struct EvalResult {
    double frame_accuracy = 0.0;
    double mean_loss = 0.0;
};

/// Frame accuracy and mean loss under SNN-only inference (tandem path) or
/// the analog forward for baseline networks.
template <class Real>
EvalResult evaluate(TandemNetwork<Real>& net, const Dataset<Real>& data,
                    ForwardPath path = ForwardPath::Tandem, std::size_t batch = 256) {
    if (data.frames() == 0) throw DataError("evaluate: empty dataset");
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < data.frames(); start += batch) {
        const std::size_t end = std::min(start + batch, data.frames());
        std::vector<std::uint32_t> idx(end - start);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(start + i);
        Matrix<Real> x = gather_rows(data.features, idx);
        std::vector<std::uint32_t> y = gather_labels(data.labels, idx);
        Matrix<Real> logits = (path == ForwardPath::Tandem)
                                  ? inference_forward(net, x)
                                  : forward(net, x, /*train=*/false, nullptr, path).logits;
        SoftmaxLoss<Real> sm = softmax_cross_entropy(logits, y);
        loss += sm.loss * static_cast<double>(idx.size());
        for (std::size_t b = 0; b < logits.rows; ++b) {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < logits.cols; ++j)
                if (logits(b, j) > logits(b, arg)) arg = j;
            if (arg == y[b]) ++correct;
        }
    }
    EvalResult r;
    r.mean_loss = loss / static_cast<double>(data.frames());
    r.frame_accuracy = static_cast<double>(correct) / static_cast<double>(data.frames());
    return r;
}

struct TrainRunResult {
    TrainState state;
    std::string best_model; // serialized bytes of the best-dev checkpoint
    double best_dev_acc = 0.0;
};

/// Full training loop: per epoch train, evaluate on dev, update the halving
/// schedule, checkpoint at best dev accuracy. `log` (optional) gets one
/// tab-separated line per epoch: epoch, train_loss, dev_acc, lr.
template <class Real>
TrainRunResult train_loop(TandemNetwork<Real>& net, const Dataset<Real>& train_set,
                          const Dataset<Real>& dev_set, const TrainConfig& cfg,
                          std::ostream* log = nullptr) {
    Rng rng(cfg.seed);
    TrainRunResult out;
    out.state.lr = cfg.lr0;
    out.best_model = serialize_to_string(net);
    out.best_dev_acc = -1.0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        out.state.epoch = epoch;
        const double train_loss = train_epoch(net, train_set, cfg, out.state, rng);
        const EvalResult dev = evaluate(net, dev_set, cfg.path);
        out.state.history.push_back({epoch, train_loss, dev.frame_accuracy, out.state.lr});
        if (log) {
            (*log) << epoch << '\t' << train_loss << '\t' << dev.frame_accuracy << '\t'
                   << out.state.lr << '\n';
            log->flush();
        }
        if (dev.frame_accuracy > out.best_dev_acc) {
            out.best_dev_acc = dev.frame_accuracy;
            out.best_model = serialize_to_string(net);
        }
        lr_schedule_update(out.state, dev.frame_accuracy, cfg.halving_threshold);
    }
    return out;
}

} // namespace tsnn
