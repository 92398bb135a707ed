#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tsnn/data.hpp"
#include "tsnn/tandem.hpp"

namespace tsnn {

/// Synaptic-operation accounting for one profiling run. ANN cost is
/// multiply-accumulate (MAC) events per weighted layer; SNN cost is
/// accumulate (AC) events, one per spike per fan-out connection. Bias
/// injections are not counted on either side.
struct SynOpsReport {
    std::vector<std::string> layer_names;
    std::vector<std::uint64_t> per_layer_ann; // MACs
    std::vector<std::uint64_t> per_layer_snn; // ACs
    std::vector<double> per_layer_spike_rate; // mean spikes per neuron per frame
    std::uint64_t ann_total = 0;
    std::uint64_t snn_total = 0;
    double ratio = 0.0; // snn_total / ann_total
    std::size_t frames_profiled = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> utterance_ids;
    std::vector<std::uint64_t> per_utterance_snn;
    std::vector<std::uint64_t> per_utterance_ann;
};

struct SpikeRateStats {
    std::vector<double> mean_per_layer; // in [0, t_e]
};

/// Weighted-layer fan-in dimensions of the network, encoder through output.
template <class Real>
std::vector<std::pair<std::size_t, std::size_t>> weighted_layer_dims(const TandemNetwork<Real>& net) {
    std::vector<std::pair<std::size_t, std::size_t>> dims;
    dims.emplace_back(net.encoder.in_dim(), net.encoder.out_dim());
    for (const auto& l : net.hidden) dims.emplace_back(l.in_dim(), l.out_dim());
    dims.emplace_back(net.out_weights.cols, net.out_weights.rows);
    return dims;
}

/// ANN SynOps: each weighted layer costs in_dim*out_dim MACs per frame,
/// independent of the input values.
template <class Real>
std::vector<std::uint64_t> count_ann_synops(const TandemNetwork<Real>& net, std::size_t frames) {
    std::vector<std::uint64_t> per_layer;
    for (const auto& [in, out] : weighted_layer_dims(net))
        per_layer.push_back(static_cast<std::uint64_t>(in) * out * frames);
    return per_layer;
}

/// SNN SynOps from recorded spike trains: every spike contributes AC events
/// equal to its source neuron's fan-out into the next layer. Records run
/// from the encoder output through the last hidden layer (the layer that
/// fans out into the decode layer).
template <class Real>
std::vector<std::uint64_t> count_snn_synops(const TandemNetwork<Real>& net,
                                            const std::vector<SpikeTrain<Real>>& records) {
    if (records.size() != 1 + net.hidden.size())
        throw DimensionError("count_snn_synops: got " + std::to_string(records.size()) +
                             " layer records, network has " +
                             std::to_string(1 + net.hidden.size()) + " spiking layers");
    std::vector<std::uint64_t> per_layer;
    for (std::size_t l = 0; l < records.size(); ++l) {
        const std::size_t fan_out =
            (l < net.hidden.size()) ? net.hidden[l].out_dim() : net.out_weights.rows;
        const std::size_t expect_n =
            (l == 0) ? net.encoder.out_dim() : net.hidden[l - 1].out_dim();
        if (records[l].neurons != expect_n)
            throw DimensionError("count_snn_synops: record " + std::to_string(l) + " has " +
                                 std::to_string(records[l].neurons) + " neurons, expected " +
                                 std::to_string(expect_n));
        std::uint64_t spikes = 0;
        for (Real b : records[l].bits)
            if (b != Real(0)) ++spikes;
        per_layer.push_back(spikes * fan_out);
    }
    return per_layer;
}

/// Mean spike count per neuron per frame, per layer.
template <class Real>
SpikeRateStats spike_rate_per_layer(const std::vector<SpikeTrain<Real>>& records) {
    if (records.empty()) throw DataError("spike_rate_per_layer: no records");
    SpikeRateStats stats;
    for (const auto& rec : records) {
        std::uint64_t spikes = 0;
        for (Real b : rec.bits)
            if (b != Real(0)) ++spikes;
        stats.mean_per_layer.push_back(static_cast<double>(spikes) /
                                       (static_cast<double>(rec.batch) * rec.neurons));
    }
    return stats;
}

/// Runs SNN inference on n randomly chosen utterances (seeded sampling
/// without replacement), capturing spike traces, and assembles the report.
template <class Real>
SynOpsReport synops_ratio_report(TandemNetwork<Real>& net, const Dataset<Real>& data,
                                 std::size_t n_utterances, Rng& rng) {
    if (data.utt_ids.size() < n_utterances)
        throw DataError("synops_ratio_report: dataset has " + std::to_string(data.utt_ids.size()) +
                        " utterances, need " + std::to_string(n_utterances));
    std::vector<std::uint32_t> pool(data.utt_ids.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
    pool.resize(n_utterances);

    SynOpsReport report;
    const auto dims = weighted_layer_dims(net);
    report.layer_names.push_back("encoder");
    for (std::size_t i = 0; i < net.hidden.size(); ++i)
        report.layer_names.push_back("hidden" + std::to_string(i + 1));
    report.layer_names.push_back("output");
    report.per_layer_ann.assign(dims.size(), 0);
    report.per_layer_snn.assign(dims.size(), 0);
    report.per_layer_spike_rate.assign(dims.size(), 0.0);
    std::vector<std::uint64_t> spike_totals(dims.size(), 0);
    std::vector<std::uint64_t> neuron_frames(dims.size(), 0);

    for (std::uint32_t u : pool) {
        const auto [begin, end] = data.utt_ranges[u];
        std::vector<std::uint32_t> idx(end - begin);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::uint32_t>(begin + i);
        Matrix<Real> x = gather_rows(data.features, idx);

        std::vector<SpikeTrain<Real>> trains;
        inference_forward(net, x, &trains);
        const auto snn = count_snn_synops(net, trains);
        const auto ann = count_ann_synops(net, idx.size());
        std::uint64_t utt_snn = 0, utt_ann = 0;
        for (std::size_t l = 0; l < dims.size(); ++l) {
            report.per_layer_ann[l] += ann[l];
            utt_ann += ann[l];
        }
        // SNN records cover the spiking layers only; layer l's record feeds
        // weighted layer l+1. Attribute the ACs to the consuming layer.
        for (std::size_t l = 0; l < snn.size(); ++l) {
            report.per_layer_snn[l + 1] += snn[l];
            utt_snn += snn[l];
        }
        for (std::size_t l = 0; l < trains.size(); ++l) {
            std::uint64_t spikes = 0;
            for (Real b : trains[l].bits)
                if (b != Real(0)) ++spikes;
            spike_totals[l] += spikes;
            neuron_frames[l] += static_cast<std::uint64_t>(trains[l].batch) * trains[l].neurons;
        }
        report.utterance_ids.push_back(data.utt_ids[u]);
        report.per_utterance_snn.push_back(utt_snn);
        report.per_utterance_ann.push_back(utt_ann);
        report.frames_profiled += idx.size();
    }
    for (std::uint64_t x : report.per_layer_ann) report.ann_total += x;
    for (std::uint64_t x : report.per_layer_snn) report.snn_total += x;
    // Spike rates indexed like layer_names: rate of the layer's own output.
    for (std::size_t l = 0; l < spike_totals.size(); ++l)
        if (neuron_frames[l] > 0)
            report.per_layer_spike_rate[l] =
                static_cast<double>(spike_totals[l]) / static_cast<double>(neuron_frames[l]);
    report.ratio = report.ann_total > 0
                       ? static_cast<double>(report.snn_total) / static_cast<double>(report.ann_total)
                       : 0.0;
    return report;
}

inline void write_report_csv(std::ostream& os, const SynOpsReport& r) {
    os << "layer,ann_macs,snn_acs,mean_spike_rate\n";
    for (std::size_t l = 0; l < r.layer_names.size(); ++l)
        os << r.layer_names[l] << ',' << r.per_layer_ann[l] << ',' << r.per_layer_snn[l] << ','
           << r.per_layer_spike_rate[l] << '\n';
    os << "total," << r.ann_total << ',' << r.snn_total << ",\n";
}

} // namespace tsnn
