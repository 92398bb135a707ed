#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tsnn/matrix.hpp"
#include "tsnn/rng.hpp"

namespace tsnn {

// A FeatureMatrix is frames x dim, row-major; one row per 10ms-style frame.
template <class Real = float>
using FeatureMatrix = Matrix<Real>;

struct FrameLabels {
    std::vector<std::uint32_t> labels;
    std::uint32_t class_count = 0;
};

struct ManifestEntry {
    std::string id;
    std::string feature_path;
    std::string label_path;
};

// ---------------------------------------------------------------------------
// File formats.
// Feature file: "FEA1", u32 frames, u32 dim, frames*dim LE f32 row-major.
// Label file:   "LAB1", u32 frames, u32 class_count, frames u32 labels.
// Manifest:     text, one line per utterance: <id>\t<feature-path>\t<label-path>

template <class Real = float>
FeatureMatrix<Real> load_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("feature file: cannot open " + path);
    io::expect_magic(is, "FEA1", "feature file");
    const std::uint32_t frames = io::read_u32(is, "feature frame count");
    const std::uint32_t dim = io::read_u32(is, "feature dim");
    FeatureMatrix<Real> m(frames, dim);
    const std::size_t expected = static_cast<std::size_t>(frames) * dim * 4;
    std::vector<char> buf(expected);
    is.read(buf.data(), static_cast<std::streamsize>(expected));
    const std::size_t got = static_cast<std::size_t>(is.gcount());
    if (got != expected)
        throw DataError("feature file: truncated payload in " + path + " (expected " +
                        std::to_string(expected) + " bytes, got " + std::to_string(got) + ")");
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::uint32_t u = 0;
        for (int k = 0; k < 4; ++k)
            u |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[i * 4 + k])) << (8 * k);
        float f;
        std::memcpy(&f, &u, 4);
        m.v[i] = static_cast<Real>(f);
    }
    return m;
}

template <class Real>
void save_features(const std::string& path, const FeatureMatrix<Real>& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("feature file: cannot write " + path);
    os.write("FEA1", 4);
    io::write_u32(os, static_cast<std::uint32_t>(m.rows));
    io::write_u32(os, static_cast<std::uint32_t>(m.cols));
    for (Real x : m.v) io::write_f32(os, static_cast<float>(x));
    if (!os) throw DataError("feature file: write failed for " + path);
}

inline FrameLabels load_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("label file: cannot open " + path);
    io::expect_magic(is, "LAB1", "label file");
    const std::uint32_t frames = io::read_u32(is, "label frame count");
    FrameLabels l;
    l.class_count = io::read_u32(is, "label class count");
    l.labels.resize(frames);
    for (auto& x : l.labels) {
        x = io::read_u32(is, "label payload");
        if (x >= l.class_count)
            throw DataError("label file: label " + std::to_string(x) + " out of range in " + path);
    }
    return l;
}

inline void save_labels(const std::string& path, const FrameLabels& l) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("label file: cannot write " + path);
    os.write("LAB1", 4);
    io::write_u32(os, static_cast<std::uint32_t>(l.labels.size()));
    io::write_u32(os, l.class_count);
    for (std::uint32_t x : l.labels) io::write_u32(os, x);
    if (!os) throw DataError("label file: write failed for " + path);
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("manifest: cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = (t1 == std::string::npos) ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw DataError("manifest: line " + std::to_string(lineno) + " of " + path +
                            " is not <id>\\t<feature-path>\\t<label-path>");
        entries.push_back({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                           line.substr(t2 + 1)});
    }
    return entries;
}

inline void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw DataError("manifest: cannot write " + path);
    for (const auto& e : entries) os << e.id << '\t' << e.feature_path << '\t' << e.label_path << '\n';
}

// ---------------------------------------------------------------------------
// Preprocessing. Fixed pipeline order: deltas -> normalization -> splicing.

/// Regression deltas with window W (default 2), edges replicated:
/// d_t = sum_{n=1..W} n*(o_{t+n} - o_{t-n}) / (2*sum n^2). Delta-deltas apply
/// the same operator again; output is [static, delta, delta-delta].
template <class Real>
FeatureMatrix<Real> compute_deltas(const FeatureMatrix<Real>& feat, std::size_t window = 2) {
    const std::size_t T = feat.rows, D = feat.cols;
    double denom = 0.0;
    for (std::size_t n = 1; n <= window; ++n) denom += static_cast<double>(n) * n;
    denom *= 2.0;
    auto clampi = [&](std::ptrdiff_t t) {
        return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, static_cast<std::ptrdiff_t>(T) - 1));
    };
    auto delta_of = [&](const FeatureMatrix<Real>& src) {
        FeatureMatrix<Real> d(T, D);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t n = 1; n <= window; ++n) {
                const Real* fwd = src.row(clampi(static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(n)));
                const Real* bwd = src.row(clampi(static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(n)));
                Real* out = d.row(t);
                for (std::size_t i = 0; i < D; ++i)
                    out[i] += static_cast<Real>(static_cast<double>(n) * (fwd[i] - bwd[i]) / denom);
            }
        return d;
    };
    FeatureMatrix<Real> d1 = delta_of(feat);
    FeatureMatrix<Real> d2 = delta_of(d1);
    FeatureMatrix<Real> out(T, 3 * D);
    for (std::size_t t = 0; t < T; ++t) {
        std::copy(feat.row(t), feat.row(t) + D, out.row(t));
        std::copy(d1.row(t), d1.row(t) + D, out.row(t) + D);
        std::copy(d2.row(t), d2.row(t) + D, out.row(t) + 2 * D);
    }
    return out;
}

template <class Real = float>
struct NormStats {
    std::vector<Real> mean, std;
};

template <class Real>
NormStats<Real> feature_stats(const FeatureMatrix<Real>& feat) {
    const std::size_t T = feat.rows, D = feat.cols;
    NormStats<Real> s;
    s.mean.assign(D, Real(0));
    s.std.assign(D, Real(0));
    for (std::size_t j = 0; j < D; ++j) {
        double mu = 0.0;
        for (std::size_t t = 0; t < T; ++t) mu += feat(t, j);
        mu /= static_cast<double>(T);
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = feat(t, j) - mu;
            var += d * d;
        }
        var /= static_cast<double>(T);
        s.mean[j] = static_cast<Real>(mu);
        s.std[j] = static_cast<Real>(std::max(std::sqrt(var), 1e-8));
    }
    return s;
}

template <class Real>
void apply_normalization(FeatureMatrix<Real>& feat, const NormStats<Real>& s) {
    for (std::size_t t = 0; t < feat.rows; ++t) {
        Real* row = feat.row(t);
        for (std::size_t j = 0; j < feat.cols; ++j) row[j] = (row[j] - s.mean[j]) / s.std[j];
    }
}

/// Per-dimension mean/variance normalization over the utterance. Constant
/// dimensions zero out (std floored at 1e-8).
template <class Real>
NormStats<Real> normalize(FeatureMatrix<Real>& feat) {
    NormStats<Real> s = feature_stats(feat);
    apply_normalization(feat, s);
    return s;
}

/// Frame t's output row concatenates input rows t-left .. t+right, with
/// out-of-range indices replicated from the first/last frame.
template <class Real>
FeatureMatrix<Real> splice_context(const FeatureMatrix<Real>& feat, std::size_t left = 5,
                                   std::size_t right = 5) {
    const std::size_t T = feat.rows, D = feat.cols;
    FeatureMatrix<Real> out(T, D * (left + 1 + right));
    for (std::size_t t = 0; t < T; ++t) {
        Real* dst = out.row(t);
        for (std::size_t k = 0; k < left + 1 + right; ++k) {
            const std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) -
                                         static_cast<std::ptrdiff_t>(left);
            const std::size_t tt = static_cast<std::size_t>(
                std::clamp<std::ptrdiff_t>(src_t, 0, static_cast<std::ptrdiff_t>(T) - 1));
            std::copy(feat.row(tt), feat.row(tt) + D, dst + k * D);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data: Gaussian clusters with unit covariance, class means pairwise
// `separation` apart (means sit on scaled coordinate axes).

template <class Real = float>
std::pair<FeatureMatrix<Real>, FrameLabels> gen_synthetic(Rng& rng, std::size_t classes,
                                                          std::size_t dim,
                                                          std::size_t frames_per_class,
                                                          double separation) {
    if (classes < 2) throw DataError("gen_synthetic: need at least 2 classes");
    if (classes > dim) throw DataError("gen_synthetic: classes must not exceed dim");
    const std::size_t total = classes * frames_per_class;
    FeatureMatrix<Real> feat(total, dim);
    FrameLabels labels;
    labels.class_count = static_cast<std::uint32_t>(classes);
    labels.labels.resize(total);
    const double axis = separation / std::sqrt(2.0); // pairwise distance == separation
    for (std::size_t t = 0; t < total; ++t) {
        const std::size_t cls = t % classes;
        labels.labels[t] = static_cast<std::uint32_t>(cls);
        Real* row = feat.row(t);
        for (std::size_t j = 0; j < dim; ++j)
            row[j] = static_cast<Real>(rng.normal() + (j == cls ? axis : 0.0));
    }
    return {feat, labels};
}

// ---------------------------------------------------------------------------
// Minibatching: frame-level shuffle per epoch; every frame exactly once; the
// last batch may be short.

inline std::vector<std::vector<std::uint32_t>> make_batches(std::size_t n_frames,
                                                            std::size_t batch_size, Rng& rng,
                                                            bool shuffle) {
    std::vector<std::uint32_t> order(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) order[i] = static_cast<std::uint32_t>(i);
    if (shuffle) {
        for (std::size_t i = n_frames; i > 1; --i) {
            const std::size_t j = rng.index(i);
            std::swap(order[i - 1], order[j]);
        }
    }
    std::vector<std::vector<std::uint32_t>> batches;
    for (std::size_t start = 0; start < n_frames; start += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(start + batch_size, n_frames)));
    return batches;
}

template <class Real>
Matrix<Real> gather_rows(const Matrix<Real>& src, const std::vector<std::uint32_t>& idx) {
    Matrix<Real> out(idx.size(), src.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(src.row(idx[i]), src.row(idx[i]) + src.cols, out.row(i));
    return out;
}

inline std::vector<std::uint32_t> gather_labels(const std::vector<std::uint32_t>& src,
                                                const std::vector<std::uint32_t>& idx) {
    std::vector<std::uint32_t> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = src[idx[i]];
    return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly: manifest -> preprocessed frames ready for the network.

enum class NormMode { None, PerUtterance, Global };

struct PipelineConfig {
    bool deltas = true;
    std::size_t delta_window = 2;
    NormMode norm = NormMode::PerUtterance;
    std::size_t splice_left = 5;
    std::size_t splice_right = 5;
    bool splice = true;
};

template <class Real = float>
struct Dataset {
    Matrix<Real> features;  // all frames, preprocessed
    std::vector<std::uint32_t> labels;
    std::uint32_t class_count = 0;
    std::vector<std::string> utt_ids;
    std::vector<std::pair<std::size_t, std::size_t>> utt_ranges; // [begin, end) frame spans

    std::size_t frames() const { return features.rows; }
};

template <class Real = float>
Dataset<Real> load_dataset(const std::string& manifest_path, const PipelineConfig& cfg) {
    const auto entries = load_manifest(manifest_path);
    if (entries.empty()) throw DataError("manifest: no utterances in " + manifest_path);

    std::vector<FeatureMatrix<Real>> utts;
    Dataset<Real> ds;
    for (const auto& e : entries) {
        FeatureMatrix<Real> f = load_features<Real>(e.feature_path);
        FrameLabels l = load_labels(e.label_path);
        if (l.labels.size() != f.rows)
            throw DataError("dataset: frame count mismatch for utterance " + e.id + " (" +
                            std::to_string(f.rows) + " feature frames vs " +
                            std::to_string(l.labels.size()) + " labels)");
        if (ds.class_count == 0)
            ds.class_count = l.class_count;
        else if (ds.class_count != l.class_count)
            throw DataError("dataset: class count mismatch for utterance " + e.id);
        if (cfg.deltas) f = compute_deltas(f, cfg.delta_window);
        if (cfg.norm == NormMode::PerUtterance) normalize(f);
        utts.push_back(std::move(f));
        ds.utt_ids.push_back(e.id);
        ds.labels.insert(ds.labels.end(), l.labels.begin(), l.labels.end());
    }
    if (cfg.norm == NormMode::Global) {
        // Two-pass: stats over all frames, then apply per utterance.
        std::size_t total = 0;
        for (const auto& u : utts) total += u.rows;
        FeatureMatrix<Real> all(total, utts[0].cols);
        std::size_t off = 0;
        for (const auto& u : utts) {
            std::copy(u.v.begin(), u.v.end(), all.v.begin() + static_cast<std::ptrdiff_t>(off));
            off += u.size();
        }
        NormStats<Real> s = feature_stats(all);
        for (auto& u : utts) apply_normalization(u, s);
    }

    std::size_t total = 0;
    for (auto& u : utts) {
        if (cfg.splice) u = splice_context(u, cfg.splice_left, cfg.splice_right);
        total += u.rows;
    }
    ds.features = Matrix<Real>(total, utts[0].cols);
    std::size_t frame = 0;
    for (const auto& u : utts) {
        ds.utt_ranges.emplace_back(frame, frame + u.rows);
        std::copy(u.v.begin(), u.v.end(),
                  ds.features.v.begin() + static_cast<std::ptrdiff_t>(frame * ds.features.cols));
        frame += u.rows;
    }
    return ds;
}

} // namespace tsnn
