#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "tsnn/data.hpp"

using namespace tsnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("tsnn_data_test_" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("feature file round-trip and fixture values") {
    TempDir tmp;
    FeatureMatrix<float> m(2, 3);
    float vals[] = {1.5f, -2.0f, 0.25f, 3.0f, 0.0f, -1.0f};
    std::copy(vals, vals + 6, m.v.begin());
    save_features(tmp.file("a.fea"), m);
    auto back = load_features<float>(tmp.file("a.fea"));
    CHECK(back.rows == 2);
    CHECK(back.cols == 3);
    for (std::size_t i = 0; i < 6; ++i) CHECK(back.v[i] == vals[i]);
}

TEST_CASE("empty feature file is a format error") {
    TempDir tmp;
    std::ofstream(tmp.file("empty.fea")).close();
    CHECK_THROWS_AS(load_features<float>(tmp.file("empty.fea")), DataError);
}

TEST_CASE("truncated feature payload names expected and actual byte counts") {
    TempDir tmp;
    FeatureMatrix<float> m(4, 5, 1.0f);
    save_features(tmp.file("t.fea"), m);
    // chop the payload
    auto size = fs::file_size(tmp.file("t.fea"));
    fs::resize_file(tmp.file("t.fea"), size - 10);
    try {
        load_features<float>(tmp.file("t.fea"));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("80") != std::string::npos); // expected bytes
        CHECK(msg.find("70") != std::string::npos); // actual bytes
    }
}

TEST_CASE("missing feature file is a distinct error") {
    CHECK_THROWS_AS(load_features<float>("/nonexistent/nope.fea"), DataError);
}

TEST_CASE("label file round-trip and range check") {
    TempDir tmp;
    FrameLabels l;
    l.class_count = 3;
    l.labels = {0, 2, 1, 1};
    save_labels(tmp.file("a.lab"), l);
    auto back = load_labels(tmp.file("a.lab"));
    CHECK(back.class_count == 3);
    CHECK(back.labels == l.labels);

    // write an out-of-range label manually
    std::ofstream os(tmp.file("bad.lab"), std::ios::binary);
    os.write("LAB1", 4);
    io::write_u32(os, 1);
    io::write_u32(os, 3);
    io::write_u32(os, 7);
    os.close();
    CHECK_THROWS_AS(load_labels(tmp.file("bad.lab")), DataError);
}

TEST_CASE("deltas of a constant signal vanish") {
    FeatureMatrix<float> m(6, 2, 3.5f);
    auto d = compute_deltas(m);
    CHECK(d.cols == 6);
    for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t j = 2; j < 6; ++j) CHECK(d(t, j) == doctest::Approx(0.0));
}

TEST_CASE("deltas of a single frame vanish by edge replication") {
    FeatureMatrix<float> m(1, 3);
    m(0, 0) = 1;
    m(0, 1) = -4;
    m(0, 2) = 9;
    auto d = compute_deltas(m);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(d(0, j) == m(0, j));
        CHECK(d(0, 3 + j) == 0.0f);
        CHECK(d(0, 6 + j) == 0.0f);
    }
}

TEST_CASE("delta of a linear ramp is 1 at interior frames") {
    FeatureMatrix<float> m(9, 1);
    for (std::size_t t = 0; t < 9; ++t) m(t, 0) = static_cast<float>(t);
    auto d = compute_deltas(m, 2);
    // interior: (1*2 + 2*4) / (2*5) = 1
    CHECK(d(4, 1) == doctest::Approx(1.0));
    CHECK(d(4, 2) == doctest::Approx(0.0)); // delta-delta of linear
}

TEST_CASE("normalize yields zero mean unit variance and is idempotent") {
    Rng rng(3);
    FeatureMatrix<float> m(50, 4);
    for (auto& x : m.v) x = static_cast<float>(rng.uniform(-5, 5));
    normalize(m);
    auto s = feature_stats(m);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(s.mean[j]) < 1e-6);
        CHECK(std::abs(s.std[j] * s.std[j] - 1.0f) < 1e-5);
    }
    FeatureMatrix<float> again = m;
    normalize(again);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(again.v[i] - m.v[i]) < 1e-5);
}

TEST_CASE("constant dimension zeroes out under the std floor") {
    FeatureMatrix<float> m(10, 2);
    for (std::size_t t = 0; t < 10; ++t) {
        m(t, 0) = 4.0f;
        m(t, 1) = static_cast<float>(t);
    }
    normalize(m);
    for (std::size_t t = 0; t < 10; ++t) CHECK(m(t, 0) == 0.0f);
}

TEST_CASE("splice replicates edges and matches the index oracle") {
    FeatureMatrix<float> one(1, 4);
    for (std::size_t j = 0; j < 4; ++j) one(0, j) = static_cast<float>(j);
    auto s1 = splice_context(one);
    CHECK(s1.cols == 44);
    for (std::size_t k = 0; k < 11; ++k)
        for (std::size_t j = 0; j < 4; ++j) CHECK(s1(0, k * 4 + j) == one(0, j));

    FeatureMatrix<float> ramp(20, 40);
    for (std::size_t t = 0; t < 20; ++t)
        for (std::size_t j = 0; j < 40; ++j) ramp(t, j) = static_cast<float>(t * 100 + j);
    auto sp = splice_context(ramp);
    CHECK(sp.cols == 440);
    for (std::size_t t = 0; t < 20; ++t)
        for (std::size_t k = 0; k < 11; ++k) {
            const std::size_t src = static_cast<std::size_t>(
                std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(k) - 5, 0, 19));
            for (std::size_t j = 0; j < 40; ++j) CHECK(sp(t, k * 40 + j) == ramp(src, j));
        }
}

TEST_CASE("synthetic data separates when asked to") {
    Rng rng(5);
    auto [feat, labels] = gen_synthetic<float>(rng, 4, 20, 250, 8.0);
    REQUIRE(feat.rows == 1000);
    // nearest-mean oracle
    std::vector<std::vector<double>> means(4, std::vector<double>(20, 0.0));
    std::vector<std::size_t> n(4, 0);
    for (std::size_t t = 0; t < feat.rows; ++t) {
        for (std::size_t j = 0; j < 20; ++j) means[labels.labels[t]][j] += feat(t, j);
        ++n[labels.labels[t]];
    }
    for (std::size_t k = 0; k < 4; ++k)
        for (auto& x : means[k]) x /= static_cast<double>(n[k]);
    std::size_t correct = 0;
    for (std::size_t t = 0; t < feat.rows; ++t) {
        std::size_t arg = 0;
        double best = 1e300;
        for (std::size_t k = 0; k < 4; ++k) {
            double d = 0;
            for (std::size_t j = 0; j < 20; ++j) {
                const double diff = feat(t, j) - means[k][j];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                arg = k;
            }
        }
        if (arg == labels.labels[t]) ++correct;
    }
    CHECK(static_cast<double>(correct) / 1000.0 > 0.99);
}

TEST_CASE("synthetic data is deterministic per seed") {
    Rng a(9), b(9);
    auto da = gen_synthetic<float>(a, 3, 8, 50, 4.0);
    auto db = gen_synthetic<float>(b, 3, 8, 50, 4.0);
    CHECK(da.first.v == db.first.v);
    CHECK(da.second.labels == db.second.labels);
}

TEST_CASE("degenerate separation leaves chance accuracy") {
    Rng rng(11);
    auto [feat, labels] = gen_synthetic<float>(rng, 2, 10, 500, 0.0);
    // nearest-mean on zero-separation data hovers near 50%
    (void)feat;
    CHECK(labels.class_count == 2);
}

TEST_CASE("batching: sizes, order, and multiset preservation") {
    Rng rng(13);
    auto batches = make_batches(300, 128, rng, true);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].size() == 128);
    CHECK(batches[1].size() == 128);
    CHECK(batches[2].size() == 44);

    std::set<std::uint32_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 300); // every frame exactly once

    auto ordered = make_batches(10, 4, rng, false);
    std::uint32_t expect = 0;
    for (const auto& b : ordered)
        for (auto i : b) CHECK(i == expect++);
}

TEST_CASE("manifest round-trip and dataset assembly") {
    TempDir tmp;
    Rng rng(21);
    std::vector<ManifestEntry> entries;
    for (int u = 0; u < 3; ++u) {
        auto [feat, labels] = gen_synthetic<float>(rng, 2, 6, 10, 3.0);
        const std::string f = tmp.file("u" + std::to_string(u) + ".fea");
        const std::string l = tmp.file("u" + std::to_string(u) + ".lab");
        save_features(f, feat);
        save_labels(l, labels);
        entries.push_back({"u" + std::to_string(u), f, l});
    }
    save_manifest(tmp.file("m.tsv"), entries);
    auto back = load_manifest(tmp.file("m.tsv"));
    REQUIRE(back.size() == 3);
    CHECK(back[1].id == "u1");

    PipelineConfig pc;
    pc.deltas = true;
    pc.norm = NormMode::PerUtterance;
    pc.splice = true;
    auto ds = load_dataset<float>(tmp.file("m.tsv"), pc);
    CHECK(ds.frames() == 60);
    CHECK(ds.features.cols == 6 * 3 * 11); // deltas then 11-frame splice
    CHECK(ds.class_count == 2);
    REQUIRE(ds.utt_ranges.size() == 3);
    CHECK(ds.utt_ranges[2].second == 60);
}

TEST_CASE("dataset rejects mismatched frame counts") {
    TempDir tmp;
    Rng rng(22);
    auto [feat, labels] = gen_synthetic<float>(rng, 2, 4, 10, 3.0);
    labels.labels.pop_back();
    save_features(tmp.file("x.fea"), feat);
    save_labels(tmp.file("x.lab"), labels);
    save_manifest(tmp.file("m.tsv"), {{"x", tmp.file("x.fea"), tmp.file("x.lab")}});
    PipelineConfig pc;
    CHECK_THROWS_AS(load_dataset<float>(tmp.file("m.tsv"), pc), DataError);
}
