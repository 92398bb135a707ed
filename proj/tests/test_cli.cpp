#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "tsnn/data.hpp"
#include "tsnn/tandem.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = TSNN_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args) {
    static int counter = 0;
    const fs::path out = fs::temp_directory_path() / ("tsnn_cli_out_" + std::to_string(counter));
    const fs::path err = fs::temp_directory_path() / ("tsnn_cli_err_" + std::to_string(counter));
    ++counter;
    const std::string cmd = kCli + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p);
        std::ostringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    r.out = slurp(out);
    r.err = slurp(err);
    fs::remove(out);
    fs::remove(err);
    return r;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("tsnn_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// One shared tiny end-to-end workspace: synth -> train -> eval -> profile.
struct Workspace {
    fs::path dir;
    std::string manifest;
    std::string model;
    Workspace() {
        dir = scratch_dir("e2e");
        auto synth = run("synth --out " + (dir / "data").string() +
                         " --classes 3 --dim 10 --frames 30 --utts 8 --separation 6 --seed 1");
        REQUIRE(synth.exit_code == 0);
        manifest = (dir / "data" / "manifest.tsv").string();
        model = (dir / "model.tsnn").string();
        auto train = run("train --train-manifest " + manifest + " --dev-manifest " + manifest +
                         " --model-out " + model + " --log " + (dir / "train.log").string() +
                         " --hidden-layers 1 --hidden-units 32 --max-epochs 3 --batch 64 "
                         "--dropout 0 --seed 7");
        REQUIRE(train.exit_code == 0);
    }
};

Workspace& workspace() {
    static Workspace w;
    return w;
}

} // namespace

TEST_CASE("--help exits 0") {
    CHECK(run("--help").exit_code == 0);
    CHECK(run("train --help").exit_code == 0);
}

TEST_CASE("unknown flags exit 2 and are named") {
    auto r = run("synth --no-such-flag");
    CHECK(r.exit_code == 2);
    CHECK((r.err + r.out).find("--no-such-flag") != std::string::npos);
}

TEST_CASE("missing required flags exit 2") {
    CHECK(run("train --train-manifest only_one.tsv").exit_code == 2);
    CHECK(run("eval --model m.tsnn").exit_code == 2);
}

TEST_CASE("no subcommand exits 2") { CHECK(run("").exit_code == 2); }

TEST_CASE("synth round-trips with declared dimensions") {
    const fs::path dir = scratch_dir("synth_rt");
    auto r = run("synth --out " + dir.string() +
                 " --classes 4 --dim 12 --frames 20 --utts 3 --seed 5");
    REQUIRE(r.exit_code == 0);
    auto entries = tsnn::load_manifest((dir / "manifest.tsv").string());
    REQUIRE(entries.size() == 3);
    for (const auto& e : entries) {
        auto feat = tsnn::load_features<float>(e.feature_path);
        auto labels = tsnn::load_labels(e.label_path);
        CHECK(feat.rows == 80); // 4 classes * 20 frames/class
        CHECK(feat.cols == 12);
        CHECK(labels.class_count == 4);
        CHECK(labels.labels.size() == 80);
    }
}

TEST_CASE("synth rejects a single class as a usage error") {
    CHECK(run("synth --out " + scratch_dir("synth_bad").string() + " --classes 1").exit_code == 2);
}

TEST_CASE("synth is byte-deterministic per seed") {
    const fs::path a = scratch_dir("synth_a"), b = scratch_dir("synth_b");
    const std::string flags = " --classes 3 --dim 8 --frames 15 --utts 2 --seed 42";
    REQUIRE(run("synth --out " + a.string() + flags).exit_code == 0);
    REQUIRE(run("synth --out " + b.string() + flags).exit_code == 0);
    CHECK(read_file(a / "utt0000.fea") == read_file(b / "utt0000.fea"));
    CHECK(read_file(a / "utt0001.fea") == read_file(b / "utt0001.fea"));
    CHECK(read_file(a / "utt0000.lab") == read_file(b / "utt0000.lab"));
}

TEST_CASE("nonexistent manifest exits 3") {
    auto r = run("train --train-manifest /nonexistent/m.tsv --dev-manifest /nonexistent/m.tsv");
    CHECK(r.exit_code == 3);
}

TEST_CASE("train writes a loadable checkpoint and an epoch log") {
    auto& w = workspace();
    std::ifstream model(w.model, std::ios::binary);
    REQUIRE(model.good());
    auto net = tsnn::deserialize<float>(model);
    CHECK(net.classes() == 3);
    CHECK(net.in_dim() == 10 * 3 * 11); // deltas then 11-frame splicing

    std::string log = read_file(w.dir / "train.log");
    std::istringstream is(log);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 3);
}

TEST_CASE("eval reports accuracy and loss for the trained model") {
    auto& w = workspace();
    auto r = run("eval --model " + w.model + " --manifest " + w.manifest);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("frame_accuracy\t") != std::string::npos);
    CHECK(r.out.find("mean_loss\t") != std::string::npos);
    const auto pos = r.out.find("frame_accuracy\t");
    const double acc = std::stod(r.out.substr(pos + 15));
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
    CHECK(acc > 1.0 / 3.0); // better than chance on separable data
}

TEST_CASE("profile emits consistent csv and json with 5 utterance ids") {
    auto& w = workspace();
    const std::string prefix = (w.dir / "synops").string();
    auto r = run("profile --model " + w.model + " --manifest " + w.manifest +
                 " --n-utts 5 --seed 3 --out " + prefix);
    REQUIRE(r.exit_code == 0);
    const std::string csv = read_file(prefix + ".csv");
    CHECK(csv.rfind("layer,ann_macs,snn_acs,mean_spike_rate", 0) == 0);
    const std::string json = read_file(prefix + ".json");
    std::size_t utts = 0;
    for (std::size_t p = json.find("utt"); p != std::string::npos; p = json.find("utt", p + 1))
        if (json.compare(p, 3, "utt") == 0 && std::isdigit(static_cast<unsigned char>(json[p + 3])))
            ++utts;
    // ids appear once in "utterances"; per-layer arrays don't repeat them
    CHECK(utts == 5);
    CHECK(json.find("synops_ratio") != std::string::npos);
}

TEST_CASE("profile is deterministic per seed") {
    auto& w = workspace();
    const std::string p1 = (w.dir / "prof_a").string(), p2 = (w.dir / "prof_b").string();
    REQUIRE(run("profile --model " + w.model + " --manifest " + w.manifest +
                " --n-utts 4 --seed 11 --out " + p1)
                .exit_code == 0);
    REQUIRE(run("profile --model " + w.model + " --manifest " + w.manifest +
                " --n-utts 4 --seed 11 --out " + p2)
                .exit_code == 0);
    CHECK(read_file(p1 + ".json") == read_file(p2 + ".json"));
    CHECK(read_file(p1 + ".csv") == read_file(p2 + ".csv"));
}

TEST_CASE("profile asking for more utterances than exist exits 3") {
    auto& w = workspace();
    auto r = run("profile --model " + w.model + " --manifest " + w.manifest + " --n-utts 99 --out " +
                 (w.dir / "prof_x").string());
    CHECK(r.exit_code == 3);
}

TEST_CASE("max-epochs 0 writes the initialized model at chance accuracy") {
    auto& w = workspace();
    const std::string model0 = (w.dir / "model0.tsnn").string();
    auto train = run("train --train-manifest " + w.manifest + " --dev-manifest " + w.manifest +
                     " --model-out " + model0 +
                     " --hidden-layers 1 --hidden-units 16 --max-epochs 0 --dropout 0 --seed 2");
    REQUIRE(train.exit_code == 0);
    auto r = run("eval --model " + model0 + " --manifest " + w.manifest);
    REQUIRE(r.exit_code == 0);
    const auto pos = r.out.find("frame_accuracy\t");
    REQUIRE(pos != std::string::npos);
    const double acc = std::stod(r.out.substr(pos + 15));
    CHECK(acc < 0.7); // untrained: near 1/3, certainly far from converged
}

TEST_CASE("config file values apply and flags override them") {
    auto& w = workspace();
    const fs::path cfg = w.dir / "exp.cfg";
    {
        std::ofstream os(cfg);
        os << "# experiment settings\n"
           << "max_epochs = 1\n"
           << "hidden_layers = 1\n"
           << "hidden_units = 16\n"
           << "dropout = 0\n";
    }
    const std::string model_cfg = (w.dir / "model_cfg.tsnn").string();
    auto r = run("train --config " + cfg.string() + " --train-manifest " + w.manifest +
                 " --dev-manifest " + w.manifest + " --model-out " + model_cfg + " --seed 4");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("max_epochs = 1") != std::string::npos);

    // a flag overrides the file value, and the echoed config reflects it
    auto r2 = run("train --config " + cfg.string() + " --max-epochs 2 --train-manifest " +
                  w.manifest + " --dev-manifest " + w.manifest + " --model-out " + model_cfg +
                  " --seed 4");
    REQUIRE(r2.exit_code == 0);
    CHECK(r2.out.find("max_epochs = 2") != std::string::npos);
}

TEST_CASE("unknown config keys are rejected as data errors") {
    auto& w = workspace();
    const fs::path cfg = w.dir / "bad.cfg";
    std::ofstream(cfg) << "no_such_key = 1\n";
    auto r = run("train --config " + cfg.string() + " --train-manifest " + w.manifest +
                 " --dev-manifest " + w.manifest);
    CHECK(r.exit_code == 3);
    CHECK(r.err.find("no_such_key") != std::string::npos);
}
