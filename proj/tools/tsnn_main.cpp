// Command-line front end: dataset synthesis, training, evaluation, and
// SynOps profiling for tandem-trained spiking acoustic models.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsnn/data.hpp"
#include "tsnn/profiler.hpp"
#include "tsnn/tandem.hpp"
#include "tsnn/training.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct AppConfig {
    std::uint64_t seed = 0;
    std::size_t t_e = 10;
    double threshold = 1.0;
    std::size_t hidden_layers = 5;
    std::size_t hidden_units = 2048;
    double dropout = 0.1;
    double lr0 = 0.08;
    std::size_t batch = 128;
    double halving_threshold = 0.001;
    std::size_t max_epochs = 24;
    double grad_clip = 0.0;
    bool deltas = true;
    std::string norm = "utterance"; // none | utterance | global
    bool splice = true;
    std::size_t splice_left = 5;
    std::size_t splice_right = 5;
    int threads = 1;
};

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw tsnn::DataError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

// Flat key = value file, '#' comments, unknown keys rejected.
void load_config_file(const std::string& path, AppConfig& cfg) {
    std::ifstream is(path);
    if (!is) throw tsnn::DataError("config: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto notspace = line.find_first_not_of(" \t\r");
        if (notspace == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw tsnn::DataError("config: line " + std::to_string(lineno) + " of " + path +
                                  " is not key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "t_e") cfg.t_e = std::stoul(val);
            else if (key == "threshold") cfg.threshold = std::stod(val);
            else if (key == "hidden_layers") cfg.hidden_layers = std::stoul(val);
            else if (key == "hidden_units") cfg.hidden_units = std::stoul(val);
            else if (key == "dropout") cfg.dropout = std::stod(val);
            else if (key == "lr0") cfg.lr0 = std::stod(val);
            else if (key == "batch") cfg.batch = std::stoul(val);
            else if (key == "halving_threshold") cfg.halving_threshold = std::stod(val);
            else if (key == "max_epochs") cfg.max_epochs = std::stoul(val);
            else if (key == "grad_clip") cfg.grad_clip = std::stod(val);
            else if (key == "deltas") cfg.deltas = parse_bool(val, key);
            else if (key == "norm") cfg.norm = val;
            else if (key == "splice") cfg.splice = parse_bool(val, key);
            else if (key == "splice_left") cfg.splice_left = std::stoul(val);
            else if (key == "splice_right") cfg.splice_right = std::stoul(val);
            else if (key == "threads") cfg.threads = std::stoi(val);
            else
                throw tsnn::DataError("config: unknown key '" + key + "' at line " +
                                      std::to_string(lineno) + " of " + path);
        } catch (const std::invalid_argument&) {
            throw tsnn::DataError("config: bad value '" + val + "' for key '" + key + "'");
        }
    }
    if (cfg.norm != "none" && cfg.norm != "utterance" && cfg.norm != "global")
        throw tsnn::DataError("config: norm must be none, utterance, or global (got '" +
                              cfg.norm + "')");
}

void echo_config(const AppConfig& c) {
    std::cout << "# effective config\n"
              << "seed = " << c.seed << "\nt_e = " << c.t_e << "\nthreshold = " << c.threshold
              << "\nhidden_layers = " << c.hidden_layers << "\nhidden_units = " << c.hidden_units
              << "\ndropout = " << c.dropout << "\nlr0 = " << c.lr0 << "\nbatch = " << c.batch
              << "\nhalving_threshold = " << c.halving_threshold
              << "\nmax_epochs = " << c.max_epochs << "\ngrad_clip = " << c.grad_clip
              << "\ndeltas = " << (c.deltas ? "true" : "false") << "\nnorm = " << c.norm
              << "\nsplice = " << (c.splice ? "true" : "false")
              << "\nsplice_left = " << c.splice_left << "\nsplice_right = " << c.splice_right
              << "\nthreads = " << c.threads << "\n";
}

tsnn::PipelineConfig pipeline_of(const AppConfig& c) {
    tsnn::PipelineConfig p;
    p.deltas = c.deltas;
    p.norm = c.norm == "none"        ? tsnn::NormMode::None
             : c.norm == "utterance" ? tsnn::NormMode::PerUtterance
                                     : tsnn::NormMode::Global;
    p.splice = c.splice;
    p.splice_left = c.splice_left;
    p.splice_right = c.splice_right;
    return p;
}

tsnn::TandemNetwork<float> load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw tsnn::DataError("model file: cannot open " + path);
    return tsnn::deserialize<float>(is);
}

int cmd_synth(const std::string& out_dir, std::size_t classes, std::size_t dim,
              std::size_t frames_per_class, double separation, std::uint64_t seed,
              std::size_t utterances) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    tsnn::Rng rng(seed);
    std::vector<tsnn::ManifestEntry> manifest;
    for (std::size_t u = 0; u < utterances; ++u) {
        auto [feat, labels] = tsnn::gen_synthetic<float>(rng, classes, dim, frames_per_class,
                                                         separation);
        std::ostringstream id;
        id << "utt" << std::setw(4) << std::setfill('0') << u;
        const std::string fpath = (fs::path(out_dir) / (id.str() + ".fea")).string();
        const std::string lpath = (fs::path(out_dir) / (id.str() + ".lab")).string();
        tsnn::save_features(fpath, feat);
        tsnn::save_labels(lpath, labels);
        manifest.push_back({id.str(), fpath, lpath});
    }
    const std::string mpath = (fs::path(out_dir) / "manifest.tsv").string();
    tsnn::save_manifest(mpath, manifest);
    std::cout << "wrote " << utterances << " utterances (" << classes << " classes, dim " << dim
              << ", " << frames_per_class << " frames/class each) to " << mpath << "\n";
    return kExitOk;
}

int cmd_train(const AppConfig& cfg, const std::string& train_manifest,
              const std::string& dev_manifest, const std::string& model_out,
              const std::string& log_path) {
    echo_config(cfg);
    const tsnn::PipelineConfig pipe = pipeline_of(cfg);
    tsnn::Dataset<float> train_set = tsnn::load_dataset<float>(train_manifest, pipe);
    tsnn::Dataset<float> dev_set = tsnn::load_dataset<float>(dev_manifest, pipe);

    tsnn::Rng init_rng(cfg.seed);
    auto net = tsnn::make_network<float>(init_rng, train_set.features.cols, train_set.class_count,
                                         cfg.hidden_layers, cfg.hidden_units, cfg.t_e,
                                         static_cast<float>(cfg.dropout), cfg.threshold);
    tsnn::TrainConfig tc;
    tc.lr0 = cfg.lr0;
    tc.batch = cfg.batch;
    tc.halving_threshold = cfg.halving_threshold;
    tc.max_epochs = cfg.max_epochs;
    tc.seed = cfg.seed;
    tc.grad_clip = cfg.grad_clip;

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw tsnn::DataError("cannot write training log " + log_path);
    }
    std::ostream* log_stream = log_path.empty() ? static_cast<std::ostream*>(&std::cout)
                                                : static_cast<std::ostream*>(&log);
    tsnn::TrainRunResult run = tsnn::train_loop(net, train_set, dev_set, tc, log_stream);
    std::ofstream os(model_out, std::ios::binary);
    if (!os) throw tsnn::DataError("model file: cannot write " + model_out);
    os.write(run.best_model.data(), static_cast<std::streamsize>(run.best_model.size()));
    std::cout << "best dev accuracy " << run.best_dev_acc << ", model written to " << model_out
              << "\n";
    return kExitOk;
}

int cmd_eval(const AppConfig& cfg, const std::string& model_path, const std::string& manifest) {
    auto net = load_model(model_path);
    tsnn::Dataset<float> data = tsnn::load_dataset<float>(manifest, pipeline_of(cfg));
    tsnn::EvalResult r = tsnn::evaluate(net, data);
    std::cout << "frame_accuracy\t" << r.frame_accuracy << "\nmean_loss\t" << r.mean_loss << "\n";
    return kExitOk;
}

int cmd_profile(const AppConfig& cfg, const std::string& model_path, const std::string& manifest,
                std::size_t n_utts, std::uint64_t seed, const std::string& out_prefix) {
    auto net = load_model(model_path);
    tsnn::Dataset<float> data = tsnn::load_dataset<float>(manifest, pipeline_of(cfg));
    tsnn::Rng rng(seed);
    tsnn::SynOpsReport report = tsnn::synops_ratio_report(net, data, n_utts, rng);
    report.seed = seed;

    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw tsnn::DataError("cannot write " + out_prefix + ".csv");
    tsnn::write_report_csv(csv, report);

    nlohmann::json j;
    j["ann_total_macs"] = report.ann_total;
    j["snn_total_acs"] = report.snn_total;
    j["synops_ratio"] = report.ratio;
    j["frames_profiled"] = report.frames_profiled;
    j["seed"] = report.seed;
    j["utterances"] = report.utterance_ids;
    j["per_utterance_ann_macs"] = report.per_utterance_ann;
    j["per_utterance_snn_acs"] = report.per_utterance_snn;
    for (std::size_t l = 0; l < report.layer_names.size(); ++l) {
        j["layers"].push_back({{"name", report.layer_names[l]},
                               {"ann_macs", report.per_layer_ann[l]},
                               {"snn_acs", report.per_layer_snn[l]},
                               {"mean_spike_rate", report.per_layer_spike_rate[l]}});
    }
    j["config"] = {{"t_e", net.cfg.t_e},
                   {"threshold", net.cfg.threshold},
                   {"n_utterances", n_utts},
                   {"deltas", cfg.deltas},
                   {"norm", cfg.norm},
                   {"splice", cfg.splice}};
    std::ofstream js(out_prefix + ".json");
    if (!js) throw tsnn::DataError("cannot write " + out_prefix + ".json");
    js << j.dump(2) << "\n";

    std::cout << "synops_ratio\t" << report.ratio << "\nann_total\t" << report.ann_total
              << "\nsnn_total\t" << report.snn_total << "\nreport written to " << out_prefix
              << ".{csv,json}\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tandem-trained spiking acoustic models: synth, train, eval, profile"};
    app.require_subcommand(1);

    AppConfig cfg;
    if (const char* env = std::getenv("TSNN_THREADS")) cfg.threads = std::atoi(env);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic frame-classification dataset");
    std::string synth_out = "synth_data";
    std::size_t classes = 3, dim = 20, frames = 200, utts = 10;
    double separation = 6.0;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--classes", classes, "number of classes (>= 2)");
    synth->add_option("--dim", dim, "feature dimension");
    synth->add_option("--frames", frames, "frames per class per utterance");
    synth->add_option("--separation", separation, "distance between class means");
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--utts", utts, "number of utterances");

    // shared train/eval/profile options
    std::string config_path, train_manifest, dev_manifest, model_out = "model.tsnn";
    std::string log_path, model_path, manifest, profile_out = "synops";
    std::size_t n_utts = 5;

    auto add_config_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value config file");
        cmd->add_option("--seed", cfg.seed, "rng seed (overrides config)");
        cmd->add_option("--threads", cfg.threads, "worker threads; 1 = bit-exact sequential");
    };

    auto* train = app.add_subcommand("train", "train a tandem SNN acoustic model");
    add_config_opts(train);
    train->add_option("--train-manifest", train_manifest)->required();
    train->add_option("--dev-manifest", dev_manifest)->required();
    train->add_option("--model-out", model_out, "best-checkpoint path");
    train->add_option("--log", log_path, "epoch log path (default: stdout)");
    train->add_option("--max-epochs", cfg.max_epochs, "override config");
    train->add_option("--hidden-layers", cfg.hidden_layers, "override config");
    train->add_option("--hidden-units", cfg.hidden_units, "override config");
    train->add_option("--lr0", cfg.lr0, "override config");
    train->add_option("--batch", cfg.batch, "override config");
    train->add_option("--dropout", cfg.dropout, "override config");

    auto* eval = app.add_subcommand("eval", "frame accuracy of a trained model");
    add_config_opts(eval);
    eval->add_option("--model", model_path)->required();
    eval->add_option("--manifest", manifest)->required();

    auto* profile = app.add_subcommand("profile", "SynOps energy report on sampled utterances");
    add_config_opts(profile);
    profile->add_option("--model", model_path)->required();
    profile->add_option("--manifest", manifest)->required();
    profile->add_option("--n-utts", n_utts, "utterances to sample");
    profile->add_option("--out", profile_out, "report path prefix");

    // Config file first, then flags: reparse flags after loading the file so
    // command-line values win.
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // help exits 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (!config_path.empty()) {
            AppConfig file_cfg;
            load_config_file(config_path, file_cfg);
            cfg = file_cfg;
            // flags override the file
            app.clear();
            try {
                app.parse(argc, argv);
            } catch (const CLI::ParseError&) {
                return kExitUsage;
            }
        }
        if (synth->parsed()) {
            if (classes < 2) {
                std::cerr << "synth: --classes must be >= 2\n";
                return kExitUsage;
            }
            return cmd_synth(synth_out, classes, dim, frames, separation, synth_seed, utts);
        }
        if (train->parsed())
            return cmd_train(cfg, train_manifest, dev_manifest, model_out, log_path);
        if (eval->parsed()) return cmd_eval(cfg, model_path, manifest);
        if (profile->parsed())
            return cmd_profile(cfg, model_path, manifest, n_utts, cfg.seed, profile_out);
        return kExitUsage;
    } catch (const tsnn::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const tsnn::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const tsnn::DimensionError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
