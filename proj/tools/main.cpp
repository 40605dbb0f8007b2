#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sceneseg/commands.hpp"

namespace {

sceneseg::DescriptorFormat parse_format(const std::string& text) {
    if (text == "csv") {
        return sceneseg::DescriptorFormat::Csv;
    }
    if (text == "bin") {
        return sceneseg::DescriptorFormat::Binary;
    }
    throw std::invalid_argument("visual format must be 'csv' or 'bin'");
}

// "lo:hi" or a single value.
std::pair<int, int> parse_range(const std::string& text, const std::string& flag) {
    try {
        auto colon = text.find(':');
        if (colon == std::string::npos) {
            int v = std::stoi(text);
            return {v, v};
        }
        return {std::stoi(text.substr(0, colon)), std::stoi(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw std::invalid_argument(flag + ": expected 'lo:hi' or a single integer, got '" + text +
                                    "'");
    }
}

std::vector<std::filesystem::path> to_paths(const std::vector<std::string>& names) {
    return {names.begin(), names.end()};
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Applies `key=value` lines as option defaults on whichever subcommands carry
// the flag, before the real parse, so command-line flags win.
void apply_config(const std::string& file, const std::vector<CLI::App*>& apps) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + file);
    }
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string text = trim(line);
        if (text.empty() || text[0] == '#') {
            continue;
        }
        auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(file + ":" + std::to_string(number) +
                                     ": expected key=value, got '" + text + "'");
        }
        std::string key = trim(text.substr(0, eq));
        std::string value = trim(text.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error(file + ":" + std::to_string(number) + ": empty key");
        }
        for (char& c : key) {
            if (c == '_') {
                c = '-';
            }
        }
        std::string flag = "--" + key;
        bool found = false;
        for (CLI::App* app : apps) {
            CLI::Option* opt = app->get_option_no_throw(flag);
            if (!opt) {
                continue;
            }
            found = true;
            try {
                opt->default_val(value);
            } catch (const CLI::Error& e) {
                throw std::runtime_error(file + ":" + std::to_string(number) + ": key '" + key +
                                         "': " + e.what());
            }
        }
        if (!found) {
            throw std::runtime_error(file + ":" + std::to_string(number) + ": unknown key '" + key +
                                     "'");
        }
    }
}

// The config file has to be located before CLI11 runs, because it seeds the
// defaults that the real parse overrides.
std::string find_config_flag(int argc, char** argv) {
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) {
            return argv[i + 1];
        }
        if (arg.rfind("--config=", 0) == 0) {
            return arg.substr(9);
        }
    }
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scene boundary detection over shot sequences: learned shot distances, "
                 "spectral clustering, and segmentation quality measures."};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int jobs = 1;
    std::string config_file;
    app.add_option("--seed", seed, "Seed behind every random draw")->capture_default_str();
    app.add_option("--jobs", jobs, "Threads for per-video parallelism")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_option("--config", config_file, "key=value defaults file; flags override");

    // train
    struct {
        std::string data, model, trace, embeddings, vformat = "csv";
        std::vector<std::string> videos;
        double fps = 25.0, w_min = 20.0;
        int d_vis = 1183, d_words = 200, hidden = 200;
        sceneseg::TrainConfig cfg;
    } tr;
    CLI::App* train = app.add_subcommand("train", "Learn the shot-pair distance from labeled scenes");
    train->fallthrough();
    train->add_option("--data", tr.data, "Data directory")->required();
    train->add_option("--videos", tr.videos, "Training video ids")->required()->delimiter(',');
    train->add_option("--model", tr.model, "Checkpoint output path")->required();
    train->add_option("--trace", tr.trace, "Loss trace CSV (default: next to the checkpoint)");
    train->add_option("--embeddings", tr.embeddings, "Embedding table (default: <data>/embeddings.csv)");
    train->add_option("--fps", tr.fps, "Frames per second")->capture_default_str();
    train->add_option("--w-min", tr.w_min, "Context window minimum, seconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    train->add_option("--visual-format", tr.vformat, "Descriptor file format")
        ->capture_default_str()
        ->check(CLI::IsMember({"csv", "bin"}));
    train->add_option("--d-vis", tr.d_vis, "Visual projection width")->capture_default_str();
    train->add_option("--d-words", tr.d_words, "Word codebook size")->capture_default_str();
    train->add_option("--hidden-dim", tr.hidden, "Merge layer width")->capture_default_str();
    train->add_option("--lr-vis", tr.cfg.lr_vis, "Learning rate, visual layer")->capture_default_str();
    train->add_option("--lr-rest", tr.cfg.lr_rest, "Learning rate, merge layer")->capture_default_str();
    train->add_option("--momentum", tr.cfg.momentum, "SGD momentum")->capture_default_str();
    train->add_option("--weight-decay", tr.cfg.weight_decay, "L2 penalty weight")->capture_default_str();
    train->add_option("--batch-size", tr.cfg.batch_size, "Pairs per batch (even)")->capture_default_str();
    train->add_option("--epochs", tr.cfg.epochs, "Training epochs")->capture_default_str();

    // segment
    struct {
        std::string data, video, model, embeddings, scenes_out, similarity_out, manifest_out,
            vformat = "csv";
        double fps = 25.0, sigma = 0.0, eig_tol = 1e-12;
        int k = 0, k_max = 0, restarts = 10;
    } sg;
    CLI::App* segment = app.add_subcommand("segment", "Detect scene boundaries with a trained model");
    segment->fallthrough();
    segment->add_option("--data", sg.data, "Data directory")->required();
    segment->add_option("--video", sg.video, "Video id")->required();
    segment->add_option("--model", sg.model, "Checkpoint path")->required();
    segment->add_option("--embeddings", sg.embeddings, "Embedding table (default: <data>/embeddings.csv)");
    segment->add_option("--scenes-out", sg.scenes_out, "Boundary list output")->required();
    segment->add_option("--similarity-out", sg.similarity_out,
                        "Similarity matrix output; .pgm for an image, else CSV");
    segment->add_option("--manifest-out", sg.manifest_out, "Run manifest JSON");
    segment->add_option("--fps", sg.fps, "Frames per second")->capture_default_str();
    segment->add_option("--visual-format", sg.vformat, "Descriptor file format")
        ->capture_default_str()
        ->check(CLI::IsMember({"csv", "bin"}));
    segment->add_option("--k", sg.k, "Scene count; 0 = eigengap selection")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    segment->add_option("--k-max", sg.k_max, "Eigengap cap; 0 = ceil(shots/5)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    segment->add_option("--restarts", sg.restarts, "k-means restarts")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    segment->add_option("--sigma", sg.sigma, "Kernel bandwidth; 0 = KDE estimate")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    segment->add_option("--eig-tol", sg.eig_tol, "Eigensolver tolerance")->capture_default_str();

    // evaluate
    struct {
        std::vector<std::string> shots, gt, detected;
        std::string report;
        double fps = 25.0;
    } ev;
    CLI::App* evaluate = app.add_subcommand("evaluate", "Score detected scenes against ground truth");
    evaluate->fallthrough();
    evaluate->add_option("--shots", ev.shots, "Shot list per video")->required();
    evaluate->add_option("--gt", ev.gt, "Ground-truth scenes per video")->required();
    evaluate->add_option("--detected", ev.detected, "Detected scenes per video")->required();
    evaluate->add_option("--report", ev.report, "Report JSON path (default: stdout)");
    evaluate->add_option("--fps", ev.fps, "Frames per second")->capture_default_str();

    // synth
    sceneseg::SyntheticSpec spec;
    std::string synth_out;
    std::string shots_range = "3:6";
    std::string frames_range = "48:240";
    CLI::App* synth = app.add_subcommand("synth", "Generate a planted-scene fixture set");
    synth->fallthrough();
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--videos", spec.n_videos, "Number of videos")->capture_default_str();
    synth->add_option("--scenes", spec.n_scenes, "Scenes per video")->capture_default_str();
    synth->add_option("--shots-per-scene", shots_range, "Range lo:hi")->capture_default_str();
    synth->add_option("--shot-frames", frames_range, "Range lo:hi")->capture_default_str();
    synth->add_option("--dim", spec.dim, "Visual descriptor length")->capture_default_str();
    synth->add_option("--separation", spec.separation, "Scene center spread over unit noise")
        ->capture_default_str();
    synth->add_option("--nuisance", spec.nuisance,
                      "Shot noise level on the anchor-free back half of the dims")
        ->capture_default_str();
    synth->add_option("--hist-dim", spec.hist_dim, "Histogram length")->capture_default_str();
    synth->add_option("--hist-separation", spec.hist_separation, "Histogram center spread")
        ->capture_default_str();
    synth->add_option("--vocab", spec.vocab, "Vocabulary size")->capture_default_str();
    synth->add_option("--words-per-shot", spec.words_per_shot, "Poisson rate")->capture_default_str();
    synth->add_option("--embedding-dim", spec.embedding_dim, "Embedding length")->capture_default_str();
    synth->add_option("--fps", spec.fps, "Frames per second")->capture_default_str();

    // baseline
    struct {
        std::string data, video, hist, scenes_out;
        double fps = 25.0, time_weight = 1.0, sigma = 0.0, eig_tol = 1e-12;
        int k = 0, k_max = 0, restarts = 10;
    } bl;
    CLI::App* baseline =
        app.add_subcommand("baseline", "Histogram + time features through the same clustering");
    baseline->fallthrough();
    baseline->add_option("--data", bl.data, "Data directory")->required();
    baseline->add_option("--video", bl.video, "Video id")->required();
    baseline->add_option("--hist", bl.hist, "Histogram CSV (default: <data>/<video>.hist.csv)");
    baseline->add_option("--scenes-out", bl.scenes_out, "Boundary list output")->required();
    baseline->add_option("--fps", bl.fps, "Frames per second")->capture_default_str();
    baseline->add_option("--time-weight", bl.time_weight, "Weight of the time feature")
        ->capture_default_str();
    baseline->add_option("--k", bl.k, "Scene count; 0 = eigengap selection")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    baseline->add_option("--k-max", bl.k_max, "Eigengap cap; 0 = ceil(shots/5)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    baseline->add_option("--restarts", bl.restarts, "k-means restarts")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    baseline->add_option("--sigma", bl.sigma, "Kernel bandwidth; 0 = KDE estimate")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    baseline->add_option("--eig-tol", bl.eig_tol, "Eigensolver tolerance")->capture_default_str();

    try {
        std::string config = find_config_flag(argc, argv);
        if (!config.empty()) {
            apply_config(config, {&app, train, segment, evaluate, synth, baseline});
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand(train)) {
            sceneseg::TrainCommand cmd;
            cmd.data_dir = tr.data;
            cmd.videos = tr.videos;
            cmd.embeddings = tr.embeddings;
            cmd.model_out = tr.model;
            cmd.trace_out = tr.trace;
            cmd.features.fps = tr.fps;
            cmd.features.w_min = tr.w_min;
            cmd.features.visual_format = parse_format(tr.vformat);
            cmd.d_vis = tr.d_vis;
            cmd.d_words = tr.d_words;
            cmd.hidden = tr.hidden;
            cmd.train = tr.cfg;
            cmd.train.seed = seed;
            sceneseg::cmd_train(cmd);
        } else if (app.got_subcommand(segment)) {
            sceneseg::SegmentCommand cmd;
            cmd.data_dir = sg.data;
            cmd.video = sg.video;
            cmd.model_in = sg.model;
            cmd.embeddings = sg.embeddings;
            cmd.scenes_out = sg.scenes_out;
            cmd.similarity_out = sg.similarity_out;
            cmd.manifest_out = sg.manifest_out;
            cmd.fps = sg.fps;
            cmd.visual_format = parse_format(sg.vformat);
            cmd.spectral = {sg.k, sg.k_max, sg.restarts, seed, sg.eig_tol, sg.sigma};
            sceneseg::cmd_segment(cmd);
        } else if (app.got_subcommand(evaluate)) {
            sceneseg::EvaluateCommand cmd;
            cmd.shots = to_paths(ev.shots);
            cmd.gt = to_paths(ev.gt);
            cmd.detected = to_paths(ev.detected);
            cmd.report_out = ev.report;
            cmd.fps = ev.fps;
            cmd.jobs = jobs;
            sceneseg::cmd_evaluate(cmd);
        } else if (app.got_subcommand(synth)) {
            auto shots_lohi = parse_range(shots_range, "--shots-per-scene");
            auto frames_lohi = parse_range(frames_range, "--shot-frames");
            spec.shots_per_scene_lo = shots_lohi.first;
            spec.shots_per_scene_hi = shots_lohi.second;
            spec.shot_frames_lo = frames_lohi.first;
            spec.shot_frames_hi = frames_lohi.second;
            spec.seed = seed;
            sceneseg::cmd_synth(spec, synth_out);
        } else if (app.got_subcommand(baseline)) {
            sceneseg::BaselineCommand cmd;
            cmd.data_dir = bl.data;
            cmd.video = bl.video;
            cmd.hist = bl.hist;
            cmd.scenes_out = bl.scenes_out;
            cmd.fps = bl.fps;
            cmd.time_weight = bl.time_weight;
            cmd.spectral = {bl.k, bl.k_max, bl.restarts, seed, bl.eig_tol, bl.sigma};
            sceneseg::cmd_baseline(cmd);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
