#include "sceneseg/commands.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "sceneseg/io.hpp"
#include "sceneseg/rng.hpp"
#include "sceneseg/timeline.hpp"

namespace sceneseg {

namespace {

// Independent sub-stream tags so codebook construction and weight init never
// share draws with training.
constexpr std::uint64_t kCodebookStream = 0x636f6465626f6f6bULL;
constexpr std::uint64_t kInitStream = 0x696e69746d6f646cULL;

std::filesystem::path default_embeddings(const std::filesystem::path& data_dir,
                                         const std::filesystem::path& given) {
    return given.empty() ? data_dir / "embeddings.csv" : given;
}

}  // namespace

VideoPaths video_paths(const std::filesystem::path& data_dir, const std::string& id,
                       DescriptorFormat visual_format) {
    VideoPaths p;
    p.shots = data_dir / (id + ".shots.csv");
    p.scenes = data_dir / (id + ".scenes.csv");
    p.transcript = data_dir / (id + ".transcript.csv");
    p.visual =
        data_dir / (id + (visual_format == DescriptorFormat::Binary ? ".visual.bin" : ".visual.csv"));
    p.hist = data_dir / (id + ".hist.csv");
    return p;
}

void cmd_train(const TrainCommand& cmd) {
    if (cmd.videos.empty()) {
        throw std::invalid_argument("train: at least one training video is required");
    }
    if (cmd.model_out.empty()) {
        throw std::invalid_argument("train: --model output path is required");
    }
    EmbeddingTable table = load_embedding_table(default_embeddings(cmd.data_dir, cmd.embeddings));
    SphericalKmeansResult codebook_run = spherical_kmeans(
        table.vectors(), cmd.d_words, splitmix64(cmd.train.seed ^ kCodebookStream));
    const WordCodebook& codebook = codebook_run.codebook;

    std::vector<TrainingVideo> corpus;
    int d_in = 0;
    for (const std::string& id : cmd.videos) {
        VideoPaths paths = video_paths(cmd.data_dir, id, cmd.features.visual_format);
        ShotTimeline timeline = parse_shots(paths.shots, cmd.features.fps);
        SceneSegmentation truth = parse_scenes(paths.scenes, timeline);
        std::vector<TranscriptWord> transcript = parse_transcript(paths.transcript);
        Eigen::MatrixXd visual =
            load_visual_descriptors(paths.visual, timeline, cmd.features.visual_format);
        if (d_in == 0) {
            d_in = static_cast<int>(visual.cols());
        } else if (visual.cols() != d_in) {
            throw std::invalid_argument("train: descriptor dimensionality differs between videos (" +
                                        std::to_string(d_in) + " vs " +
                                        std::to_string(visual.cols()) + " in '" + id + "')");
        }
        TrainingVideo video;
        video.id = id;
        video.features =
            build_shot_features(timeline, visual, transcript, table, codebook, cmd.features.w_min);
        video.scene_labels = scene_labels(truth);
        corpus.push_back(std::move(video));
    }

    SiameseHyper hyper;
    hyper.d_in = d_in;
    hyper.d_vis = cmd.d_vis;
    hyper.d_words = cmd.d_words;
    hyper.h = cmd.hidden;
    SiameseModel model = init_model(hyper, splitmix64(cmd.train.seed ^ kInitStream));
    TrainResult result = train(std::move(model), corpus, cmd.train);

    SiameseCheckpoint checkpoint{std::move(result.model), codebook, cmd.features.w_min};
    save_checkpoint(cmd.model_out, checkpoint);

    std::ostringstream trace;
    trace << "epoch,batch,loss\n";
    for (const LossTracePoint& point : result.trace) {
        trace << point.epoch << "," << point.batch << "," << format_double(point.loss) << "\n";
    }
    std::filesystem::path trace_out = cmd.trace_out;
    if (trace_out.empty()) {
        trace_out = cmd.model_out;
        trace_out.replace_extension(".trace.csv");
    }
    atomic_write(trace_out, trace.str());
}

namespace {

std::string similarity_to_pgm(const SimilarityMatrix& w) {
    const int n = w.n();
    std::string out = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double v = w.values()(i, j);
            int pixel = static_cast<int>(std::lround(v * 255.0));
            out.push_back(static_cast<char>(std::clamp(pixel, 0, 255)));
        }
    }
    return out;
}

std::string similarity_to_csv(const SimilarityMatrix& w) {
    std::ostringstream out;
    for (int i = 0; i < w.n(); ++i) {
        for (int j = 0; j < w.n(); ++j) {
            if (j > 0) {
                out << ",";
            }
            out << format_double(w.values()(i, j));
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace

void cmd_segment(const SegmentCommand& cmd) {
    if (cmd.scenes_out.empty()) {
        throw std::invalid_argument("segment: --scenes-out path is required");
    }
    SiameseCheckpoint checkpoint = load_checkpoint(cmd.model_in);
    VideoPaths paths = video_paths(cmd.data_dir, cmd.video, cmd.visual_format);
    ShotTimeline timeline = parse_shots(paths.shots, cmd.fps);
    std::vector<TranscriptWord> transcript = parse_transcript(paths.transcript);
    Eigen::MatrixXd visual = load_visual_descriptors(paths.visual, timeline, cmd.visual_format);
    if (visual.cols() != checkpoint.model.hyper.d_in) {
        throw std::invalid_argument("segment: checkpoint expects descriptors of length " +
                                    std::to_string(checkpoint.model.hyper.d_in) + ", file has " +
                                    std::to_string(visual.cols()));
    }
    EmbeddingTable table = load_embedding_table(default_embeddings(cmd.data_dir, cmd.embeddings));
    if (table.dim() != checkpoint.codebook.dim()) {
        throw std::invalid_argument("segment: embedding dimensionality " + std::to_string(table.dim()) +
                                    " does not match the checkpoint codebook (" +
                                    std::to_string(checkpoint.codebook.dim()) + ")");
    }
    std::vector<ShotFeatures> features = build_shot_features(
        timeline, visual, transcript, table, checkpoint.codebook, checkpoint.w_min);

    SegmentResult result = segment(features, checkpoint.model, cmd.spectral);

    atomic_write(cmd.scenes_out, scenes_to_csv(result.segmentation));
    if (!cmd.similarity_out.empty()) {
        if (cmd.similarity_out.extension() == ".pgm") {
            atomic_write(cmd.similarity_out, similarity_to_pgm(result.similarity));
        } else {
            atomic_write(cmd.similarity_out, similarity_to_csv(result.similarity));
        }
    }
    if (!cmd.manifest_out.empty()) {
        nlohmann::json manifest;
        manifest["video"] = cmd.video;
        manifest["n_shots"] = timeline.shot_count();
        manifest["seed"] = cmd.spectral.seed;
        manifest["sigma"] = result.sigma;
        manifest["sigma_source"] = result.sigma_from_kde ? "kde" : "override";
        manifest["k"] = result.k;
        manifest["k_source"] = result.k_from_eigengap ? "eigengap" : "explicit";
        manifest["k_max"] = result.k_max;
        nlohmann::json eigenvalues = nlohmann::json::array();
        for (Eigen::Index i = 0; i < result.eigenvalues.size(); ++i) {
            eigenvalues.push_back(result.eigenvalues[i]);
        }
        manifest["eigenvalues"] = std::move(eigenvalues);
        atomic_write(cmd.manifest_out, manifest.dump(2) + "\n");
    }
}

MetricReport cmd_evaluate(const EvaluateCommand& cmd) {
    if (cmd.shots.empty() || cmd.shots.size() != cmd.gt.size() ||
        cmd.shots.size() != cmd.detected.size()) {
        throw std::invalid_argument(
            "evaluate: --shots, --gt and --detected must be given once per video");
    }
    const int n = static_cast<int>(cmd.shots.size());
    std::vector<MetricReport> reports(static_cast<std::size_t>(n));
    parallel_for(n, std::max(1, cmd.jobs), [&](int i) {
        auto idx = static_cast<std::size_t>(i);
        ShotTimeline timeline = parse_shots(cmd.shots[idx], cmd.fps);
        SceneSegmentation truth = parse_scenes(cmd.gt[idx], timeline);
        SceneSegmentation detected = parse_scenes(cmd.detected[idx], timeline);
        reports[idx] = evaluate_segmentation(timeline, truth, detected);
    });
    MetricReport average = average_reports(reports);

    nlohmann::json doc;
    nlohmann::json videos = nlohmann::json::array();
    for (const MetricReport& report : reports) {
        nlohmann::json row;
        row["video"] = report.video_id;
        row["coverage"] = report.cov_ovf.coverage;
        row["overflow"] = report.cov_ovf.overflow;
        row["f_co"] = report.cov_ovf.f_co;
        row["m_iou"] = report.m_iou;
        nlohmann::json per_scene = nlohmann::json::array();
        for (const SceneMetrics& scene : report.per_scene) {
            per_scene.push_back({{"scene", scene.scene},
                                 {"coverage", scene.coverage},
                                 {"overflow", scene.overflow},
                                 {"best_iou", scene.best_iou}});
        }
        row["per_scene"] = std::move(per_scene);
        videos.push_back(std::move(row));
    }
    doc["videos"] = std::move(videos);
    doc["average"] = {{"coverage", average.cov_ovf.coverage},
                      {"overflow", average.cov_ovf.overflow},
                      {"f_co", average.cov_ovf.f_co},
                      {"m_iou", average.m_iou}};
    if (cmd.report_out.empty()) {
        std::cout << doc.dump(2) << "\n";
    } else {
        atomic_write(cmd.report_out, doc.dump(2) + "\n");
    }
    return average;
}

void cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    if (out_dir.empty()) {
        throw std::invalid_argument("synth: --out directory is required");
    }
    generate_fixtures(spec, out_dir);
}

void cmd_baseline(const BaselineCommand& cmd) {
    if (cmd.scenes_out.empty()) {
        throw std::invalid_argument("baseline: --scenes-out path is required");
    }
    VideoPaths paths = video_paths(cmd.data_dir, cmd.video);
    std::filesystem::path hist_path = cmd.hist.empty() ? paths.hist : cmd.hist;
    ShotTimeline timeline = parse_shots(paths.shots, cmd.fps);
    Eigen::MatrixXd hist = load_visual_descriptors(hist_path, timeline, DescriptorFormat::Csv);

    const int n = timeline.shot_count();
    const long span_start = timeline.shots().front().frame_start;
    const long span = timeline.end_frame() - span_start;
    Eigen::MatrixXd points(n, hist.cols() + 1);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd row = hist.row(i).transpose();
        double sum = row.lpNorm<1>();
        if (sum > 0.0) {
            row /= sum;
        }
        points.row(i).head(hist.cols()) = row.transpose();
        double temporal =
            static_cast<double>(timeline.shots()[static_cast<std::size_t>(i)].center_frame() -
                                span_start) /
            static_cast<double>(span);
        points(i, hist.cols()) = cmd.time_weight * temporal;
    }
    Eigen::MatrixXd distances = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d = (points.row(i) - points.row(j)).norm();
            distances(i, j) = d;
            distances(j, i) = d;
        }
    }
    SegmentResult result = segment_distances(distances, cmd.spectral);
    atomic_write(cmd.scenes_out, scenes_to_csv(result.segmentation));
}

}  // namespace sceneseg
