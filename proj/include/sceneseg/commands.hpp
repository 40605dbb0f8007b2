#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sceneseg/cluster.hpp"
#include "sceneseg/features.hpp"
#include "sceneseg/metrics.hpp"
#include "sceneseg/siamese.hpp"
#include "sceneseg/synth.hpp"

namespace sceneseg {

// Per-video file layout inside a data directory.
struct VideoPaths {
    std::filesystem::path shots;
    std::filesystem::path scenes;
    std::filesystem::path transcript;
    std::filesystem::path visual;
    std::filesystem::path hist;
};

VideoPaths video_paths(const std::filesystem::path& data_dir, const std::string& id,
                       DescriptorFormat visual_format = DescriptorFormat::Csv);

struct FeatureOptions {
    double fps = 25.0;
    double w_min = 20.0;  // context window minimum, seconds
    DescriptorFormat visual_format = DescriptorFormat::Csv;
};

struct TrainCommand {
    std::filesystem::path data_dir;
    std::vector<std::string> videos;
    std::filesystem::path embeddings;  // empty: data_dir/embeddings.csv
    std::filesystem::path model_out;
    std::filesystem::path trace_out;  // empty: model_out with a .trace.csv extension
    FeatureOptions features;
    int d_vis = 1183;
    int d_words = 200;
    int hidden = 200;
    TrainConfig train;
};

void cmd_train(const TrainCommand& cmd);

struct SegmentCommand {
    std::filesystem::path data_dir;
    std::string video;
    std::filesystem::path model_in;
    std::filesystem::path embeddings;      // empty: data_dir/embeddings.csv
    std::filesystem::path scenes_out;
    std::filesystem::path similarity_out;  // empty: skip; ".pgm" writes a P5 image, else CSV
    std::filesystem::path manifest_out;    // empty: skip
    double fps = 25.0;
    DescriptorFormat visual_format = DescriptorFormat::Csv;
    SpectralConfig spectral;
};

void cmd_segment(const SegmentCommand& cmd);

struct EvaluateCommand {
    std::vector<std::filesystem::path> shots;
    std::vector<std::filesystem::path> gt;
    std::vector<std::filesystem::path> detected;
    std::filesystem::path report_out;  // empty: stdout
    double fps = 25.0;
    int jobs = 1;
};

// Evaluates each (shots, gt, detected) triple and the unweighted average;
// returns the average row.
MetricReport cmd_evaluate(const EvaluateCommand& cmd);

void cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

struct BaselineCommand {
    std::filesystem::path data_dir;
    std::string video;
    std::filesystem::path hist;  // empty: data_dir/<video>.hist.csv
    std::filesystem::path scenes_out;
    double fps = 25.0;
    double time_weight = 1.0;
    SpectralConfig spectral;
};

// Color-histogram + time features through the same kernel and spectral
// pipeline.
void cmd_baseline(const BaselineCommand& cmd);

}  // namespace sceneseg
