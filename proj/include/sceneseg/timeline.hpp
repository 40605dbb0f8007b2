#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace sceneseg {

// One shot: a contiguous run of frames, half-open [frame_start, frame_end).
struct Shot {
    int index = 0;
    long frame_start = 0;
    long frame_end = 0;

    long frame_count() const { return frame_end - frame_start; }
    long center_frame() const { return (frame_start + frame_end) / 2; }
    bool operator==(const Shot&) const = default;
};

// The ordered, gap-free shot decomposition of one video; the index space every
// other module works in.
class ShotTimeline {
public:
    ShotTimeline(std::string video_id, double fps, std::vector<Shot> shots);

    const std::string& video_id() const { return video_id_; }
    double fps() const { return fps_; }
    const std::vector<Shot>& shots() const { return shots_; }
    int shot_count() const { return static_cast<int>(shots_.size()); }
    long end_frame() const { return shots_.back().frame_end; }
    double duration_seconds() const { return static_cast<double>(end_frame()) / fps_; }

private:
    std::string video_id_;
    double fps_ = 0.0;
    std::vector<Shot> shots_;
};

// Contiguous run of shots, half-open [lo, hi) in shot indices.
struct SceneInterval {
    int lo = 0;
    int hi = 0;
    int shot_count() const { return hi - lo; }
    bool operator==(const SceneInterval&) const = default;
};

// A partition of the shot index range 0..n-1 into contiguous scenes.
class SceneSegmentation {
public:
    SceneSegmentation(std::vector<SceneInterval> scenes, int n_shots);

    const std::vector<SceneInterval>& scenes() const { return scenes_; }
    int scene_count() const { return static_cast<int>(scenes_.size()); }
    int shot_count() const { return n_shots_; }

    // Interior boundary positions (first shot index of every scene but the
    // first), ascending.
    std::vector<int> boundaries() const;

    bool operator==(const SceneSegmentation&) const = default;

private:
    std::vector<SceneInterval> scenes_;
    int n_shots_ = 0;
};

struct TranscriptWord {
    std::string token;   // lowercase
    double time = 0.0;   // seconds from video start
    bool operator==(const TranscriptWord&) const = default;
};

SceneSegmentation segmentation_from_boundaries(std::vector<int> boundaries, int n_shots);

// A scene boundary opens exactly where consecutive labels differ; labels need
// not be globally contiguous.
SceneSegmentation labels_to_segmentation(const std::vector<int>& labels);

// Per-shot scene ordinal for a segmentation.
std::vector<int> scene_labels(const SceneSegmentation& segmentation);

// Files. Shots: `index,frame_start,frame_end` header plus rows. Scenes: one
// boundary shot index per row (boundary sits before the named shot).
// Transcript: `token,time` rows. All errors carry file and line.
ShotTimeline parse_shots(const std::filesystem::path& file, double fps = 25.0);
SceneSegmentation parse_scenes(const std::filesystem::path& file, const ShotTimeline& timeline);
std::vector<TranscriptWord> parse_transcript(const std::filesystem::path& file);

std::string shots_to_csv(const ShotTimeline& timeline);
std::string scenes_to_csv(const SceneSegmentation& segmentation);
std::string transcript_to_csv(const std::vector<TranscriptWord>& words);

}  // namespace sceneseg
