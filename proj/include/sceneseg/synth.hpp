#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sceneseg {

// Desk-scale fixture generator: planted scene structure with controllable
// separation between scene feature centers (unit within-scene noise).
struct SyntheticSpec {
    int n_videos = 1;
    int n_scenes = 8;
    int shots_per_scene_lo = 3;
    int shots_per_scene_hi = 6;
    int shot_frames_lo = 48;
    int shot_frames_hi = 240;
    int dim = 16;              // visual descriptor length
    double separation = 8.0;   // scene-center spread over within-scene noise
    double nuisance = 0.0;     // shot-level noise on the anchor-free back half
                               // of the dims; 0 keeps every dim anchored
    int hist_dim = 8;          // baseline histogram length
    double hist_separation = 1.0;
    int vocab = 60;
    double words_per_shot = 3.0;
    int embedding_dim = 12;
    double fps = 25.0;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<std::string> synthetic_video_ids(const SyntheticSpec& spec);

// Writes <id>.shots.csv, <id>.scenes.csv, <id>.transcript.csv,
// <id>.visual.csv and <id>.hist.csv per video, plus one shared
// embeddings.csv. Returns the video ids. Identical spec, identical bytes.
std::vector<std::string> generate_fixtures(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir);

}  // namespace sceneseg
