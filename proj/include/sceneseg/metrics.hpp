#pragma once

#include <string>
#include <vector>

#include "sceneseg/timeline.hpp"

namespace sceneseg {

// Per-scene agreement scores for one ground-truth scene.
struct SceneMetrics {
    int scene = 0;          // ground-truth scene index t
    double coverage = 0.0;  // fraction of the scene taken by the best-overlapping detected scene
    double overflow = 0.0;  // spill of overlapping detected scenes into the neighbours, in [0, 1]
    double best_iou = 0.0;  // best frame-length IoU against any detected scene
};

// Shot-count-weighted coverage/overflow aggregate over a whole video.
struct CoverageOverflow {
    double coverage = 0.0;
    double overflow = 0.0;
    double f_co = 0.0;  // harmonic mean of coverage and 1 - overflow
};

struct MetricReport {
    std::string video_id;
    CoverageOverflow cov_ovf;
    double m_iou = 0.0;
    std::vector<SceneMetrics> per_scene;  // one entry per ground-truth scene
};

// Coverage of ground-truth scene t under the detected segmentation.
double coverage_of_scene(const SceneSegmentation& gt, const SceneSegmentation& detected, int t);

// Overflow of ground-truth scene t. Neighbouring scenes that do not exist
// contribute zero shots to the denominator; a zero denominator yields 0 when
// the numerator is 0 and 1 otherwise. The result is clamped to [0, 1].
double overflow_of_scene(const SceneSegmentation& gt, const SceneSegmentation& detected, int t);

// Aggregates per-scene coverage/overflow weighted by ground-truth scene shot
// counts and derives f_co. Both inputs must describe the same shot count.
CoverageOverflow aggregate_cov_ovf(const SceneSegmentation& gt, const SceneSegmentation& detected);

// Mean of the two directed best-match IoU averages, measured in frames.
// Symmetric in its last two arguments by construction.
double m_iou(const ShotTimeline& timeline, const SceneSegmentation& gt,
             const SceneSegmentation& detected);

// Full per-video report.
MetricReport evaluate_segmentation(const ShotTimeline& timeline, const SceneSegmentation& gt,
                                   const SceneSegmentation& detected);

// Unweighted mean over per-video reports; per_scene is left empty.
MetricReport average_reports(const std::vector<MetricReport>& reports);

// All 2^(n-1) segmentations of n shots, for small n only (n <= 12).
std::vector<SceneSegmentation> enumerate_segmentations(int n_shots);

}  // namespace sceneseg
