#include "sceneseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sceneseg {

namespace {

// Number of shots shared by two shot intervals.
int shot_overlap(const SceneInterval& a, const SceneInterval& b) {
    int lo = std::max(a.lo, b.lo);
    int hi = std::min(a.hi, b.hi);
    return std::max(0, hi - lo);
}

void check_compatible(const SceneSegmentation& gt, const SceneSegmentation& detected) {
    if (gt.shot_count() != detected.shot_count()) {
        throw std::invalid_argument("segmentations cover different shot counts: " +
                                    std::to_string(gt.shot_count()) + " vs " +
                                    std::to_string(detected.shot_count()));
    }
}

}  // namespace

double coverage_of_scene(const SceneSegmentation& gt, const SceneSegmentation& detected, int t) {
    check_compatible(gt, detected);
    const SceneInterval& scene = gt.scenes().at(static_cast<std::size_t>(t));
    int best = 0;
    for (const SceneInterval& det : detected.scenes()) {
        best = std::max(best, shot_overlap(scene, det));
    }
    return static_cast<double>(best) / static_cast<double>(scene.shot_count());
}

double overflow_of_scene(const SceneSegmentation& gt, const SceneSegmentation& detected, int t) {
    check_compatible(gt, detected);
    const auto& scenes = gt.scenes();
    const SceneInterval& scene = scenes.at(static_cast<std::size_t>(t));
    long numerator = 0;
    for (const SceneInterval& det : detected.scenes()) {
        int inside = shot_overlap(scene, det);
        if (inside == 0) {
            continue;
        }
        numerator += det.shot_count() - inside;
    }
    long denominator = 0;
    if (t > 0) {
        denominator += scenes[static_cast<std::size_t>(t - 1)].shot_count();
    }
    if (t + 1 < static_cast<int>(scenes.size())) {
        denominator += scenes[static_cast<std::size_t>(t + 1)].shot_count();
    }
    if (denominator == 0) {
        return numerator == 0 ? 0.0 : 1.0;
    }
    double value = static_cast<double>(numerator) / static_cast<double>(denominator);
    return std::clamp(value, 0.0, 1.0);
}

CoverageOverflow aggregate_cov_ovf(const SceneSegmentation& gt, const SceneSegmentation& detected) {
    check_compatible(gt, detected);
    double cov_sum = 0.0;
    double ovf_sum = 0.0;
    long total = 0;
    for (std::size_t t = 0; t < gt.scenes().size(); ++t) {
        long weight = gt.scenes()[t].shot_count();
        cov_sum += static_cast<double>(weight) * coverage_of_scene(gt, detected, static_cast<int>(t));
        ovf_sum += static_cast<double>(weight) * overflow_of_scene(gt, detected, static_cast<int>(t));
        total += weight;
    }
    CoverageOverflow result;
    result.coverage = cov_sum / static_cast<double>(total);
    result.overflow = ovf_sum / static_cast<double>(total);
    double c = result.coverage;
    double anti = 1.0 - result.overflow;
    result.f_co = (c + anti > 0.0) ? 2.0 * c * anti / (c + anti) : 0.0;
    return result;
}

namespace {

// Frame span [lo, hi) of a scene's shot interval.
struct FrameSpan {
    long lo;
    long hi;
};

std::vector<FrameSpan> frame_spans(const ShotTimeline& timeline, const SceneSegmentation& seg) {
    std::vector<FrameSpan> spans;
    spans.reserve(seg.scenes().size());
    for (const SceneInterval& scene : seg.scenes()) {
        spans.push_back({timeline.shots()[static_cast<std::size_t>(scene.lo)].frame_start,
                         timeline.shots()[static_cast<std::size_t>(scene.hi - 1)].frame_end});
    }
    return spans;
}

double frame_iou(const FrameSpan& a, const FrameSpan& b) {
    long inter = std::min(a.hi, b.hi) - std::max(a.lo, b.lo);
    if (inter <= 0) {
        return 0.0;
    }
    long uni = std::max(a.hi, b.hi) - std::min(a.lo, b.lo);
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// Mean over `from` of the best IoU against any span in `against`.
double directed_mean_best_iou(const std::vector<FrameSpan>& from,
                              const std::vector<FrameSpan>& against) {
    double sum = 0.0;
    for (const FrameSpan& span : from) {
        double best = 0.0;
        for (const FrameSpan& other : against) {
            best = std::max(best, frame_iou(span, other));
        }
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

}  // namespace

double m_iou(const ShotTimeline& timeline, const SceneSegmentation& gt,
             const SceneSegmentation& detected) {
    check_compatible(gt, detected);
    if (timeline.shot_count() != gt.shot_count()) {
        throw std::invalid_argument("segmentation does not match the timeline's shot count");
    }
    auto gt_spans = frame_spans(timeline, gt);
    auto det_spans = frame_spans(timeline, detected);
    return 0.5 * (directed_mean_best_iou(gt_spans, det_spans) +
                  directed_mean_best_iou(det_spans, gt_spans));
}

MetricReport evaluate_segmentation(const ShotTimeline& timeline, const SceneSegmentation& gt,
                                   const SceneSegmentation& detected) {
    MetricReport report;
    report.video_id = timeline.video_id();
    report.cov_ovf = aggregate_cov_ovf(gt, detected);
    report.m_iou = m_iou(timeline, gt, detected);
    auto gt_spans = frame_spans(timeline, gt);
    auto det_spans = frame_spans(timeline, detected);
    report.per_scene.reserve(gt.scenes().size());
    for (std::size_t t = 0; t < gt.scenes().size(); ++t) {
        SceneMetrics sm;
        sm.scene = static_cast<int>(t);
        sm.coverage = coverage_of_scene(gt, detected, static_cast<int>(t));
        sm.overflow = overflow_of_scene(gt, detected, static_cast<int>(t));
        for (const FrameSpan& det : det_spans) {
            sm.best_iou = std::max(sm.best_iou, frame_iou(gt_spans[t], det));
        }
        report.per_scene.push_back(sm);
    }
    return report;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
    if (reports.empty()) {
        throw std::invalid_argument("average_reports: no reports");
    }
    MetricReport mean;
    mean.video_id = "average";
    for (const MetricReport& r : reports) {
        mean.cov_ovf.coverage += r.cov_ovf.coverage;
        mean.cov_ovf.overflow += r.cov_ovf.overflow;
        mean.cov_ovf.f_co += r.cov_ovf.f_co;
        mean.m_iou += r.m_iou;
    }
    double n = static_cast<double>(reports.size());
    mean.cov_ovf.coverage /= n;
    mean.cov_ovf.overflow /= n;
    mean.cov_ovf.f_co /= n;
    mean.m_iou /= n;
    return mean;
}

std::vector<SceneSegmentation> enumerate_segmentations(int n_shots) {
    if (n_shots <= 0) {
        throw std::invalid_argument("enumerate_segmentations: shot count must be positive");
    }
    if (n_shots > 12) {
        throw std::invalid_argument("enumerate_segmentations: refusing n_shots > 12");
    }
    std::vector<SceneSegmentation> all;
    unsigned long count = 1ul << (n_shots - 1);
    all.reserve(count);
    for (unsigned long mask = 0; mask < count; ++mask) {
        std::vector<int> boundaries;
        for (int b = 1; b < n_shots; ++b) {
            if (mask & (1ul << (b - 1))) {
                boundaries.push_back(b);
            }
        }
        all.push_back(segmentation_from_boundaries(std::move(boundaries), n_shots));
    }
    return all;
}

}  // namespace sceneseg
