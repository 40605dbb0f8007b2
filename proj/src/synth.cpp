#include "sceneseg/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "sceneseg/features.hpp"
#include "sceneseg/io.hpp"
#include "sceneseg/rng.hpp"
#include "sceneseg/timeline.hpp"

namespace sceneseg {

void SyntheticSpec::validate() const {
    if (n_videos < 1 || n_scenes < 1 || dim < 1 || hist_dim < 1 || vocab < 1 || embedding_dim < 1) {
        throw std::invalid_argument("synthetic spec: all counts must be positive");
    }
    if (shots_per_scene_lo < 1 || shots_per_scene_hi < shots_per_scene_lo) {
        throw std::invalid_argument("synthetic spec: bad shots-per-scene range");
    }
    if (shot_frames_lo < 1 || shot_frames_hi < shot_frames_lo) {
        throw std::invalid_argument("synthetic spec: bad shot-frames range");
    }
    if (!(separation > 0.0)) {
        throw std::invalid_argument("synthetic spec: separation must be positive");
    }
    if (hist_separation < 0.0) {
        throw std::invalid_argument("synthetic spec: hist separation must be >= 0");
    }
    if (nuisance < 0.0) {
        throw std::invalid_argument("synthetic spec: nuisance must be >= 0");
    }
    if (words_per_shot < 0.0) {
        throw std::invalid_argument("synthetic spec: words-per-shot must be >= 0");
    }
    if (vocab < n_scenes) {
        throw std::invalid_argument("synthetic spec: vocabulary smaller than the scene count");
    }
    if (!(fps > 0.0)) {
        throw std::invalid_argument("synthetic spec: fps must be positive");
    }
}

namespace {

std::string token_name(int t) {
    char buffer[16];
    std::snprintf(buffer, sizeof(buffer), "tok%03d", t);
    return buffer;
}

std::string video_name(int v) {
    char buffer[16];
    std::snprintf(buffer, sizeof(buffer), "video%02d", v);
    return buffer;
}

// Contiguous bucket of token t among n_scenes buckets.
int bucket_of(int t, int vocab, int n_scenes) {
    return static_cast<int>(static_cast<long>(t) * n_scenes / vocab);
}

Eigen::VectorXd random_unit(Rng& rng, int dim) {
    Eigen::VectorXd v(dim);
    double norm = 0.0;
    while (norm == 0.0) {
        for (int d = 0; d < dim; ++d) {
            v[d] = rng.normal();
        }
        norm = v.norm();
    }
    return v / norm;
}

void write_embeddings(const SyntheticSpec& spec, const std::filesystem::path& file) {
    Rng rng(splitmix64(spec.seed ^ 0x9e3779b97f4a7c15ULL));
    std::vector<Eigen::VectorXd> directions;
    directions.reserve(static_cast<std::size_t>(spec.n_scenes));
    for (int s = 0; s < spec.n_scenes; ++s) {
        directions.push_back(random_unit(rng, spec.embedding_dim));
    }
    std::ostringstream out;
    // Noise norm stays near 0.25 regardless of dimension, so every token
    // lands close to its bucket direction and the buckets stay separable.
    const double noise_scale = 0.25 / std::sqrt(static_cast<double>(spec.embedding_dim));
    for (int t = 0; t < spec.vocab; ++t) {
        Eigen::VectorXd noise(spec.embedding_dim);
        for (int d = 0; d < spec.embedding_dim; ++d) {
            noise[d] = rng.normal();
        }
        Eigen::VectorXd vec = directions[static_cast<std::size_t>(bucket_of(t, spec.vocab, spec.n_scenes))] +
                              noise_scale * noise;
        vec /= vec.norm();
        out << token_name(t);
        for (int d = 0; d < spec.embedding_dim; ++d) {
            out << "," << format_double(vec[d]);
        }
        out << "\n";
    }
    atomic_write(file, out.str());
}

// With nuisance noise enabled only the front half of the dims carries scene
// anchors; the back half is anchor-free shot noise in every video.
int anchored_dims(const SyntheticSpec& spec) {
    return spec.nuisance > 0.0 ? (spec.dim + 1) / 2 : spec.dim;
}

// Scene anchors are drawn once per dataset, not per video: scene s of every
// video shares one center, so structure learned on some videos carries over
// to the rest. Only shot noise and scene lengths vary per video.
Eigen::MatrixXd scene_anchors(const SyntheticSpec& spec) {
    Rng rng(splitmix64(spec.seed ^ 0xbf58476d1ce4e5b9ULL));
    Eigen::MatrixXd anchors = Eigen::MatrixXd::Zero(spec.n_scenes, spec.dim);
    const int anchored = anchored_dims(spec);
    for (int s = 0; s < spec.n_scenes; ++s) {
        for (int d = 0; d < anchored; ++d) {
            anchors(s, d) = spec.separation * rng.normal();
        }
    }
    return anchors;
}

void write_video(const SyntheticSpec& spec, const Eigen::MatrixXd& visual_centers,
                 const std::filesystem::path& out_dir, int v) {
    Rng rng(splitmix64(spec.seed + 1 + static_cast<std::uint64_t>(v)));
    const std::string id = video_name(v);

    std::vector<int> shots_in_scene(static_cast<std::size_t>(spec.n_scenes));
    int n_shots = 0;
    for (int s = 0; s < spec.n_scenes; ++s) {
        shots_in_scene[static_cast<std::size_t>(s)] =
            rng.uniform_int(spec.shots_per_scene_lo, spec.shots_per_scene_hi);
        n_shots += shots_in_scene[static_cast<std::size_t>(s)];
    }

    std::vector<Shot> shots;
    std::vector<int> shot_scene;
    shots.reserve(static_cast<std::size_t>(n_shots));
    long frame = 0;
    for (int s = 0; s < spec.n_scenes; ++s) {
        for (int i = 0; i < shots_in_scene[static_cast<std::size_t>(s)]; ++i) {
            long frames = rng.uniform_int(spec.shot_frames_lo, spec.shot_frames_hi);
            shots.push_back({static_cast<int>(shots.size()), frame, frame + frames});
            shot_scene.push_back(s);
            frame += frames;
        }
    }
    ShotTimeline timeline(id, spec.fps, shots);

    std::vector<int> boundaries;
    int cursor = 0;
    for (int s = 0; s + 1 < spec.n_scenes; ++s) {
        cursor += shots_in_scene[static_cast<std::size_t>(s)];
        boundaries.push_back(cursor);
    }
    SceneSegmentation truth = segmentation_from_boundaries(boundaries, n_shots);

    const int anchored = anchored_dims(spec);
    Eigen::MatrixXd visual(n_shots, spec.dim);
    for (int i = 0; i < n_shots; ++i) {
        for (int d = 0; d < spec.dim; ++d) {
            visual(i, d) = d < anchored
                               ? visual_centers(shot_scene[static_cast<std::size_t>(i)], d) + rng.normal()
                               : spec.nuisance * rng.normal();
        }
    }

    Eigen::MatrixXd hist_centers(spec.n_scenes, spec.hist_dim);
    for (int s = 0; s < spec.n_scenes; ++s) {
        for (int d = 0; d < spec.hist_dim; ++d) {
            hist_centers(s, d) = spec.hist_separation * rng.uniform();
        }
    }
    Eigen::MatrixXd hist(n_shots, spec.hist_dim);
    for (int i = 0; i < n_shots; ++i) {
        for (int d = 0; d < spec.hist_dim; ++d) {
            hist(i, d) = hist_centers(shot_scene[static_cast<std::size_t>(i)], d) + 0.5 * rng.uniform();
        }
    }

    std::vector<std::vector<int>> bucket_tokens(static_cast<std::size_t>(spec.n_scenes));
    for (int t = 0; t < spec.vocab; ++t) {
        bucket_tokens[static_cast<std::size_t>(bucket_of(t, spec.vocab, spec.n_scenes))].push_back(t);
    }
    std::vector<TranscriptWord> words;
    for (int i = 0; i < n_shots; ++i) {
        const Shot& shot = timeline.shots()[static_cast<std::size_t>(i)];
        const auto& bucket = bucket_tokens[static_cast<std::size_t>(shot_scene[static_cast<std::size_t>(i)])];
        int count = rng.poisson(spec.words_per_shot);
        for (int w = 0; w < count; ++w) {
            TranscriptWord word;
            word.token = token_name(bucket[rng.uniform_index(bucket.size())]);
            word.time = rng.uniform(static_cast<double>(shot.frame_start) / spec.fps,
                                    static_cast<double>(shot.frame_end) / spec.fps);
            words.push_back(std::move(word));
        }
    }
    std::stable_sort(words.begin(), words.end(),
                     [](const TranscriptWord& a, const TranscriptWord& b) { return a.time < b.time; });

    atomic_write(out_dir / (id + ".shots.csv"), shots_to_csv(timeline));
    atomic_write(out_dir / (id + ".scenes.csv"), scenes_to_csv(truth));
    atomic_write(out_dir / (id + ".transcript.csv"), transcript_to_csv(words));
    write_visual_descriptors(out_dir / (id + ".visual.csv"), visual, DescriptorFormat::Csv);
    write_visual_descriptors(out_dir / (id + ".hist.csv"), hist, DescriptorFormat::Csv);
}

}  // namespace

std::vector<std::string> synthetic_video_ids(const SyntheticSpec& spec) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(spec.n_videos));
    for (int v = 0; v < spec.n_videos; ++v) {
        ids.push_back(video_name(v));
    }
    return ids;
}

std::vector<std::string> generate_fixtures(const SyntheticSpec& spec,
                                           const std::filesystem::path& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    write_embeddings(spec, out_dir / "embeddings.csv");
    const Eigen::MatrixXd anchors = scene_anchors(spec);
    for (int v = 0; v < spec.n_videos; ++v) {
        write_video(spec, anchors, out_dir, v);
    }
    return synthetic_video_ids(spec);
}

}  // namespace sceneseg
