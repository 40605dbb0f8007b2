#include "sceneseg/timeline.hpp"

#include "sceneseg/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sceneseg {

ShotTimeline::ShotTimeline(std::string video_id, double fps, std::vector<Shot> shots)
    : video_id_(std::move(video_id)), fps_(fps), shots_(std::move(shots)) {
    if (!(fps_ > 0.0) || !std::isfinite(fps_)) {
        throw std::invalid_argument("fps must be positive");
    }
    if (shots_.empty()) {
        throw std::invalid_argument("timeline has no shots");
    }
    for (std::size_t i = 0; i < shots_.size(); ++i) {
        const Shot& shot = shots_[i];
        if (shot.index != static_cast<int>(i)) {
            throw std::invalid_argument("shot index mismatch at position " + std::to_string(i));
        }
        if (shot.frame_start >= shot.frame_end) {
            throw std::invalid_argument("empty shot at index " + std::to_string(i));
        }
        if (i > 0 && shots_[i - 1].frame_end != shot.frame_start) {
            throw std::invalid_argument("gap between shots at index " + std::to_string(i));
        }
    }
}

SceneSegmentation::SceneSegmentation(std::vector<SceneInterval> scenes, int n_shots)
    : scenes_(std::move(scenes)), n_shots_(n_shots) {
    if (n_shots_ <= 0) {
        throw std::invalid_argument("segmentation needs a positive shot count");
    }
    if (scenes_.empty()) {
        throw std::invalid_argument("segmentation has no scenes");
    }
    int expected = 0;
    for (std::size_t t = 0; t < scenes_.size(); ++t) {
        const SceneInterval& scene = scenes_[t];
        if (scene.lo != expected) {
            throw std::invalid_argument("scene " + std::to_string(t) + " does not start at shot " +
                                        std::to_string(expected));
        }
        if (scene.hi <= scene.lo) {
            throw std::invalid_argument("scene " + std::to_string(t) + " is empty");
        }
        expected = scene.hi;
    }
    if (expected != n_shots_) {
        throw std::invalid_argument("scenes cover " + std::to_string(expected) + " shots, timeline has " +
                                    std::to_string(n_shots_));
    }
}

std::vector<int> SceneSegmentation::boundaries() const {
    std::vector<int> result;
    result.reserve(scenes_.size() - 1);
    for (std::size_t t = 1; t < scenes_.size(); ++t) {
        result.push_back(scenes_[t].lo);
    }
    return result;
}

SceneSegmentation segmentation_from_boundaries(std::vector<int> boundaries, int n_shots) {
    std::sort(boundaries.begin(), boundaries.end());
    std::vector<SceneInterval> scenes;
    int lo = 0;
    for (std::size_t i = 0; i < boundaries.size(); ++i) {
        int b = boundaries[i];
        if (b <= 0 || b >= n_shots) {
            throw std::invalid_argument("boundary shot index " + std::to_string(b) + " out of range (1.." +
                                        std::to_string(n_shots - 1) + ")");
        }
        if (i > 0 && boundaries[i - 1] == b) {
            throw std::invalid_argument("duplicate boundary shot index " + std::to_string(b));
        }
        scenes.push_back({lo, b});
        lo = b;
    }
    scenes.push_back({lo, n_shots});
    return SceneSegmentation(std::move(scenes), n_shots);
}

SceneSegmentation labels_to_segmentation(const std::vector<int>& labels) {
    if (labels.empty()) {
        throw std::invalid_argument("labels_to_segmentation: empty label list");
    }
    std::vector<SceneInterval> scenes;
    int lo = 0;
    for (std::size_t i = 1; i < labels.size(); ++i) {
        if (labels[i] != labels[i - 1]) {
            scenes.push_back({lo, static_cast<int>(i)});
            lo = static_cast<int>(i);
        }
    }
    scenes.push_back({lo, static_cast<int>(labels.size())});
    return SceneSegmentation(std::move(scenes), static_cast<int>(labels.size()));
}

std::vector<int> scene_labels(const SceneSegmentation& segmentation) {
    std::vector<int> labels(static_cast<std::size_t>(segmentation.shot_count()), 0);
    for (std::size_t t = 0; t < segmentation.scenes().size(); ++t) {
        const SceneInterval& scene = segmentation.scenes()[t];
        for (int s = scene.lo; s < scene.hi; ++s) {
            labels[static_cast<std::size_t>(s)] = static_cast<int>(t);
        }
    }
    return labels;
}

namespace {
constexpr const char* kShotsHeader = "index,frame_start,frame_end";
}

ShotTimeline parse_shots(const std::filesystem::path& file, double fps) {
    auto lines = read_lines(file);
    if (lines.empty()) {
        throw ParseError(file, 1, "empty file");
    }
    if (lines.front().text != kShotsHeader) {
        throw ParseError(file, lines.front().number,
                         std::string("expected header '") + kShotsHeader + "'");
    }
    std::vector<Shot> shots;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const TextLine& line = lines[i];
        auto fields = split_fields(line.text);
        if (fields.size() != 3) {
            throw ParseError(file, line.number, "expected 3 fields, got " + std::to_string(fields.size()));
        }
        Shot shot;
        shot.index = static_cast<int>(parse_long_field(fields[0], file, line.number));
        shot.frame_start = parse_long_field(fields[1], file, line.number);
        shot.frame_end = parse_long_field(fields[2], file, line.number);
        if (shot.index != static_cast<int>(shots.size())) {
            throw ParseError(file, line.number,
                             "shot index " + std::to_string(shot.index) + " out of order, expected " +
                                 std::to_string(shots.size()));
        }
        if (shot.frame_start >= shot.frame_end) {
            throw ParseError(file, line.number, "empty shot");
        }
        if (!shots.empty() && shots.back().frame_end != shot.frame_start) {
            throw ParseError(file, line.number,
                             "gap between shots at index " + std::to_string(shot.index));
        }
        shots.push_back(shot);
    }
    if (shots.empty()) {
        throw ParseError(file, lines.front().number, "no shot rows after header");
    }
    return ShotTimeline(file.stem().string(), fps, std::move(shots));
}

SceneSegmentation parse_scenes(const std::filesystem::path& file, const ShotTimeline& timeline) {
    std::vector<int> boundaries;
    if (std::filesystem::exists(file) && std::filesystem::file_size(file) == 0) {
        return segmentation_from_boundaries({}, timeline.shot_count());
    }
    auto lines = read_lines(file);
    boundaries.reserve(lines.size());
    for (const TextLine& line : lines) {
        long b = parse_long_field(line.text, file, line.number);
        if (b <= 0 || b >= timeline.shot_count()) {
            throw ParseError(file, line.number,
                             "boundary shot index " + std::to_string(b) + " out of range (1.." +
                                 std::to_string(timeline.shot_count() - 1) + ")");
        }
        boundaries.push_back(static_cast<int>(b));
    }
    try {
        return segmentation_from_boundaries(std::move(boundaries), timeline.shot_count());
    } catch (const std::invalid_argument& e) {
        throw ParseError(file.string() + ": " + e.what());
    }
}

std::vector<TranscriptWord> parse_transcript(const std::filesystem::path& file) {
    std::vector<TranscriptWord> words;
    if (std::filesystem::exists(file) && std::filesystem::file_size(file) == 0) {
        return words;
    }
    auto lines = read_lines(file);
    words.reserve(lines.size());
    for (const TextLine& line : lines) {
        auto fields = split_fields(line.text);
        if (fields.size() != 2) {
            throw ParseError(file, line.number, "expected 2 fields, got " + std::to_string(fields.size()));
        }
        if (fields[0].empty()) {
            throw ParseError(file, line.number, "empty token");
        }
        TranscriptWord word;
        word.token = fields[0];
        for (char& c : word.token) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        word.time = parse_double_field(fields[1], file, line.number);
        if (!std::isfinite(word.time) || word.time < 0.0) {
            throw ParseError(file, line.number, "word time must be finite and >= 0");
        }
        words.push_back(std::move(word));
    }
    std::stable_sort(words.begin(), words.end(),
                     [](const TranscriptWord& a, const TranscriptWord& b) { return a.time < b.time; });
    return words;
}

std::string shots_to_csv(const ShotTimeline& timeline) {
    std::ostringstream out;
    out << kShotsHeader << "\n";
    for (const Shot& shot : timeline.shots()) {
        out << shot.index << "," << shot.frame_start << "," << shot.frame_end << "\n";
    }
    return out.str();
}

std::string scenes_to_csv(const SceneSegmentation& segmentation) {
    std::ostringstream out;
    for (int b : segmentation.boundaries()) {
        out << b << "\n";
    }
    return out.str();
}

std::string transcript_to_csv(const std::vector<TranscriptWord>& words) {
    std::ostringstream out;
    char buffer[48];
    for (const TranscriptWord& word : words) {
        std::snprintf(buffer, sizeof(buffer), "%.3f", word.time);
        out << word.token << "," << buffer << "\n";
    }
    return out.str();
}

}  // namespace sceneseg
