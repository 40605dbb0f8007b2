#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sceneseg/io.hpp"
#include "sceneseg/timeline.hpp"

namespace sceneseg::test {

inline std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file: " + file.string());
    }
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("sceneseg_" + tag + "_" + std::to_string(++counter));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path write_temp(const TempDir& dir, const std::string& name,
                                        const std::string& body) {
    auto path = dir / name;
    atomic_write(path, body);
    return path;
}

// n shots with the given frame counts, laid out contiguously from frame 0.
inline ShotTimeline make_timeline(const std::vector<long>& frame_counts, double fps = 25.0) {
    std::vector<Shot> shots;
    long start = 0;
    for (std::size_t i = 0; i < frame_counts.size(); ++i) {
        shots.push_back({static_cast<int>(i), start, start + frame_counts[i]});
        start += frame_counts[i];
    }
    return ShotTimeline("video", fps, std::move(shots));
}

// n shots, each `frames` long.
inline ShotTimeline uniform_timeline(int n, long frames = 100, double fps = 25.0) {
    return make_timeline(std::vector<long>(static_cast<std::size_t>(n), frames), fps);
}

}  // namespace sceneseg::test
