#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sceneseg/timeline.hpp"

namespace sceneseg {

// Closed time interval in seconds.
struct TimeInterval {
    double lo = 0.0;
    double hi = 0.0;

    double duration() const { return hi - lo; }
    bool contains(double t) const { return t >= lo && t <= hi; }
};

// Token embeddings, l2-normalized on construction. Rows of vectors() are
// aligned with tokens(), which is sorted, so iteration order is reproducible.
class EmbeddingTable {
public:
    EmbeddingTable(std::vector<std::string> tokens, Eigen::MatrixXd vectors);

    int dim() const { return static_cast<int>(vectors_.cols()); }
    int size() const { return static_cast<int>(vectors_.rows()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const Eigen::MatrixXd& vectors() const { return vectors_; }
    std::optional<int> row_of(const std::string& token) const;

private:
    std::vector<std::string> tokens_;
    Eigen::MatrixXd vectors_;
};

// Reads a `token,v1,...,vE` CSV.
EmbeddingTable load_embedding_table(const std::filesystem::path& file);

// Unit-norm cluster directions for transcript words.
struct WordCodebook {
    Eigen::MatrixXd centroids;  // k rows, each unit norm

    int k() const { return static_cast<int>(centroids.rows()); }
    int dim() const { return static_cast<int>(centroids.cols()); }
};

// Index of the centroid with maximal cosine similarity; ties pick the
// smaller index.
int nearest_centroid(const WordCodebook& codebook, const Eigen::Ref<const Eigen::VectorXd>& v);

struct SphericalKmeansResult {
    WordCodebook codebook;
    std::vector<int> assignment;          // per input row
    std::vector<double> objective_trace;  // sum of assigned cosine similarities per iteration
};

// K-means on the unit sphere with cosine similarity. Rows of `vectors` must
// be unit norm. Seeded k-means++-style initialization; empty clusters are
// re-seeded with the currently worst-assigned point; stops when assignments
// repeat or after max_iter iterations.
SphericalKmeansResult spherical_kmeans(const Eigen::MatrixXd& vectors, int k, std::uint64_t seed,
                                       int max_iter = 100, int restarts = 8);

// Window centered on the shot's center frame with duration
// max(shot duration, w_min) seconds, clipped to the video extent.
TimeInterval context_window(const Shot& shot, const ShotTimeline& timeline, double w_min);

// Tally of transcript words seen by bow_vector calls.
struct BowStats {
    long in_vocab = 0;
    long out_of_vocab = 0;
};

// L1-normalized histogram of codebook assignments for the in-vocabulary
// words inside the window; all-zero when the window has none.
Eigen::VectorXd bow_vector(const TimeInterval& window, const std::vector<TranscriptWord>& transcript,
                           const EmbeddingTable& table, const WordCodebook& codebook,
                           BowStats* stats = nullptr);

enum class DescriptorFormat { Csv, Binary };

// One descriptor row per shot, shot order. CSV rows are comma-separated
// reals; the binary layout is an 8-byte magic "SSEGVD01", two little-endian
// u32 (dim, count), then count*dim little-endian float64 values row-major.
Eigen::MatrixXd load_visual_descriptors(const std::filesystem::path& file, const ShotTimeline& timeline,
                                        DescriptorFormat format = DescriptorFormat::Csv);

void write_visual_descriptors(const std::filesystem::path& file, const Eigen::MatrixXd& descriptors,
                              DescriptorFormat format = DescriptorFormat::Csv);

// Per-shot network input.
struct ShotFeatures {
    Eigen::VectorXd visual;  // length D_in
    Eigen::VectorXd words;   // length d_words, l1-normalized or all-zero
    double center_time = 0.0;
    long center_index = 0;      // center frame number
    double temporal_pos = 0.0;  // center_index as a fraction of the video span
};

std::vector<ShotFeatures> build_shot_features(const ShotTimeline& timeline,
                                              const Eigen::MatrixXd& visual,
                                              const std::vector<TranscriptWord>& transcript,
                                              const EmbeddingTable& table, const WordCodebook& codebook,
                                              double w_min, BowStats* stats = nullptr);

}  // namespace sceneseg
