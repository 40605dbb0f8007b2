#include "sceneseg/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sceneseg/io.hpp"
#include "sceneseg/rng.hpp"

namespace sceneseg {

EmbeddingTable::EmbeddingTable(std::vector<std::string> tokens, Eigen::MatrixXd vectors)
    : tokens_(std::move(tokens)), vectors_(std::move(vectors)) {
    if (tokens_.empty() || vectors_.rows() != static_cast<Eigen::Index>(tokens_.size())) {
        throw std::invalid_argument("embedding table: token/vector count mismatch");
    }
    if (vectors_.cols() == 0) {
        throw std::invalid_argument("embedding table: zero-dimensional vectors");
    }
    std::vector<int> order(tokens_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return tokens_[static_cast<std::size_t>(a)] < tokens_[static_cast<std::size_t>(b)]; });
    std::vector<std::string> sorted_tokens(tokens_.size());
    Eigen::MatrixXd sorted_vectors(vectors_.rows(), vectors_.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        sorted_tokens[i] = std::move(tokens_[static_cast<std::size_t>(order[i])]);
        sorted_vectors.row(static_cast<Eigen::Index>(i)) = vectors_.row(order[i]);
    }
    tokens_ = std::move(sorted_tokens);
    vectors_ = std::move(sorted_vectors);
    for (std::size_t i = 1; i < tokens_.size(); ++i) {
        if (tokens_[i] == tokens_[i - 1]) {
            throw std::invalid_argument("embedding table: duplicate token '" + tokens_[i] + "'");
        }
    }
    for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
        if (!vectors_.row(i).allFinite()) {
            throw std::invalid_argument("embedding table: non-finite vector for token '" +
                                        tokens_[static_cast<std::size_t>(i)] + "'");
        }
        double norm = vectors_.row(i).norm();
        if (norm == 0.0) {
            throw std::invalid_argument("embedding table: zero vector for token '" +
                                        tokens_[static_cast<std::size_t>(i)] + "'");
        }
        vectors_.row(i) /= norm;
    }
}

std::optional<int> EmbeddingTable::row_of(const std::string& token) const {
    auto it = std::lower_bound(tokens_.begin(), tokens_.end(), token);
    if (it == tokens_.end() || *it != token) {
        return std::nullopt;
    }
    return static_cast<int>(it - tokens_.begin());
}

EmbeddingTable load_embedding_table(const std::filesystem::path& file) {
    auto lines = read_lines(file);
    if (lines.empty()) {
        throw ParseError(file, 1, "empty embedding table");
    }
    std::vector<std::string> tokens;
    std::vector<std::vector<double>> rows;
    std::size_t dim = 0;
    for (const TextLine& line : lines) {
        auto fields = split_fields(line.text);
        if (fields.size() < 2) {
            throw ParseError(file, line.number, "expected token and at least one coordinate");
        }
        if (fields[0].empty()) {
            throw ParseError(file, line.number, "empty token");
        }
        if (dim == 0) {
            dim = fields.size() - 1;
        } else if (fields.size() - 1 != dim) {
            throw ParseError(file, line.number,
                             "expected " + std::to_string(dim) + " coordinates, got " +
                                 std::to_string(fields.size() - 1));
        }
        std::vector<double> row(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            row[d] = parse_double_field(fields[d + 1], file, line.number);
        }
        tokens.push_back(fields[0]);
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
        }
    }
    return EmbeddingTable(std::move(tokens), std::move(vectors));
}

int nearest_centroid(const WordCodebook& codebook, const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() != codebook.centroids.cols()) {
        throw std::invalid_argument("nearest_centroid: dimension mismatch");
    }
    int best = 0;
    double best_sim = codebook.centroids.row(0).dot(v);
    for (Eigen::Index j = 1; j < codebook.centroids.rows(); ++j) {
        double sim = codebook.centroids.row(j).dot(v);
        if (sim > best_sim) {
            best_sim = sim;
            best = static_cast<int>(j);
        }
    }
    return best;
}

namespace {

int count_distinct_rows(const Eigen::MatrixXd& vectors) {
    std::set<std::vector<double>> seen;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        std::vector<double> row(vectors.cols() > 0 ? static_cast<std::size_t>(vectors.cols()) : 0);
        for (Eigen::Index d = 0; d < vectors.cols(); ++d) {
            row[static_cast<std::size_t>(d)] = vectors(i, d);
        }
        seen.insert(std::move(row));
    }
    return static_cast<int>(seen.size());
}

// Index of the point with the lowest similarity to its assigned centroid,
// skipping indices already consumed as re-seeds this round.
int worst_assigned_point(const Eigen::MatrixXd& vectors, const Eigen::MatrixXd& centroids,
                         const std::vector<int>& assignment, const std::set<int>& used) {
    int worst = -1;
    double worst_sim = 0.0;
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        if (used.count(static_cast<int>(i))) {
            continue;
        }
        double sim = centroids.row(assignment[static_cast<std::size_t>(i)]).dot(vectors.row(i));
        if (worst < 0 || sim < worst_sim) {
            worst = static_cast<int>(i);
            worst_sim = sim;
        }
    }
    return worst;
}

}  // namespace

namespace {

SphericalKmeansResult spherical_kmeans_once(const Eigen::MatrixXd& vectors, int k, Rng& rng,
                                            int max_iter) {
    const Eigen::Index n = vectors.rows();
    Eigen::MatrixXd centroids(k, vectors.cols());
    centroids.row(0) = vectors.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
    std::vector<double> weight(static_cast<std::size_t>(n));
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = centroids.row(0).dot(vectors.row(i));
            for (int c = 1; c < j; ++c) {
                best = std::max(best, centroids.row(c).dot(vectors.row(i)));
            }
            weight[static_cast<std::size_t>(i)] = std::max(0.0, 1.0 - best);
            total += weight[static_cast<std::size_t>(i)];
        }
        Eigen::Index pick;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                cum += weight[static_cast<std::size_t>(i)];
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
        }
        centroids.row(j) = vectors.row(pick);
    }

    SphericalKmeansResult result;
    result.assignment.assign(static_cast<std::size_t>(n), -1);
    std::vector<int> prev(static_cast<std::size_t>(n), -1);
    WordCodebook view;
    for (int iter = 0; iter < max_iter; ++iter) {
        view.centroids = centroids;
        double objective = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int a = nearest_centroid(view, vectors.row(i).transpose());
            result.assignment[static_cast<std::size_t>(i)] = a;
            objective += centroids.row(a).dot(vectors.row(i));
        }
        result.objective_trace.push_back(objective);
        if (result.assignment == prev) {
            break;
        }
        prev = result.assignment;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, vectors.cols());
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(result.assignment[static_cast<std::size_t>(i)]) += vectors.row(i);
            ++counts[static_cast<std::size_t>(result.assignment[static_cast<std::size_t>(i)])];
        }
        std::set<int> reseeded;
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] == 0) {
                int w = worst_assigned_point(vectors, centroids, result.assignment, reseeded);
                if (w >= 0) {
                    centroids.row(j) = vectors.row(w);
                    reseeded.insert(w);
                }
                continue;
            }
            double norm = sums.row(j).norm();
            if (norm > 0.0) {
                centroids.row(j) = sums.row(j) / norm;
            }
        }
    }
    result.codebook.centroids = std::move(centroids);
    return result;
}

}  // namespace

SphericalKmeansResult spherical_kmeans(const Eigen::MatrixXd& vectors, int k, std::uint64_t seed,
                                       int max_iter, int restarts) {
    const Eigen::Index n = vectors.rows();
    if (n == 0) {
        throw std::invalid_argument("spherical_kmeans: empty input");
    }
    if (k <= 0) {
        throw std::invalid_argument("spherical_kmeans: k must be positive");
    }
    if (restarts < 1) {
        throw std::invalid_argument("spherical_kmeans: restarts must be positive");
    }
    int distinct = count_distinct_rows(vectors);
    if (k > distinct) {
        throw std::invalid_argument("spherical_kmeans: k = " + std::to_string(k) + " exceeds " +
                                    std::to_string(distinct) + " distinct vectors");
    }

    // Best of several seeded inits; a single k-means++ draw can plant two
    // centroids in one tight cluster and leave another cluster merged.
    SphericalKmeansResult best;
    double best_objective = 0.0;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(splitmix64(seed + static_cast<std::uint64_t>(r)));
        SphericalKmeansResult run = spherical_kmeans_once(vectors, k, rng, max_iter);
        double objective = run.objective_trace.empty() ? 0.0 : run.objective_trace.back();
        if (r == 0 || objective > best_objective) {
            best = std::move(run);
            best_objective = objective;
        }
    }
    return best;
}

TimeInterval context_window(const Shot& shot, const ShotTimeline& timeline, double w_min) {
    if (!(w_min > 0.0)) {
        throw std::invalid_argument("context_window: w_min must be positive");
    }
    double fps = timeline.fps();
    double shot_duration = static_cast<double>(shot.frame_count()) / fps;
    double duration = std::max(shot_duration, w_min);
    double center = static_cast<double>(shot.center_frame()) / fps;
    double video_start = static_cast<double>(timeline.shots().front().frame_start) / fps;
    double video_end = static_cast<double>(timeline.end_frame()) / fps;
    TimeInterval window{center - duration / 2.0, center + duration / 2.0};
    window.lo = std::max(window.lo, video_start);
    window.hi = std::min(window.hi, video_end);
    return window;
}

Eigen::VectorXd bow_vector(const TimeInterval& window, const std::vector<TranscriptWord>& transcript,
                           const EmbeddingTable& table, const WordCodebook& codebook, BowStats* stats) {
    if (codebook.dim() != table.dim()) {
        throw std::invalid_argument("bow_vector: codebook/table dimension mismatch");
    }
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(codebook.k());
    double total = 0.0;
    for (const TranscriptWord& word : transcript) {
        if (!window.contains(word.time)) {
            continue;
        }
        auto row = table.row_of(word.token);
        if (!row) {
            if (stats) {
                ++stats->out_of_vocab;
            }
            continue;
        }
        if (stats) {
            ++stats->in_vocab;
        }
        counts[nearest_centroid(codebook, table.vectors().row(*row).transpose())] += 1.0;
        total += 1.0;
    }
    if (total > 0.0) {
        counts /= total;
    }
    return counts;
}

namespace {

Eigen::MatrixXd load_descriptors_csv(const std::filesystem::path& file) {
    auto lines = read_lines(file);
    if (lines.empty()) {
        throw ParseError(file, 1, "empty descriptor file");
    }
    std::vector<std::vector<double>> rows;
    std::size_t dim = 0;
    for (const TextLine& line : lines) {
        auto fields = split_fields(line.text);
        if (dim == 0) {
            dim = fields.size();
        } else if (fields.size() != dim) {
            throw ParseError(file, line.number,
                             "expected " + std::to_string(dim) + " fields, got " +
                                 std::to_string(fields.size()));
        }
        std::vector<double> row(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            row[d] = parse_double_field(fields[d], file, line.number);
            if (!std::isfinite(row[d])) {
                throw ParseError(file, line.number, "non-finite descriptor value");
            }
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
        }
    }
    return m;
}

constexpr char kDescriptorMagic[8] = {'S', 'S', 'E', 'G', 'V', 'D', '0', '1'};

static_assert(std::endian::native == std::endian::little,
              "binary descriptor IO assumes a little-endian host");

Eigen::MatrixXd load_descriptors_binary(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open file: " + file.string());
    }
    char magic[8];
    std::uint32_t dim = 0;
    std::uint32_t count = 0;
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in || std::memcmp(magic, kDescriptorMagic, sizeof(magic)) != 0) {
        throw ParseError(file.string() + ": not a descriptor file (bad magic)");
    }
    if (dim == 0 || count == 0) {
        throw ParseError(file.string() + ": empty descriptor file");
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    std::vector<double> row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(double)));
        if (!in) {
            throw ParseError(file.string() + ": truncated at row " + std::to_string(i));
        }
        for (std::uint32_t d = 0; d < dim; ++d) {
            if (!std::isfinite(row[d])) {
                throw ParseError(file.string() + ": non-finite descriptor value at row " +
                                 std::to_string(i));
            }
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = row[d];
        }
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw ParseError(file.string() + ": trailing bytes after " + std::to_string(count) + " rows");
    }
    return m;
}

}  // namespace

Eigen::MatrixXd load_visual_descriptors(const std::filesystem::path& file, const ShotTimeline& timeline,
                                        DescriptorFormat format) {
    Eigen::MatrixXd m =
        format == DescriptorFormat::Csv ? load_descriptors_csv(file) : load_descriptors_binary(file);
    if (m.rows() != timeline.shot_count()) {
        throw ParseError(file.string() + ": " + std::to_string(m.rows()) + " rows for " +
                         std::to_string(timeline.shot_count()) + " shots");
    }
    return m;
}

void write_visual_descriptors(const std::filesystem::path& file, const Eigen::MatrixXd& descriptors,
                              DescriptorFormat format) {
    if (descriptors.rows() == 0 || descriptors.cols() == 0) {
        throw std::invalid_argument("write_visual_descriptors: empty matrix");
    }
    if (format == DescriptorFormat::Csv) {
        std::ostringstream out;
        for (Eigen::Index i = 0; i < descriptors.rows(); ++i) {
            for (Eigen::Index d = 0; d < descriptors.cols(); ++d) {
                if (d > 0) {
                    out << ",";
                }
                out << format_double(descriptors(i, d));
            }
            out << "\n";
        }
        atomic_write(file, out.str());
        return;
    }
    std::string payload;
    payload.reserve(16 + static_cast<std::size_t>(descriptors.size()) * sizeof(double));
    payload.append(kDescriptorMagic, sizeof(kDescriptorMagic));
    std::uint32_t dim = static_cast<std::uint32_t>(descriptors.cols());
    std::uint32_t count = static_cast<std::uint32_t>(descriptors.rows());
    payload.append(reinterpret_cast<const char*>(&dim), sizeof(dim));
    payload.append(reinterpret_cast<const char*>(&count), sizeof(count));
    for (Eigen::Index i = 0; i < descriptors.rows(); ++i) {
        for (Eigen::Index d = 0; d < descriptors.cols(); ++d) {
            double value = descriptors(i, d);
            payload.append(reinterpret_cast<const char*>(&value), sizeof(value));
        }
    }
    atomic_write(file, payload);
}

std::vector<ShotFeatures> build_shot_features(const ShotTimeline& timeline,
                                              const Eigen::MatrixXd& visual,
                                              const std::vector<TranscriptWord>& transcript,
                                              const EmbeddingTable& table, const WordCodebook& codebook,
                                              double w_min, BowStats* stats) {
    if (visual.rows() != timeline.shot_count()) {
        throw std::invalid_argument("build_shot_features: descriptor rows do not match shot count");
    }
    long span_start = timeline.shots().front().frame_start;
    long span = timeline.end_frame() - span_start;
    std::vector<ShotFeatures> features;
    features.reserve(static_cast<std::size_t>(timeline.shot_count()));
    for (const Shot& shot : timeline.shots()) {
        ShotFeatures f;
        f.visual = visual.row(shot.index).transpose();
        TimeInterval window = context_window(shot, timeline, w_min);
        f.words = bow_vector(window, transcript, table, codebook, stats);
        f.center_index = shot.center_frame();
        f.center_time = static_cast<double>(f.center_index) / timeline.fps();
        f.temporal_pos = static_cast<double>(f.center_index - span_start) / static_cast<double>(span);
        features.push_back(std::move(f));
    }
    return features;
}

}  // namespace sceneseg
