#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sceneseg/siamese.hpp"
#include "sceneseg/timeline.hpp"

namespace sceneseg {

// Symmetric shot-affinity matrix with entries in (0, 1] and unit diagonal.
class SimilarityMatrix {
public:
    explicit SimilarityMatrix(Eigen::MatrixXd values);

    int n() const { return static_cast<int>(values_.rows()); }
    const Eigen::MatrixXd& values() const { return values_; }

private:
    Eigen::MatrixXd values_;
};

struct SpectralConfig {
    int k = 0;                 // explicit cluster count; 0 = eigengap selection
    int k_max = 0;             // cap for selection; 0 = ceil(n / 5)
    int kmeans_restarts = 10;  // best WCSS wins, ties first-found
    std::uint64_t seed = 0;
    double eig_tol = 1e-12;
    double sigma = 0.0;  // kernel bandwidth override; 0 = KDE estimate
};

// Silverman's rule on a distance sample: 1.06 * min(std, IQR/1.34) * m^(-1/5).
// Falls back to std alone when IQR is zero, and to the 1e-6 floor when both
// vanish (floor_used reports that). Needs at least 2 values.
double kde_bandwidth(const std::vector<double>& sample, bool* floor_used = nullptr);

// W_ij = exp(-d_ij^2 / (2 sigma^2)), clamped away from 0 so underflow cannot
// leave the (0, 1] range. Input must be symmetric with a zero diagonal.
SimilarityMatrix gaussian_kernel(const Eigen::MatrixXd& distances, double sigma);

// L = I - D^(-1/2) W D^(-1/2), explicitly symmetrized.
Eigen::MatrixXd normalized_laplacian(const SimilarityMatrix& w);

struct EighResult {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // columns aligned with values
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius mass drops below
// tol * max(1, ||A||_F); at most 50 sweeps.
EighResult symmetric_eigh(const Eigen::MatrixXd& a, double tol = 1e-12);

// Eigengap heuristic over 1 <= k <= min(k_max, count - 1): the k before the
// largest gap, ties toward smaller k.
int choose_k(const Eigen::VectorXd& eigenvalues, int k_max);

// The cap eigengap selection runs under: k_max when given, else ceil(n/5),
// clamped to [1, n-1]. Needs n >= 2.
int effective_k_max(int n, int k_max);

struct KmeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    double wcss = 0.0;
};

// Euclidean k-means, k-means++ initialization, restarts with derived seeds;
// empty clusters are re-seeded with the currently worst-assigned point.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts, std::uint64_t seed,
                    int max_iter = 100);

struct SpectralResult {
    std::vector<int> labels;
    int k = 0;
    Eigen::VectorXd eigenvalues;
};

// Normalized spectral clustering: k smallest-eigenvalue eigenvectors of the
// normalized Laplacian as rows, each row l2-normalized, then seeded k-means.
SpectralResult spectral_cluster(const SimilarityMatrix& w, const SpectralConfig& cfg);

struct SegmentResult {
    SceneSegmentation segmentation;
    SimilarityMatrix similarity;
    double sigma = 0.0;
    bool sigma_from_kde = true;
    int k = 0;
    bool k_from_eigengap = true;
    int k_max = 0;  // the cap the selection actually used
    Eigen::VectorXd eigenvalues;
};

// Full pipeline: branch outputs per shot, pairwise distances, KDE bandwidth
// (unless overridden), Gaussian kernel, spectral clustering, boundaries
// wherever consecutive labels differ.
SegmentResult segment(const std::vector<ShotFeatures>& features, const SiameseModel& model,
                      const SpectralConfig& cfg);

// The same pipeline downstream of an externally supplied distance matrix
// (used by the histogram baseline).
SegmentResult segment_distances(const Eigen::MatrixXd& distances, const SpectralConfig& cfg);

}  // namespace sceneseg
