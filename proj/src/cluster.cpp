#include "sceneseg/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sceneseg/rng.hpp"

namespace sceneseg {

namespace {

// Keeps kernel entries inside (0, 1] even when exp underflows to 0.
constexpr double kKernelFloor = 1e-300;

// Rows with smaller norm than this are left unnormalized in the spectral
// embedding (they are numerically zero).
constexpr double kRowNormFloor = 1e-154;

constexpr double kBandwidthFloor = 1e-6;

}  // namespace

SimilarityMatrix::SimilarityMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    if (values_.rows() == 0 || values_.rows() != values_.cols()) {
        throw std::invalid_argument("similarity matrix: must be square and non-empty");
    }
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        if (values_(i, i) != 1.0) {
            throw std::invalid_argument("similarity matrix: diagonal must be exactly 1");
        }
        for (Eigen::Index j = 0; j < values_.cols(); ++j) {
            double v = values_(i, j);
            if (!(v > 0.0) || v > 1.0) {
                throw std::invalid_argument("similarity matrix: entries must lie in (0, 1]");
            }
            if (std::abs(v - values_(j, i)) > 1e-12) {
                throw std::invalid_argument("similarity matrix: not symmetric");
            }
        }
    }
}

namespace {

// Linearly interpolated quantile of a sorted sample.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    double h = p * static_cast<double>(sorted.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

double kde_bandwidth(const std::vector<double>& sample, bool* floor_used) {
    if (floor_used) {
        *floor_used = false;
    }
    if (sample.size() < 2) {
        throw std::invalid_argument("kde_bandwidth: need at least 2 values");
    }
    double mean = 0.0;
    for (double v : sample) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("kde_bandwidth: non-finite sample value");
        }
        mean += v;
    }
    const double m = static_cast<double>(sample.size());
    mean /= m;
    double ss = 0.0;
    for (double v : sample) {
        ss += (v - mean) * (v - mean);
    }
    double std_dev = std::sqrt(ss / (m - 1.0));

    std::vector<double> sorted = sample;
    std::sort(sorted.begin(), sorted.end());
    double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);

    double scale = iqr > 0.0 ? std::min(std_dev, iqr / 1.34) : std_dev;
    double bandwidth = 1.06 * scale * std::pow(m, -0.2);
    if (!(bandwidth > 0.0)) {
        if (floor_used) {
            *floor_used = true;
        }
        return kBandwidthFloor;
    }
    return bandwidth;
}

SimilarityMatrix gaussian_kernel(const Eigen::MatrixXd& distances, double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("gaussian_kernel: sigma must be positive and finite");
    }
    const Eigen::Index n = distances.rows();
    if (n == 0 || distances.cols() != n) {
        throw std::invalid_argument("gaussian_kernel: distance matrix must be square and non-empty");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (distances(i, i) != 0.0) {
            throw std::invalid_argument("gaussian_kernel: diagonal must be zero");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            double d = distances(i, j);
            if (!std::isfinite(d) || d < 0.0) {
                throw std::invalid_argument("gaussian_kernel: distances must be finite and >= 0");
            }
            if (std::abs(d - distances(j, i)) > 1e-12) {
                throw std::invalid_argument("gaussian_kernel: distance matrix not symmetric");
            }
        }
    }
    Eigen::MatrixXd w(n, n);
    const double denom = 2.0 * sigma * sigma;
    for (Eigen::Index i = 0; i < n; ++i) {
        w(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double d = distances(i, j);
            double v = std::max(std::exp(-(d * d) / denom), kKernelFloor);
            w(i, j) = v;
            w(j, i) = v;
        }
    }
    return SimilarityMatrix(std::move(w));
}

Eigen::MatrixXd normalized_laplacian(const SimilarityMatrix& w) {
    const Eigen::Index n = w.n();
    Eigen::VectorXd inv_sqrt_deg(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        inv_sqrt_deg[i] = 1.0 / std::sqrt(w.values().row(i).sum());
    }
    Eigen::MatrixXd l(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            double normalized = w.values()(i, j) * inv_sqrt_deg[i] * inv_sqrt_deg[j];
            l(i, j) = (i == j ? 1.0 : 0.0) - normalized;
        }
    }
    return 0.5 * (l + l.transpose().eval());
}

namespace {

double offdiag_norm(const Eigen::MatrixXd& a) {
    double sum = 0.0;
    for (Eigen::Index p = 0; p < a.rows(); ++p) {
        for (Eigen::Index q = p + 1; q < a.cols(); ++q) {
            sum += 2.0 * a(p, q) * a(p, q);
        }
    }
    return std::sqrt(sum);
}

}  // namespace

EighResult symmetric_eigh(const Eigen::MatrixXd& a, double tol) {
    const Eigen::Index n = a.rows();
    if (n == 0 || a.cols() != n) {
        throw std::invalid_argument("symmetric_eigh: matrix must be square and non-empty");
    }
    if (!(tol > 0.0)) {
        throw std::invalid_argument("symmetric_eigh: tol must be positive");
    }
    const double scale = std::max(1.0, a.norm());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            if (std::abs(a(i, j) - a(j, i)) > tol * scale) {
                throw std::invalid_argument("symmetric_eigh: input is not symmetric");
            }
        }
    }

    Eigen::MatrixXd work = 0.5 * (a + a.transpose().eval());
    Eigen::MatrixXd vectors = Eigen::MatrixXd::Identity(n, n);
    constexpr int kMaxSweeps = 50;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        if (offdiag_norm(work) < tol * scale) {
            converged = true;
            break;
        }
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = work(p, q);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (work(q, q) - work(p, p)) / (2.0 * apq);
                double t;
                if (std::abs(theta) > 1e154) {
                    t = 1.0 / (2.0 * theta);
                } else {
                    t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    if (theta < 0.0) {
                        t = -t;
                    }
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double app = work(p, p);
                const double aqq = work(q, q);
                work(p, p) = app - t * apq;
                work(q, q) = aqq + t * apq;
                work(p, q) = 0.0;
                work(q, p) = 0.0;
                for (Eigen::Index r = 0; r < n; ++r) {
                    if (r == p || r == q) {
                        continue;
                    }
                    const double arp = work(r, p);
                    const double arq = work(r, q);
                    work(r, p) = c * arp - s * arq;
                    work(p, r) = work(r, p);
                    work(r, q) = s * arp + c * arq;
                    work(q, r) = work(r, q);
                }
                for (Eigen::Index r = 0; r < n; ++r) {
                    const double vrp = vectors(r, p);
                    const double vrq = vectors(r, q);
                    vectors(r, p) = c * vrp - s * vrq;
                    vectors(r, q) = s * vrp + c * vrq;
                }
            }
        }
    }
    if (!converged && offdiag_norm(work) >= tol * scale) {
        throw std::runtime_error("symmetric_eigh: no convergence within 50 sweeps");
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index x, Eigen::Index y) { return work(x, x) < work(y, y); });
    EighResult result;
    result.values.resize(n);
    result.vectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        result.values[i] = work(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        result.vectors.col(i) = vectors.col(order[static_cast<std::size_t>(i)]);
    }
    return result;
}

int choose_k(const Eigen::VectorXd& eigenvalues, int k_max) {
    const int m = static_cast<int>(eigenvalues.size());
    if (m < 2) {
        throw std::invalid_argument("choose_k: need at least 2 eigenvalues");
    }
    if (k_max < 1) {
        throw std::invalid_argument("choose_k: k_max must be >= 1");
    }
    const int hi = std::min(k_max, m - 1);
    // The gap scan starts at k = 2: a single cluster has no gap to compare.
    // With hi < 2 there is no candidate range, so the bound itself is the
    // only answer left.
    if (hi < 2) {
        return hi;
    }
    int best_k = 2;
    double best_gap = eigenvalues[2] - eigenvalues[1];
    for (int k = 3; k <= hi; ++k) {
        double gap = eigenvalues[k] - eigenvalues[k - 1];
        if (gap > best_gap) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

namespace {

struct KmeansRun {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    double wcss = 0.0;
};

int nearest_point_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p,
                           double* dist2_out) {
    int best = 0;
    double best_d2 = (centroids.row(0) - p).squaredNorm();
    for (Eigen::Index j = 1; j < centroids.rows(); ++j) {
        double d2 = (centroids.row(j) - p).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(j);
        }
    }
    if (dist2_out) {
        *dist2_out = best_d2;
    }
    return best;
}

KmeansRun kmeans_once(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n))));
    std::vector<double> d2(static_cast<std::size_t>(n));
    for (int j = 1; j < k; ++j) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = (centroids.row(0) - points.row(i)).squaredNorm();
            for (int c = 1; c < j; ++c) {
                best = std::min(best, (centroids.row(c) - points.row(i)).squaredNorm());
            }
            d2[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        Eigen::Index pick;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                cum += d2[static_cast<std::size_t>(i)];
                if (r < cum) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(n)));
        }
        centroids.row(j) = points.row(pick);
    }

    KmeansRun run;
    run.labels.assign(static_cast<std::size_t>(n), -1);
    std::vector<int> prev(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            run.labels[static_cast<std::size_t>(i)] =
                nearest_point_centroid(centroids, points.row(i), nullptr);
        }
        if (run.labels == prev) {
            break;
        }
        prev = run.labels;

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(run.labels[static_cast<std::size_t>(i)]) += points.row(i);
            ++counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(i)])];
        }
        std::vector<bool> taken(static_cast<std::size_t>(n), false);
        for (int j = 0; j < k; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
                continue;
            }
            // Re-seed an empty cluster with the point farthest from its centroid.
            int worst = -1;
            double worst_d2 = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (taken[static_cast<std::size_t>(i)]) {
                    continue;
                }
                double d = (points.row(i) -
                            centroids.row(run.labels[static_cast<std::size_t>(i)]))
                               .squaredNorm();
                if (d > worst_d2) {
                    worst_d2 = d;
                    worst = static_cast<int>(i);
                }
            }
            if (worst >= 0) {
                centroids.row(j) = points.row(worst);
                taken[static_cast<std::size_t>(worst)] = true;
            }
        }
    }
    run.wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        run.wcss += (points.row(i) - centroids.row(run.labels[static_cast<std::size_t>(i)])).squaredNorm();
    }
    run.centroids = std::move(centroids);
    return run;
}

}  // namespace

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts, std::uint64_t seed,
                    int max_iter) {
    const Eigen::Index n = points.rows();
    if (n == 0) {
        throw std::invalid_argument("kmeans: empty input");
    }
    if (k < 1 || k > n) {
        throw std::invalid_argument("kmeans: k must be in [1, n]");
    }
    if (restarts < 1) {
        throw std::invalid_argument("kmeans: restarts must be >= 1");
    }
    KmeansRun best;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(splitmix64(seed + static_cast<std::uint64_t>(r)));
        KmeansRun run = kmeans_once(points, k, rng, max_iter);
        if (r == 0 || run.wcss < best.wcss) {
            best = std::move(run);
        }
    }
    return KmeansResult{std::move(best.labels), std::move(best.centroids), best.wcss};
}

int effective_k_max(int n, int k_max) {
    int base = k_max > 0 ? k_max : (n + 4) / 5;
    return std::clamp(base, 1, n - 1);
}

SpectralResult spectral_cluster(const SimilarityMatrix& w, const SpectralConfig& cfg) {
    const int n = w.n();
    Eigen::MatrixXd laplacian = normalized_laplacian(w);
    EighResult eig = symmetric_eigh(laplacian, cfg.eig_tol);
    if (n == 1) {
        return SpectralResult{{0}, 1, std::move(eig.values)};
    }
    int k;
    if (cfg.k > 0) {
        if (cfg.k > n) {
            throw std::invalid_argument("spectral_cluster: k exceeds the number of shots");
        }
        k = cfg.k;
    } else {
        k = choose_k(eig.values, effective_k_max(n, cfg.k_max));
    }
    Eigen::MatrixXd embedding = eig.vectors.leftCols(k);
    for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
        double norm = embedding.row(i).norm();
        if (norm > kRowNormFloor) {
            embedding.row(i) /= norm;
        }
    }
    KmeansResult km = kmeans(embedding, k, cfg.kmeans_restarts, cfg.seed);
    return SpectralResult{std::move(km.labels), k, std::move(eig.values)};
}

SegmentResult segment_distances(const Eigen::MatrixXd& distances, const SpectralConfig& cfg) {
    const Eigen::Index n = distances.rows();
    if (n < 2) {
        throw std::invalid_argument("segment: need at least 2 shots");
    }
    std::vector<double> sample;
    sample.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            sample.push_back(distances(i, j));
        }
    }
    double sigma;
    bool sigma_from_kde;
    if (cfg.sigma > 0.0) {
        sigma = cfg.sigma;
        sigma_from_kde = false;
    } else if (sample.size() < 2) {
        // two shots give a single distance; the only scale available is the
        // distance itself
        sigma = std::max(sample.front(), kBandwidthFloor);
        sigma_from_kde = true;
    } else {
        sigma = kde_bandwidth(sample);
        sigma_from_kde = true;
    }
    SimilarityMatrix w = gaussian_kernel(distances, sigma);
    SpectralResult sr = spectral_cluster(w, cfg);
    return SegmentResult{labels_to_segmentation(sr.labels),
                         std::move(w),
                         sigma,
                         sigma_from_kde,
                         sr.k,
                         cfg.k <= 0,
                         cfg.k > 0 ? 0 : effective_k_max(static_cast<int>(n), cfg.k_max),
                         std::move(sr.eigenvalues)};
}

SegmentResult segment(const std::vector<ShotFeatures>& features, const SiameseModel& model,
                      const SpectralConfig& cfg) {
    const int n = static_cast<int>(features.size());
    if (n < 2) {
        throw std::invalid_argument("segment: need at least 2 shots");
    }
    model.validate();
    std::vector<Eigen::VectorXd> outputs;
    outputs.reserve(features.size());
    for (const ShotFeatures& f : features) {
        outputs.push_back(branch_forward(model, f));
    }
    Eigen::MatrixXd distances = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d = (outputs[static_cast<std::size_t>(i)] - outputs[static_cast<std::size_t>(j)]).norm();
            distances(i, j) = d;
            distances(j, i) = d;
        }
    }
    return segment_distances(distances, cfg);
}

}  // namespace sceneseg
