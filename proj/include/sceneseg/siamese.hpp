#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sceneseg/features.hpp"

namespace sceneseg {

struct SiameseHyper {
    int d_in = 0;      // visual descriptor length
    int d_vis = 1183;  // visual projection width
    int d_words = 200; // textual vector length
    int h = 200;       // merge layer width

    int merge_input() const { return d_vis + d_words + 1; }
};

// Shared-weight twin network. There is exactly one parameter set; both
// branch evaluations of a pair read it.
struct SiameseModel {
    SiameseHyper hyper;
    Eigen::MatrixXd w_vis;    // d_vis x d_in
    Eigen::VectorXd b_vis;    // d_vis
    Eigen::MatrixXd w_merge;  // h x (d_vis + d_words + 1)
    Eigen::VectorXd b_merge;  // h

    void validate() const;
    double squared_param_norm() const;
};

// Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); zero biases.
// Fill order (w_vis row-major, then w_merge row-major) is part of the
// deterministic contract.
SiameseModel init_model(const SiameseHyper& hyper, std::uint64_t seed);

// ReLU(w_vis*visual + b_vis), concatenated with the words vector and the
// normalized center index, through the merge layer and a final ReLU.
Eigen::VectorXd branch_forward(const SiameseModel& model, const ShotFeatures& feat);

// l2 distance between the two branch outputs; symmetric, zero for a == b.
double pair_distance(const SiameseModel& model, const ShotFeatures& a, const ShotFeatures& b);

// (lambda/2)*||w||^2 + (1/2N) * sum_i [ y_i*d_i^2 + (1-y_i)*max(1 - d_i^2, 0) ].
// The margin is fixed at 1.
double contrastive_loss(const std::vector<double>& distances, const std::vector<int>& labels,
                        const SiameseModel& model, double lambda);

struct FeaturePair {
    const ShotFeatures* a = nullptr;
    const ShotFeatures* b = nullptr;
    int label = 0;  // 1 = same scene
};

struct ModelGrads {
    Eigen::MatrixXd w_vis;
    Eigen::VectorXd b_vis;
    Eigen::MatrixXd w_merge;
    Eigen::VectorXd b_merge;

    static ModelGrads zero(const SiameseHyper& hyper);
};

// Analytic gradients of contrastive_loss over the batch. ReLU subgradient is
// 0 at pre-activation 0 and the hinge subgradient is 0 at d^2 = 1. Pairs in
// the flat region contribute nothing, so a fully inactive batch yields
// exactly lambda * parameters.
ModelGrads gradients(const SiameseModel& model, const std::vector<FeaturePair>& batch, double lambda,
                     double* loss_out = nullptr);

struct ShotPair {
    int video = 0;
    int i = 0;
    int j = 0;
    int label = 0;
};

struct TrainingVideo {
    std::string id;
    std::vector<ShotFeatures> features;
    std::vector<int> scene_labels;  // per shot
};

// All within-video shot pairs (i < j); label 1 iff same ground-truth scene.
std::vector<ShotPair> make_training_pairs(const std::vector<TrainingVideo>& corpus);

// One epoch of balanced batches: batch_size/2 positives + batch_size/2
// negatives each. The minority class is drawn without replacement (the
// shuffled remainder that cannot fill a batch is dropped); the majority is
// drawn from a reshuffled pool whenever exhausted.
std::vector<std::vector<ShotPair>> build_balanced_batches(const std::vector<ShotPair>& pairs,
                                                          int batch_size, std::uint64_t seed);

struct TrainConfig {
    double lr_vis = 0.001;
    double lr_rest = 0.004;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int batch_size = 128;
    int epochs = 20;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossTracePoint {
    int epoch = 0;
    int batch = 0;
    double loss = 0.0;  // at the parameters before the step
};

struct TrainResult {
    SiameseModel model;
    std::vector<LossTracePoint> trace;
};

// Minibatch SGD with momentum: v <- mu*v - lr*g; w <- w + v, with lr_vis for
// the visual layer and lr_rest for the merge layer. Weight decay enters
// through the lambda term inside the gradient. Aborts on non-finite loss.
TrainResult train(SiameseModel model, const std::vector<TrainingVideo>& corpus, const TrainConfig& cfg);

// Everything segment needs to rebuild features exactly as train saw them.
struct SiameseCheckpoint {
    SiameseModel model;
    WordCodebook codebook;
    double w_min = 20.0;
};

void save_checkpoint(const std::filesystem::path& file, const SiameseCheckpoint& checkpoint);
SiameseCheckpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace sceneseg
