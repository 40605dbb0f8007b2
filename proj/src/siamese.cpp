#include "sceneseg/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "sceneseg/io.hpp"
#include "sceneseg/rng.hpp"

namespace sceneseg {

void SiameseModel::validate() const {
    if (hyper.d_in <= 0 || hyper.d_vis <= 0 || hyper.d_words <= 0 || hyper.h <= 0) {
        throw std::invalid_argument("model: all dimensions must be positive");
    }
    if (w_vis.rows() != hyper.d_vis || w_vis.cols() != hyper.d_in || b_vis.size() != hyper.d_vis ||
        w_merge.rows() != hyper.h || w_merge.cols() != hyper.merge_input() ||
        b_merge.size() != hyper.h) {
        throw std::invalid_argument("model: parameter shapes do not match hyper");
    }
    if (!w_vis.allFinite() || !b_vis.allFinite() || !w_merge.allFinite() || !b_merge.allFinite()) {
        throw std::invalid_argument("model: non-finite parameters");
    }
}

double SiameseModel::squared_param_norm() const {
    return w_vis.squaredNorm() + b_vis.squaredNorm() + w_merge.squaredNorm() + b_merge.squaredNorm();
}

SiameseModel init_model(const SiameseHyper& hyper, std::uint64_t seed) {
    SiameseModel model;
    model.hyper = hyper;
    model.w_vis.resize(hyper.d_vis, hyper.d_in);
    model.b_vis = Eigen::VectorXd::Zero(hyper.d_vis);
    model.w_merge.resize(hyper.h, hyper.merge_input());
    model.b_merge = Eigen::VectorXd::Zero(hyper.h);
    Rng rng(seed);
    double a = std::sqrt(6.0 / static_cast<double>(hyper.d_in + hyper.d_vis));
    for (Eigen::Index r = 0; r < model.w_vis.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.w_vis.cols(); ++c) {
            model.w_vis(r, c) = rng.uniform(-a, a);
        }
    }
    a = std::sqrt(6.0 / static_cast<double>(hyper.merge_input() + hyper.h));
    for (Eigen::Index r = 0; r < model.w_merge.rows(); ++r) {
        for (Eigen::Index c = 0; c < model.w_merge.cols(); ++c) {
            model.w_merge(r, c) = rng.uniform(-a, a);
        }
    }
    model.validate();
    return model;
}

namespace {

void check_feature(const SiameseModel& model, const ShotFeatures& feat) {
    if (feat.visual.size() != model.hyper.d_in) {
        throw std::invalid_argument("feature visual length " + std::to_string(feat.visual.size()) +
                                    " does not match model d_in " + std::to_string(model.hyper.d_in));
    }
    if (feat.words.size() != model.hyper.d_words) {
        throw std::invalid_argument("feature words length " + std::to_string(feat.words.size()) +
                                    " does not match model d_words " +
                                    std::to_string(model.hyper.d_words));
    }
}

struct BranchCache {
    Eigen::VectorXd pre_vis;
    Eigen::VectorXd z;
    Eigen::VectorXd pre_merge;
    Eigen::VectorXd out;
};

BranchCache forward_cached(const SiameseModel& model, const ShotFeatures& feat) {
    check_feature(model, feat);
    BranchCache cache;
    cache.pre_vis = model.w_vis * feat.visual + model.b_vis;
    cache.z.resize(model.hyper.merge_input());
    for (Eigen::Index i = 0; i < cache.pre_vis.size(); ++i) {
        cache.z[i] = std::max(cache.pre_vis[i], 0.0);
    }
    cache.z.segment(model.hyper.d_vis, model.hyper.d_words) = feat.words;
    cache.z[model.hyper.merge_input() - 1] = feat.temporal_pos;
    cache.pre_merge = model.w_merge * cache.z + model.b_merge;
    cache.out = cache.pre_merge.cwiseMax(0.0);
    return cache;
}

// Adds this branch's share of the batch gradient, given the loss gradient at
// the branch output. Derivatives vanish where a pre-activation is <= 0.
void backward_into(const SiameseModel& model, const ShotFeatures& feat, const BranchCache& cache,
                   const Eigen::VectorXd& dout, ModelGrads& grads) {
    Eigen::VectorXd dpre_merge(dout.size());
    for (Eigen::Index i = 0; i < dout.size(); ++i) {
        dpre_merge[i] = cache.pre_merge[i] > 0.0 ? dout[i] : 0.0;
    }
    grads.w_merge.noalias() += dpre_merge * cache.z.transpose();
    grads.b_merge += dpre_merge;
    Eigen::VectorXd dz = model.w_merge.transpose() * dpre_merge;
    Eigen::VectorXd dpre_vis(model.hyper.d_vis);
    for (Eigen::Index i = 0; i < dpre_vis.size(); ++i) {
        dpre_vis[i] = cache.pre_vis[i] > 0.0 ? dz[i] : 0.0;
    }
    grads.w_vis.noalias() += dpre_vis * feat.visual.transpose();
    grads.b_vis += dpre_vis;
}

}  // namespace

Eigen::VectorXd branch_forward(const SiameseModel& model, const ShotFeatures& feat) {
    model.validate();
    return forward_cached(model, feat).out;
}

double pair_distance(const SiameseModel& model, const ShotFeatures& a, const ShotFeatures& b) {
    model.validate();
    return (forward_cached(model, a).out - forward_cached(model, b).out).norm();
}

double contrastive_loss(const std::vector<double>& distances, const std::vector<int>& labels,
                        const SiameseModel& model, double lambda) {
    if (distances.empty()) {
        throw std::invalid_argument("contrastive_loss: empty batch");
    }
    if (distances.size() != labels.size()) {
        throw std::invalid_argument("contrastive_loss: distance/label count mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < distances.size(); ++i) {
        double d2 = distances[i] * distances[i];
        sum += labels[i] == 1 ? d2 : std::max(1.0 - d2, 0.0);
    }
    return 0.5 * lambda * model.squared_param_norm() +
           sum / (2.0 * static_cast<double>(distances.size()));
}

ModelGrads ModelGrads::zero(const SiameseHyper& hyper) {
    ModelGrads g;
    g.w_vis = Eigen::MatrixXd::Zero(hyper.d_vis, hyper.d_in);
    g.b_vis = Eigen::VectorXd::Zero(hyper.d_vis);
    g.w_merge = Eigen::MatrixXd::Zero(hyper.h, hyper.merge_input());
    g.b_merge = Eigen::VectorXd::Zero(hyper.h);
    return g;
}

ModelGrads gradients(const SiameseModel& model, const std::vector<FeaturePair>& batch, double lambda,
                     double* loss_out) {
    model.validate();
    if (batch.empty()) {
        throw std::invalid_argument("gradients: empty batch");
    }
    ModelGrads grads = ModelGrads::zero(model.hyper);
    const double n = static_cast<double>(batch.size());
    double data_loss = 0.0;
    bool any_active = false;
    for (const FeaturePair& pair : batch) {
        BranchCache ca = forward_cached(model, *pair.a);
        BranchCache cb = forward_cached(model, *pair.b);
        Eigen::VectorXd diff = ca.out - cb.out;
        double d2 = diff.squaredNorm();
        double gd2;  // derivative of the pair term in d^2
        if (pair.label == 1) {
            data_loss += d2;
            gd2 = 1.0;
        } else {
            data_loss += std::max(1.0 - d2, 0.0);
            gd2 = d2 < 1.0 ? -1.0 : 0.0;
        }
        if (gd2 == 0.0) {
            continue;
        }
        any_active = true;
        // d(loss)/d(out_a) = (1/2N) * gd2 * 2 * (out_a - out_b)
        Eigen::VectorXd dout_a = (gd2 / n) * diff;
        backward_into(model, *pair.a, ca, dout_a, grads);
        Eigen::VectorXd dout_b = -dout_a;
        backward_into(model, *pair.b, cb, dout_b, grads);
    }
    if (lambda != 0.0) {
        if (any_active) {
            grads.w_vis += lambda * model.w_vis;
            grads.b_vis += lambda * model.b_vis;
            grads.w_merge += lambda * model.w_merge;
            grads.b_merge += lambda * model.b_merge;
        } else {
            grads.w_vis = lambda * model.w_vis;
            grads.b_vis = lambda * model.b_vis;
            grads.w_merge = lambda * model.w_merge;
            grads.b_merge = lambda * model.b_merge;
        }
    }
    if (loss_out) {
        *loss_out = 0.5 * lambda * model.squared_param_norm() + data_loss / (2.0 * n);
    }
    return grads;
}

std::vector<ShotPair> make_training_pairs(const std::vector<TrainingVideo>& corpus) {
    std::vector<ShotPair> pairs;
    for (std::size_t v = 0; v < corpus.size(); ++v) {
        const TrainingVideo& video = corpus[v];
        if (video.features.size() != video.scene_labels.size()) {
            throw std::invalid_argument("make_training_pairs: feature/label count mismatch in video '" +
                                        video.id + "'");
        }
        int n = static_cast<int>(video.features.size());
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                int label = video.scene_labels[static_cast<std::size_t>(i)] ==
                                    video.scene_labels[static_cast<std::size_t>(j)]
                                ? 1
                                : 0;
                pairs.push_back({static_cast<int>(v), i, j, label});
            }
        }
    }
    return pairs;
}

std::vector<std::vector<ShotPair>> build_balanced_batches(const std::vector<ShotPair>& pairs,
                                                          int batch_size, std::uint64_t seed) {
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw std::invalid_argument("build_balanced_batches: batch_size must be even and >= 2");
    }
    std::vector<ShotPair> pos;
    std::vector<ShotPair> neg;
    for (const ShotPair& p : pairs) {
        (p.label == 1 ? pos : neg).push_back(p);
    }
    if (pos.empty()) {
        throw std::invalid_argument("build_balanced_batches: training set has no positive pairs");
    }
    const std::size_t half = static_cast<std::size_t>(batch_size) / 2;
    if (pos.size() < half) {
        throw std::invalid_argument("build_balanced_batches: only " + std::to_string(pos.size()) +
                                    " positive pairs for batch halves of " + std::to_string(half));
    }
    if (neg.size() < half) {
        throw std::invalid_argument("build_balanced_batches: only " + std::to_string(neg.size()) +
                                    " negative pairs for batch halves of " + std::to_string(half));
    }
    const std::size_t minority = std::min(pos.size(), neg.size());
    const std::size_t n_batches = minority / half;
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::size_t pi = 0;
    std::size_t ni = 0;
    std::vector<std::vector<ShotPair>> batches(n_batches);
    for (std::size_t b = 0; b < n_batches; ++b) {
        batches[b].reserve(static_cast<std::size_t>(batch_size));
        for (std::size_t i = 0; i < half; ++i) {
            if (pi == pos.size()) {
                rng.shuffle(pos);
                pi = 0;
            }
            batches[b].push_back(pos[pi++]);
        }
        for (std::size_t i = 0; i < half; ++i) {
            if (ni == neg.size()) {
                rng.shuffle(neg);
                ni = 0;
            }
            batches[b].push_back(neg[ni++]);
        }
    }
    return batches;
}

void TrainConfig::validate() const {
    if (lr_vis < 0.0 || lr_rest < 0.0 || !std::isfinite(lr_vis) || !std::isfinite(lr_rest)) {
        throw std::invalid_argument("train config: learning rates must be finite and >= 0");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("train config: momentum must be in [0, 1)");
    }
    if (weight_decay < 0.0 || !std::isfinite(weight_decay)) {
        throw std::invalid_argument("train config: weight_decay must be finite and >= 0");
    }
    if (batch_size < 2 || batch_size % 2 != 0) {
        throw std::invalid_argument("train config: batch_size must be even and >= 2");
    }
    if (epochs < 0) {
        throw std::invalid_argument("train config: epochs must be >= 0");
    }
}

TrainResult train(SiameseModel model, const std::vector<TrainingVideo>& corpus, const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (corpus.empty()) {
        throw std::invalid_argument("train: empty corpus");
    }
    auto pairs = make_training_pairs(corpus);
    ModelGrads velocity = ModelGrads::zero(model.hyper);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = build_balanced_batches(
            pairs, cfg.batch_size, splitmix64(cfg.seed + static_cast<std::uint64_t>(epoch)));
        for (std::size_t b = 0; b < batches.size(); ++b) {
            std::vector<FeaturePair> batch;
            batch.reserve(batches[b].size());
            for (const ShotPair& p : batches[b]) {
                const TrainingVideo& video = corpus[static_cast<std::size_t>(p.video)];
                batch.push_back({&video.features[static_cast<std::size_t>(p.i)],
                                 &video.features[static_cast<std::size_t>(p.j)], p.label});
            }
            double loss = 0.0;
            ModelGrads grads = gradients(model, batch, cfg.weight_decay, &loss);
            if (!std::isfinite(loss)) {
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " + std::to_string(b));
            }
            result.trace.push_back({epoch, static_cast<int>(b), loss});
            velocity.w_vis = cfg.momentum * velocity.w_vis - cfg.lr_vis * grads.w_vis;
            velocity.b_vis = cfg.momentum * velocity.b_vis - cfg.lr_vis * grads.b_vis;
            velocity.w_merge = cfg.momentum * velocity.w_merge - cfg.lr_rest * grads.w_merge;
            velocity.b_merge = cfg.momentum * velocity.b_merge - cfg.lr_rest * grads.b_merge;
            model.w_vis += velocity.w_vis;
            model.b_vis += velocity.b_vis;
            model.w_merge += velocity.w_merge;
            model.b_merge += velocity.b_merge;
        }
    }
    result.model = std::move(model);
    return result;
}

namespace {

nlohmann::json flat(const Eigen::MatrixXd& m) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            a.push_back(m(r, c));
        }
    }
    return a;
}

nlohmann::json flat(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

Eigen::MatrixXd unflat(const nlohmann::json& a, Eigen::Index rows, Eigen::Index cols,
                       const std::string& name) {
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols) {
        throw std::runtime_error("checkpoint: field '" + name + "' has wrong length");
    }
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index i = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = a[static_cast<std::size_t>(i++)].get<double>();
        }
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const SiameseCheckpoint& checkpoint) {
    checkpoint.model.validate();
    nlohmann::json j;
    j["format"] = "sceneseg-model";
    j["version"] = 1;
    j["hyper"] = {{"d_in", checkpoint.model.hyper.d_in},
                  {"d_vis", checkpoint.model.hyper.d_vis},
                  {"d_words", checkpoint.model.hyper.d_words},
                  {"h", checkpoint.model.hyper.h}};
    j["w_vis"] = flat(checkpoint.model.w_vis);
    j["b_vis"] = flat(checkpoint.model.b_vis);
    j["w_merge"] = flat(checkpoint.model.w_merge);
    j["b_merge"] = flat(checkpoint.model.b_merge);
    j["codebook"] = {{"k", checkpoint.codebook.k()},
                     {"dim", checkpoint.codebook.dim()},
                     {"centroids", flat(checkpoint.codebook.centroids)}};
    j["w_min"] = checkpoint.w_min;
    atomic_write(file, j.dump(2) + "\n");
}

SiameseCheckpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open file: " + file.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(file.string() + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "sceneseg-model") {
        throw std::runtime_error(file.string() + ": not a model checkpoint");
    }
    if (j.value("version", 0) != 1) {
        throw std::runtime_error(file.string() + ": unsupported checkpoint version");
    }
    SiameseCheckpoint checkpoint;
    const auto& hyper = j.at("hyper");
    checkpoint.model.hyper.d_in = hyper.at("d_in").get<int>();
    checkpoint.model.hyper.d_vis = hyper.at("d_vis").get<int>();
    checkpoint.model.hyper.d_words = hyper.at("d_words").get<int>();
    checkpoint.model.hyper.h = hyper.at("h").get<int>();
    const SiameseHyper& hp = checkpoint.model.hyper;
    checkpoint.model.w_vis = unflat(j.at("w_vis"), hp.d_vis, hp.d_in, "w_vis");
    checkpoint.model.b_vis = unflat(j.at("b_vis"), hp.d_vis, 1, "b_vis");
    checkpoint.model.w_merge = unflat(j.at("w_merge"), hp.h, hp.merge_input(), "w_merge");
    checkpoint.model.b_merge = unflat(j.at("b_merge"), hp.h, 1, "b_merge");
    const auto& cb = j.at("codebook");
    int k = cb.at("k").get<int>();
    int dim = cb.at("dim").get<int>();
    if (k != hp.d_words) {
        throw std::runtime_error(file.string() + ": codebook size does not match d_words");
    }
    checkpoint.codebook.centroids = unflat(cb.at("centroids"), k, dim, "codebook.centroids");
    checkpoint.w_min = j.at("w_min").get<double>();
    if (!(checkpoint.w_min > 0.0)) {
        throw std::runtime_error(file.string() + ": w_min must be positive");
    }
    checkpoint.model.validate();
    return checkpoint;
}

}  // namespace sceneseg
