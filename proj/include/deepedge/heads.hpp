#pragma once

// Bifurcated head: a classification branch and a regression branch over the
// same descriptor, trained independently with a hard-positive mining step and
// averaged at inference.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <bit>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deepedge/backbone.hpp"
#include "deepedge/canny.hpp"
#include "deepedge/descriptor.hpp"
#include "deepedge/error.hpp"
#include "deepedge/image.hpp"
#include "deepedge/rng.hpp"
#include "deepedge/tensor.hpp"
#include "deepedge/tensor_file.hpp"

namespace deepedge {

// D -> hidden1 -> hidden2 -> 1 with rectifiers after both hidden layers.
struct BranchParams {
    DenseLayer hidden1;
    DenseLayer hidden2;
    DenseLayer output;

    int input_dim() const { return hidden1.in_dim; }
    friend bool operator==(const BranchParams&, const BranchParams&) = default;
};

inline BranchParams init_branch(int input_dim, int hidden1, int hidden2, std::uint64_t seed) {
    Rng rng(seed);
    auto layer = [&rng](int in, int out) {
        DenseLayer l(in, out);
        const float bound = 1.0f / std::sqrt(static_cast<float>(in));
        for (float& w : l.weights) w = rng.uniform(-bound, bound);
        return l;
    };
    BranchParams b;
    b.hidden1 = layer(input_dim, hidden1);
    b.hidden2 = layer(hidden1, hidden2);
    b.output = layer(hidden2, 1);
    return b;
}

/// Inference (training == false): deterministic, clamped to [0, 1].
/// Training: dropout after each hidden layer, raw linear output.
inline float branch_forward(const BranchParams& branch, std::span<const float> d, bool training, Rng& rng,
                            float dropout = 0.5f) {
    if (d.size() != static_cast<std::size_t>(branch.input_dim()))
        throw DimensionError("branch expects a descriptor of length " + std::to_string(branch.input_dim()) + ", got " +
                             std::to_string(d.size()));
    auto h1 = dense_forward(branch.hidden1, d);
    relu_inplace(h1);
    if (training) {
        const auto m = dropout_mask(h1.size(), dropout, rng);
        for (std::size_t i = 0; i < h1.size(); ++i) h1[i] *= m[i];
    }
    auto h2 = dense_forward(branch.hidden2, h1);
    relu_inplace(h2);
    if (training) {
        const auto m = dropout_mask(h2.size(), dropout, rng);
        for (std::size_t i = 0; i < h2.size(); ++i) h2[i] *= m[i];
    }
    const float y = dense_forward(branch.output, h2)[0];
    return training ? y : std::clamp(y, 0.0f, 1.0f);
}

/// Final contour score: mean of the two branch scores.
inline float fuse(float class_score, float reg_score) {
    if (!(class_score >= 0.0f && class_score <= 1.0f && reg_score >= 0.0f && reg_score <= 1.0f))
        throw DomainError("fuse: branch scores must lie in [0, 1]");
    return 0.5f * (class_score + reg_score);
}

// Labeled descriptors, row-major n x dim.
struct DescriptorSet {
    std::size_t dim = 0;
    std::vector<float> features;
    std::vector<float> binary;     // classification target
    std::vector<float> consensus;  // regression target

    std::size_t size() const { return binary.size(); }
    std::span<const float> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

    void push(std::span<const float> d, float bin, float cons) {
        if (dim == 0 && features.empty()) dim = d.size();
        if (d.size() != dim) throw DimensionError("descriptor length " + std::to_string(d.size()) + " differs from set dim " +
                                                  std::to_string(dim));
        features.insert(features.end(), d.begin(), d.end());
        binary.push_back(bin);
        consensus.push_back(cons);
    }
};

// Per-feature standardization applied before both branches.
struct FeatureNorm {
    std::vector<float> mean;
    std::vector<float> scale;

    std::vector<float> apply(std::span<const float> d) const {
        std::vector<float> out(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) out[i] = (d[i] - mean[i]) * scale[i];
        return out;
    }
    friend bool operator==(const FeatureNorm&, const FeatureNorm&) = default;
};

inline FeatureNorm fit_feature_norm(const DescriptorSet& set) {
    FeatureNorm n;
    n.mean.assign(set.dim, 0.0f);
    n.scale.assign(set.dim, 1.0f);
    if (set.size() == 0) return n;
    for (std::size_t j = 0; j < set.dim; ++j) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < set.size(); ++i) {
            const double v = set.features[i * set.dim + j];
            s += v;
            s2 += v * v;
        }
        const double m = s / static_cast<double>(set.size());
        const double var = std::max(0.0, s2 / static_cast<double>(set.size()) - m * m);
        n.mean[j] = static_cast<float>(m);
        n.scale[j] = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.0f;
    }
    return n;
}

enum class Branch { classification = 0, regression = 1 };

struct HeadScores {
    float classification = 0.0f;
    float regression = 0.0f;
    float fused = 0.0f;
};

struct HeadModel {
    BranchParams classification;
    BranchParams regression;
    FeatureNorm norm;
    std::string fingerprint;

    const BranchParams& branch(Branch b) const { return b == Branch::classification ? classification : regression; }
    BranchParams& branch(Branch b) { return b == Branch::classification ? classification : regression; }
    int input_dim() const { return classification.input_dim(); }

    HeadScores score(std::span<const float> descriptor) const {
        const auto x = norm.apply(descriptor);
        Rng unused(0);
        HeadScores s;
        s.classification = branch_forward(classification, x, false, unused);
        s.regression = branch_forward(regression, x, false, unused);
        s.fused = fuse(s.classification, s.regression);
        return s;
    }

    friend bool operator==(const HeadModel&, const HeadModel&) = default;
};

struct TrainConfig {
    float lr = 0.1f;
    float dropout = 0.5f;
    int epochs = 50;
    int batch = 100;
    int mining_epoch = 25;
    float fn_threshold = 0.5f;
    int hidden1 = 1024;
    int hidden2 = 512;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(lr > 0.0f)) throw ConfigError("learning rate must be positive");
        if (!(dropout >= 0.0f && dropout < 1.0f)) throw ConfigError("dropout must lie in [0, 1)");
        if (epochs < 0 || batch <= 0) throw ConfigError("epochs must be nonnegative and batch positive");
        if (epochs > 0 && (mining_epoch < 0 || mining_epoch >= epochs))
            throw ConfigError("mining epoch must lie in [0, epochs)");
        if (hidden1 <= 0 || hidden2 <= 0) throw ConfigError("hidden layer sizes must be positive");
    }
};

struct BranchMining {
    std::vector<std::size_t> false_negatives;  // holdout indices
    std::vector<std::size_t> true_negatives;   // holdout indices, sampled, |TN| == |FN|
};

struct MiningReport {
    BranchMining classification;
    BranchMining regression;
    std::vector<HeadScores> holdout_scores;  // scores the mining decisions were based on
};

namespace detail {

inline bool is_positive(const DescriptorSet& set, std::size_t i, Branch b) {
    return b == Branch::classification ? set.binary[i] > 0.5f : set.consensus[i] > 0.0f;
}

// Among holdout samples, positives scored below the threshold are false
// negatives; an equal number of correctly rejected negatives is drawn
// uniformly (with replacement only when too few exist).
inline BranchMining mine_branch(const std::vector<float>& scores, const DescriptorSet& holdout, Branch b, float threshold,
                                Rng& rng) {
    BranchMining m;
    std::vector<std::size_t> rejected;
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        const bool pos = is_positive(holdout, i, b);
        if (pos && scores[i] < threshold) m.false_negatives.push_back(i);
        if (!pos && scores[i] < threshold) rejected.push_back(i);
    }
    const std::size_t need = m.false_negatives.size();
    if (need == 0 || rejected.empty()) return m;
    if (rejected.size() >= need) {
        for (std::size_t k = 0; k < need; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(rejected.size() - k));
            std::swap(rejected[k], rejected[j]);
        }
        m.true_negatives.assign(rejected.begin(), rejected.begin() + static_cast<std::ptrdiff_t>(need));
    } else {
        for (std::size_t k = 0; k < need; ++k) m.true_negatives.push_back(rejected[rng.below(rejected.size())]);
    }
    return m;
}

}  // namespace detail

/// Scores the holdout with both branches and collects each branch's false
/// negatives plus as many randomly drawn true negatives.
inline MiningReport mine_hard_positives(const HeadModel& model, const DescriptorSet& holdout, float fn_threshold,
                                        std::uint64_t seed) {
    if (holdout.size() == 0) throw DataError("hard-positive mining needs a nonempty holdout set");
    MiningReport r;
    std::vector<float> cls(holdout.size()), reg(holdout.size());
    for (std::size_t i = 0; i < holdout.size(); ++i) {
        r.holdout_scores.push_back(model.score(holdout.row(i)));
        cls[i] = r.holdout_scores.back().classification;
        reg[i] = r.holdout_scores.back().regression;
    }
    Rng rc(sub_seed(seed, "mining-classification")), rr(sub_seed(seed, "mining-regression"));
    r.classification = detail::mine_branch(cls, holdout, Branch::classification, fn_threshold, rc);
    r.regression = detail::mine_branch(reg, holdout, Branch::regression, fn_threshold, rr);
    return r;
}

struct TrainReport {
    std::vector<double> classification_loss;  // mean per-sample loss per epoch
    std::vector<double> regression_loss;
    MiningReport mining;
    bool mined = false;
    std::size_t classification_set_size = 0;  // after augmentation
    std::size_t regression_set_size = 0;
};

struct TrainResult {
    HeadModel model;
    TrainReport report;
};

namespace detail {

// One epoch of minibatch SGD on squared loss; returns mean per-sample loss.
inline double train_epoch(BranchParams& p, const DescriptorSet& data, const std::vector<std::size_t>& rows,
                          const std::vector<float>& targets, const TrainConfig& cfg, Rng& order_rng, Rng& drop_rng) {
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    order_rng.shuffle(order);
    const std::size_t D = data.dim;
    double total = 0.0;
    std::vector<float> X;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
        const std::size_t B = std::min<std::size_t>(cfg.batch, order.size() - b0);
        X.resize(B * D);
        for (std::size_t k = 0; k < B; ++k) {
            const auto r = data.row(rows[order[b0 + k]]);
            std::copy(r.begin(), r.end(), X.begin() + static_cast<std::ptrdiff_t>(k * D));
        }
        auto A1 = dense_forward_batch(p.hidden1, X, B);
        relu_inplace(A1);
        const auto M1 = dropout_mask(A1.size(), cfg.dropout, drop_rng);
        for (std::size_t i = 0; i < A1.size(); ++i) A1[i] *= M1[i];
        auto A2 = dense_forward_batch(p.hidden2, A1, B);
        relu_inplace(A2);
        const auto M2 = dropout_mask(A2.size(), cfg.dropout, drop_rng);
        for (std::size_t i = 0; i < A2.size(); ++i) A2[i] *= M2[i];
        const auto Y = dense_forward_batch(p.output, A2, B);

        std::vector<float> tgt(B);
        for (std::size_t k = 0; k < B; ++k) tgt[k] = targets[order[b0 + k]];
        auto loss = mse_loss(Y, tgt);
        total += loss.loss;
        const float inv_b = 1.0f / static_cast<float>(B);
        for (float& g : loss.grad) g *= inv_b;

        auto g3 = dense_backward_batch(p.output, A2, loss.grad, B, true);
        for (std::size_t i = 0; i < g3.input.size(); ++i) g3.input[i] *= (A2[i] > 0.0f ? M2[i] : 0.0f);
        auto g2 = dense_backward_batch(p.hidden2, A1, g3.input, B, true);
        for (std::size_t i = 0; i < g2.input.size(); ++i) g2.input[i] *= (A1[i] > 0.0f ? M1[i] : 0.0f);
        auto g1 = dense_backward_batch(p.hidden1, X, g2.input, B, false);

        sgd_step(p.output.weights, g3.weights, cfg.lr);
        sgd_step(p.output.bias, g3.bias, cfg.lr);
        sgd_step(p.hidden2.weights, g2.weights, cfg.lr);
        sgd_step(p.hidden2.bias, g2.bias, cfg.lr);
        sgd_step(p.hidden1.weights, g1.weights, cfg.lr);
        sgd_step(p.hidden1.bias, g1.bias, cfg.lr);
    }
    return rows.empty() ? 0.0 : total / static_cast<double>(rows.size());
}

inline DescriptorSet normalized(const DescriptorSet& s, const FeatureNorm& n) {
    DescriptorSet out = s;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.dim; ++j)
            out.features[i * s.dim + j] = (s.features[i * s.dim + j] - n.mean[j]) * n.scale[j];
    return out;
}

}  // namespace detail

using TrainLogger = std::function<void(const std::string&)>;

/// Trains both branches by minibatch SGD on squared loss. After
/// `mining_epoch` epochs each branch is scored on the holdout; its false
/// negatives plus an equal number of true negatives are appended to that
/// branch's training set for the remaining epochs.
inline TrainResult train_branches(const DescriptorSet& train, const DescriptorSet& holdout, const TrainConfig& cfg,
                                  const TrainLogger& log = {}) {
    cfg.validate();
    if (train.size() == 0) throw DataError("training set is empty");
    if (holdout.size() > 0 && holdout.dim != train.dim)
        throw DimensionError("holdout descriptor length differs from the training set");
    const int D = static_cast<int>(train.dim);

    TrainResult res;
    res.model.norm = fit_feature_norm(train);
    res.model.classification = init_branch(D, cfg.hidden1, cfg.hidden2, sub_seed(cfg.seed, "init-classification"));
    res.model.regression = init_branch(D, cfg.hidden1, cfg.hidden2, sub_seed(cfg.seed, "init-regression"));
    if (cfg.epochs == 0) return res;

    const DescriptorSet x_train = detail::normalized(train, res.model.norm);
    DescriptorSet x_all = x_train;  // train rows followed by holdout rows
    if (holdout.size() > 0) {
        const DescriptorSet x_hold = detail::normalized(holdout, res.model.norm);
        x_all.features.insert(x_all.features.end(), x_hold.features.begin(), x_hold.features.end());
        x_all.binary.insert(x_all.binary.end(), x_hold.binary.begin(), x_hold.binary.end());
        x_all.consensus.insert(x_all.consensus.end(), x_hold.consensus.begin(), x_hold.consensus.end());
    }

    struct BranchState {
        Branch which;
        std::vector<std::size_t> rows;
        std::vector<float> targets;
        Rng order_rng;
        Rng drop_rng;
    };
    auto make_state = [&](Branch b, const char* tag) {
        BranchState s{b, {}, {}, Rng(sub_seed(cfg.seed, std::string("order-") + tag)),
                      Rng(sub_seed(cfg.seed, std::string("dropout-") + tag))};
        for (std::size_t i = 0; i < train.size(); ++i) {
            s.rows.push_back(i);
            s.targets.push_back(b == Branch::classification ? train.binary[i] : train.consensus[i]);
        }
        return s;
    };
    BranchState states[2] = {make_state(Branch::classification, "classification"),
                             make_state(Branch::regression, "regression")};

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch == cfg.mining_epoch && holdout.size() > 0) {
            res.report.mining = mine_hard_positives(res.model, holdout, cfg.fn_threshold, sub_seed(cfg.seed, "mining"));
            res.report.mined = true;
            for (auto& s : states) {
                const BranchMining& m =
                    s.which == Branch::classification ? res.report.mining.classification : res.report.mining.regression;
                for (std::size_t i : m.false_negatives) {
                    s.rows.push_back(train.size() + i);
                    s.targets.push_back(s.which == Branch::classification ? holdout.binary[i] : holdout.consensus[i]);
                }
                for (std::size_t i : m.true_negatives) {
                    s.rows.push_back(train.size() + i);
                    s.targets.push_back(0.0f);
                }
            }
            if (log)
                log("mining: classification_fn=" + std::to_string(res.report.mining.classification.false_negatives.size()) +
                    " regression_fn=" + std::to_string(res.report.mining.regression.false_negatives.size()) +
                    " classification_set=" + std::to_string(states[0].rows.size()) +
                    " regression_set=" + std::to_string(states[1].rows.size()));
        }
        for (auto& s : states) {
            const double loss =
                detail::train_epoch(res.model.branch(s.which), x_all, s.rows, s.targets, cfg, s.order_rng, s.drop_rng);
            (s.which == Branch::classification ? res.report.classification_loss : res.report.regression_loss).push_back(loss);
        }
        if (log) {
            std::ostringstream os;
            os << "epoch " << (epoch + 1) << " classification_loss=" << res.report.classification_loss.back()
               << " regression_loss=" << res.report.regression_loss.back();
            log(os.str());
        }
    }
    res.report.classification_set_size = states[0].rows.size();
    res.report.regression_set_size = states[1].rows.size();
    return res;
}

// ---- fingerprint and serialization ---------------------------------------

inline std::uint64_t weights_checksum(const BackboneWeights& w) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::vector<float>& v) {
        for (float f : v) {
            const auto bits = std::bit_cast<std::uint32_t>(f);
            for (int i = 0; i < 4; ++i) {
                h ^= (bits >> (8 * i)) & 0xffu;
                h *= 0x100000001b3ULL;
            }
        }
    };
    for (const auto& k : w.kernels) mix(k.data);
    for (const auto& b : w.biases) mix(b);
    return h;
}

/// Identifies everything a trained head depends on: descriptor layout and the
/// exact backbone weights.
inline std::string descriptor_fingerprint(const BackboneModel& backbone, const ScaleConfig& scales,
                                          const PoolingConfig& pooling) {
    std::ostringstream os;
    os << "target=" << scales.target << ";scales=";
    for (std::size_t i = 0; i < scales.size(); ++i) os << (i ? "," : "") << scale_name(scales.scales[i]);
    os << ";sides=";
    for (std::size_t i = 0; i < pooling.sides.size(); ++i) os << (i ? "," : "") << pooling.sides[i];
    os << ";poolings=";
    for (std::size_t i = 0; i < pooling.poolings.size(); ++i) os << (i ? "," : "") << pooling_name(pooling.poolings[i]);
    os << ";layers=";
    for (std::size_t i = 0; i < pooling.layers.size(); ++i) os << (i ? "," : "") << pooling.layers[i] + 1;
    os << ";channels=";
    const auto ch = backbone.spec.channels();
    for (std::size_t i = 0; i < ch.size(); ++i) os << (i ? "," : "") << ch[i];
    os << ";dim=" << descriptor_length(pooling, scales.size(), ch);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(weights_checksum(backbone.weights)));
    os << ";backbone=" << hex;
    return os.str();
}

inline TensorFile head_to_tensor_file(const HeadModel& m) {
    TensorFile f;
    f.header = "kind=heads\nfingerprint=" + m.fingerprint + "\n";
    auto add_layer = [&f](const std::string& name, const DenseLayer& l) {
        f.tensors.push_back({name + ".weight", {static_cast<std::uint32_t>(l.out_dim), static_cast<std::uint32_t>(l.in_dim)}, l.weights});
        f.tensors.push_back({name + ".bias", {static_cast<std::uint32_t>(l.out_dim)}, l.bias});
    };
    for (Branch b : {Branch::classification, Branch::regression}) {
        const std::string tag = b == Branch::classification ? "classification" : "regression";
        add_layer(tag + ".hidden1", m.branch(b).hidden1);
        add_layer(tag + ".hidden2", m.branch(b).hidden2);
        add_layer(tag + ".output", m.branch(b).output);
    }
    f.tensors.push_back({"norm.mean", {static_cast<std::uint32_t>(m.norm.mean.size())}, m.norm.mean});
    f.tensors.push_back({"norm.scale", {static_cast<std::uint32_t>(m.norm.scale.size())}, m.norm.scale});
    return f;
}

inline HeadModel head_from_tensor_file(const TensorFile& f) {
    using K = FormatError::Kind;
    const auto kv = detail::parse_header_lines(f.header);
    if (detail::header_value(kv, "kind") != "heads") throw FormatError(K::shape_mismatch, "tensor file does not hold a head model");
    HeadModel m;
    m.fingerprint = detail::header_value(kv, "fingerprint");
    auto get = [&f](const std::string& name) -> const NamedTensor& {
        const NamedTensor* t = f.find(name);
        if (!t) throw FormatError(K::shape_mismatch, "head model is missing tensor '" + name + "'");
        return *t;
    };
    auto layer = [&](const std::string& name) {
        const auto& w = get(name + ".weight");
        const auto& b = get(name + ".bias");
        if (w.dims.size() != 2 || b.dims.size() != 1 || b.dims[0] != w.dims[0])
            throw FormatError(K::shape_mismatch, "layer '" + name + "' has inconsistent shapes");
        DenseLayer l(static_cast<int>(w.dims[1]), static_cast<int>(w.dims[0]));
        l.weights = w.data;
        l.bias = b.data;
        return l;
    };
    for (Branch b : {Branch::classification, Branch::regression}) {
        const std::string tag = b == Branch::classification ? "classification" : "regression";
        auto& br = m.branch(b);
        br.hidden1 = layer(tag + ".hidden1");
        br.hidden2 = layer(tag + ".hidden2");
        br.output = layer(tag + ".output");
        if (br.hidden2.in_dim != br.hidden1.out_dim || br.output.in_dim != br.hidden2.out_dim || br.output.out_dim != 1)
            throw FormatError(K::shape_mismatch, "branch '" + tag + "' layers do not chain");
    }
    if (m.classification.input_dim() != m.regression.input_dim())
        throw FormatError(K::shape_mismatch, "branches disagree on descriptor length");
    m.norm.mean = get("norm.mean").data;
    m.norm.scale = get("norm.scale").data;
    if (m.norm.mean.size() != static_cast<std::size_t>(m.input_dim()) || m.norm.scale.size() != m.norm.mean.size())
        throw FormatError(K::shape_mismatch, "feature normalization does not match descriptor length");
    return m;
}

inline void save_head_model(const std::string& path, const HeadModel& m) { save_tensor_file(path, head_to_tensor_file(m)); }

/// Loads a head model and checks it against the expected fingerprint.
inline HeadModel load_head_model(const std::string& path, const std::string& expected_fingerprint) {
    HeadModel m = head_from_tensor_file(load_tensor_file(path));
    if (m.fingerprint != expected_fingerprint)
        throw DataError("model fingerprint mismatch:\n  model:  " + m.fingerprint + "\n  config: " + expected_fingerprint);
    return m;
}

// ---- prediction -----------------------------------------------------------

enum class PredictMode { exact, fast };

struct EdgePrediction {
    RealMap fused;
    RealMap classification;
    RealMap regression;
    CandidateSet candidates;
    std::size_t backbone_evaluations = 0;
};

/// Scores every Canny candidate of `image`; all other pixels stay 0.
inline EdgePrediction predict_edge_map(const Tensor3& image, DescriptorExtractor& extractor, const HeadModel& model,
                                       const std::string& expected_fingerprint, const CannyParams& canny, PredictMode mode,
                                       FastInterp interp = FastInterp::nearest) {
    if (model.fingerprint != expected_fingerprint) throw DataError("model fingerprint does not match the active configuration");
    if (static_cast<std::size_t>(model.input_dim()) != extractor.length())
        throw DataError("model descriptor length differs from the extractor's");
    EdgePrediction out{RealMap(image.height, image.width), RealMap(image.height, image.width),
                       RealMap(image.height, image.width), canny_detect(image, canny), 0};
    const std::size_t before = extractor.evaluations();
    std::optional<FullImageTaps> full;
    if (mode == PredictMode::fast && !out.candidates.empty()) full = extractor.precompute(image);
    for (const Pixel& p : out.candidates.points) {
        const auto d = mode == PredictMode::exact ? extractor.exact(image, p) : extractor.fast(*full, p, interp);
        const HeadScores s = model.score(d);
        out.fused.at(p.row, p.col) = s.fused;
        out.classification.at(p.row, p.col) = s.classification;
        out.regression.at(p.row, p.col) = s.regression;
    }
    out.backbone_evaluations = extractor.evaluations() - before;
    return out;
}

}  // namespace deepedge
