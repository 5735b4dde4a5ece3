#pragma once

// Five-stage convolutional feature extractor with per-stage activation taps.

#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "deepedge/error.hpp"
#include "deepedge/rng.hpp"
#include "deepedge/synthetic.hpp"
#include "deepedge/tensor.hpp"
#include "deepedge/tensor_file.hpp"

namespace deepedge {

struct ConvLayerSpec {
    std::string name;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    bool relu = true;
    int pool_window = 0;  // 0 = no max-pool after this stage
    int pool_stride = 0;

    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

struct BackboneSpec {
    int input_channels = 3;
    int input_size = 227;
    std::vector<ConvLayerSpec> layers;

    std::vector<int> channels() const {
        std::vector<int> f;
        for (const auto& l : layers) f.push_back(l.out_channels);
        return f;
    }

    friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

// KNet stage geometry (11/4 conv + 3/2 pool, 5/1 conv + 3/2 pool, three 3/1
// convs) at configurable width. On a 227x227 input the taps are 55, 27, 13,
// 13 and 13 cells wide.
inline BackboneSpec default_backbone_spec(const std::vector<int>& channels = {16, 32, 48, 48, 32}) {
    if (channels.size() != 5) throw ConfigError("the default backbone needs exactly 5 channel counts");
    BackboneSpec s;
    s.layers = {
        {"conv1", channels[0], 11, 4, 0, true, 3, 2},
        {"conv2", channels[1], 5, 1, 2, true, 3, 2},
        {"conv3", channels[2], 3, 1, 1, true, 0, 0},
        {"conv4", channels[3], 3, 1, 1, true, 0, 0},
        {"conv5", channels[4], 3, 1, 1, true, 0, 0},
    };
    return s;
}

struct TapGeometry {
    int height = 0;
    int width = 0;
};

// Tap sizes for an input of the given size; throws if any stage collapses.
inline std::vector<TapGeometry> tap_geometry(const BackboneSpec& spec, int in_h, int in_w) {
    std::vector<TapGeometry> g;
    int h = in_h, w = in_w;
    for (const auto& l : spec.layers) {
        h = detail::conv_out_dim(h, l.kernel, l.stride, l.pad);
        w = detail::conv_out_dim(w, l.kernel, l.stride, l.pad);
        if (h < 1 || w < 1)
            throw DimensionError("backbone stage '" + l.name + "' has no output for a " + std::to_string(in_h) + "x" +
                                 std::to_string(in_w) + " input");
        g.push_back({h, w});
        if (l.pool_window > 0) {
            if (l.pool_window > h || l.pool_window > w)
                throw DimensionError("backbone pool after '" + l.name + "' does not fit its input");
            h = (h - l.pool_window) / l.pool_stride + 1;
            w = (w - l.pool_window) / l.pool_stride + 1;
        }
    }
    return g;
}

inline void validate(const BackboneSpec& spec) {
    if (spec.layers.empty()) throw ConfigError("backbone spec has no layers");
    if (spec.input_channels <= 0 || spec.input_size <= 0) throw ConfigError("backbone input dims must be positive");
    for (const auto& l : spec.layers) {
        if (l.name.empty()) throw ConfigError("backbone layer without a name");
        if (l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0 || l.pad < 0)
            throw ConfigError("backbone layer '" + l.name + "' has invalid geometry");
        if (l.pool_window < 0 || (l.pool_window > 0 && l.pool_stride <= 0))
            throw ConfigError("backbone layer '" + l.name + "' has invalid pooling");
    }
    tap_geometry(spec, spec.input_size, spec.input_size);
}

// Smallest square input for which every stage still produces output.
inline int min_input_size(const BackboneSpec& spec) {
    for (int s = 1; s < 4096; ++s) {
        try {
            tap_geometry(spec, s, s);
            return s;
        } catch (const DimensionError&) {
        }
    }
    throw ConfigError("backbone spec admits no input size below 4096");
}

struct BackboneWeights {
    std::vector<ConvKernels> kernels;
    std::vector<std::vector<float>> biases;

    friend bool operator==(const BackboneWeights&, const BackboneWeights&) = default;
};

struct TapSet {
    std::vector<Tensor3> taps;  // one per conv stage, post-activation, pre-pool
};

inline void check_weights(const BackboneSpec& spec, const BackboneWeights& w) {
    if (w.kernels.size() != spec.layers.size() || w.biases.size() != spec.layers.size())
        throw DimensionError("backbone weights have " + std::to_string(w.kernels.size()) + " layers, spec has " +
                             std::to_string(spec.layers.size()));
    int in_c = spec.input_channels;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        const auto& K = w.kernels[l];
        if (K.out_channels != L.out_channels || K.in_channels != in_c || K.size != L.kernel ||
            w.biases[l].size() != static_cast<std::size_t>(L.out_channels))
            throw DimensionError("backbone weights for '" + L.name + "' do not match the spec");
        in_c = L.out_channels;
    }
}

// He-uniform kernels, zero biases.
inline BackboneWeights init_backbone_weights(const BackboneSpec& spec, std::uint64_t seed) {
    validate(spec);
    Rng rng(seed);
    BackboneWeights w;
    int in_c = spec.input_channels;
    for (const auto& l : spec.layers) {
        ConvKernels k(l.out_channels, in_c, l.kernel);
        const float bound = std::sqrt(6.0f / static_cast<float>(k.fan_in()));
        for (float& v : k.data) v = rng.uniform(-bound, bound);
        w.kernels.push_back(std::move(k));
        w.biases.emplace_back(l.out_channels, 0.0f);
        in_c = l.out_channels;
    }
    return w;
}

namespace detail {

struct StageTrace {
    Tensor3 input;
    Tensor3 activation;  // tap
    std::vector<std::uint32_t> argmax;
};

// Runs every stage on an input of any spatial size.
inline TapSet run_backbone(const BackboneSpec& spec, const BackboneWeights& w, const Tensor3& input,
                           std::vector<StageTrace>* trace = nullptr) {
    check_weights(spec, w);
    if (input.channels != spec.input_channels)
        throw DimensionError("backbone expects " + std::to_string(spec.input_channels) + " input channels");
    TapSet out;
    Tensor3 x = input;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& L = spec.layers[l];
        Tensor3 a = conv2d_forward(x, w.kernels[l], w.biases[l], L.stride, L.pad);
        if (L.relu) a = relu(std::move(a));
        StageTrace st;
        if (trace) st.input = std::move(x);
        if (L.pool_window > 0) {
            x = maxpool2d(a, L.pool_window, L.pool_stride, trace ? &st.argmax : nullptr);
        } else if (l + 1 < spec.layers.size()) {
            x = a;
        }
        if (trace) {
            st.activation = a;
            trace->push_back(std::move(st));
        }
        out.taps.push_back(std::move(a));
    }
    return out;
}

}  // namespace detail

/// Forward pass on one backbone-sized patch, returning every stage's tap.
inline TapSet forward_with_taps(const BackboneSpec& spec, const BackboneWeights& weights, const Tensor3& patch) {
    if (patch.channels != spec.input_channels || patch.height != spec.input_size || patch.width != spec.input_size)
        throw DimensionError("backbone input must be " + std::to_string(spec.input_channels) + "x" +
                             std::to_string(spec.input_size) + "x" + std::to_string(spec.input_size) + ", got " +
                             std::to_string(patch.channels) + "x" + std::to_string(patch.height) + "x" +
                             std::to_string(patch.width));
    return detail::run_backbone(spec, weights, patch);
}

// Same network applied to an arbitrarily sized rendering (fast path).
inline TapSet forward_full_image(const BackboneSpec& spec, const BackboneWeights& weights, const Tensor3& image) {
    return detail::run_backbone(spec, weights, image);
}

// ---- serialization -------------------------------------------------------

inline std::string serialize_spec(const BackboneSpec& spec) {
    std::ostringstream os;
    os << "kind=backbone\n"
       << "input_channels=" << spec.input_channels << "\n"
       << "input_size=" << spec.input_size << "\n"
       << "layers=" << spec.layers.size() << "\n";
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        os << "layer" << i << "=" << l.name << "," << l.out_channels << "," << l.kernel << "," << l.stride << ","
           << l.pad << "," << (l.relu ? 1 : 0) << "," << l.pool_window << "," << l.pool_stride << "\n";
    }
    return os.str();
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> parse_header_lines(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(FormatError::Kind::shape_mismatch, "malformed header line '" + line + "'");
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return kv;
}

inline std::string header_value(const std::vector<std::pair<std::string, std::string>>& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    throw FormatError(FormatError::Kind::shape_mismatch, "header is missing key '" + key + "'");
}

inline int header_int(const std::string& v) {
    try {
        std::size_t used = 0;
        const int r = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw FormatError(FormatError::Kind::shape_mismatch, "expected an integer in header, got '" + v + "'");
    }
}

}  // namespace detail

inline BackboneSpec parse_spec(const std::string& header) {
    const auto kv = detail::parse_header_lines(header);
    if (detail::header_value(kv, "kind") != "backbone")
        throw FormatError(FormatError::Kind::shape_mismatch, "tensor file does not hold backbone weights");
    BackboneSpec s;
    s.input_channels = detail::header_int(detail::header_value(kv, "input_channels"));
    s.input_size = detail::header_int(detail::header_value(kv, "input_size"));
    const int n = detail::header_int(detail::header_value(kv, "layers"));
    for (int i = 0; i < n; ++i) {
        std::istringstream fields(detail::header_value(kv, "layer" + std::to_string(i)));
        std::vector<std::string> f;
        std::string tok;
        while (std::getline(fields, tok, ',')) f.push_back(tok);
        if (f.size() != 8) throw FormatError(FormatError::Kind::shape_mismatch, "malformed layer descriptor " + std::to_string(i));
        ConvLayerSpec l;
        l.name = f[0];
        l.out_channels = detail::header_int(f[1]);
        l.kernel = detail::header_int(f[2]);
        l.stride = detail::header_int(f[3]);
        l.pad = detail::header_int(f[4]);
        l.relu = detail::header_int(f[5]) != 0;
        l.pool_window = detail::header_int(f[6]);
        l.pool_stride = detail::header_int(f[7]);
        s.layers.push_back(l);
    }
    return s;
}

inline TensorFile backbone_to_tensor_file(const BackboneSpec& spec, const BackboneWeights& w) {
    check_weights(spec, w);
    TensorFile f;
    f.header = serialize_spec(spec);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& K = w.kernels[l];
        f.tensors.push_back({spec.layers[l].name + ".weight",
                             {static_cast<std::uint32_t>(K.out_channels), static_cast<std::uint32_t>(K.in_channels),
                              static_cast<std::uint32_t>(K.size), static_cast<std::uint32_t>(K.size)},
                             K.data});
        f.tensors.push_back({spec.layers[l].name + ".bias", {static_cast<std::uint32_t>(K.out_channels)}, w.biases[l]});
    }
    return f;
}

struct BackboneModel {
    BackboneSpec spec;
    BackboneWeights weights;
};

inline BackboneModel backbone_from_tensor_file(const TensorFile& f) {
    BackboneModel m;
    m.spec = parse_spec(f.header);
    try {
        validate(m.spec);
    } catch (const Error& e) {
        throw FormatError(FormatError::Kind::shape_mismatch, std::string("backbone spec in file is invalid: ") + e.what());
    }
    if (f.tensors.size() != 2 * m.spec.layers.size())
        throw FormatError(FormatError::Kind::shape_mismatch, "backbone file holds " + std::to_string(f.tensors.size()) +
                                                                 " tensors, spec needs " + std::to_string(2 * m.spec.layers.size()));
    int in_c = m.spec.input_channels;
    for (std::size_t l = 0; l < m.spec.layers.size(); ++l) {
        const auto& L = m.spec.layers[l];
        const auto& wt = f.tensors[2 * l];
        const auto& bt = f.tensors[2 * l + 1];
        const std::vector<std::uint32_t> want_w{static_cast<std::uint32_t>(L.out_channels), static_cast<std::uint32_t>(in_c),
                                                static_cast<std::uint32_t>(L.kernel), static_cast<std::uint32_t>(L.kernel)};
        if (wt.name != L.name + ".weight" || wt.dims != want_w || bt.name != L.name + ".bias" ||
            bt.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(L.out_channels)})
            throw FormatError(FormatError::Kind::shape_mismatch, "layer '" + L.name + "' shape is inconsistent with the spec");
        ConvKernels k(L.out_channels, in_c, L.kernel);
        k.data = wt.data;
        m.weights.kernels.push_back(std::move(k));
        m.weights.biases.push_back(bt.data);
        in_c = L.out_channels;
    }
    return m;
}

inline void save_weights(const std::string& path, const BackboneSpec& spec, const BackboneWeights& w) {
    save_tensor_file(path, backbone_to_tensor_file(spec, w));
}

inline BackboneModel load_weights(const std::string& path) { return backbone_from_tensor_file(load_tensor_file(path)); }

// ---- toy pretraining -----------------------------------------------------

struct PretrainConfig {
    int epochs = 10;
    float lr = 0.01f;
    int batch = 8;
    float momentum = 0.9f;
    std::uint64_t seed = 1;
};

struct PretrainEpoch {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct PretrainResult {
    BackboneWeights weights;
    std::vector<PretrainEpoch> history;
};

namespace detail {

// Gradient accumulators for the pretraining classifier.
struct ClassifierGrads {
    std::vector<ConvKernels> kernels;
    std::vector<std::vector<float>> biases;
    std::vector<float> head_weights, head_bias;

    ClassifierGrads(const BackboneWeights& w, const DenseLayer& head)
        : biases(w.biases.size()), head_weights(head.weights.size(), 0.0f), head_bias(head.bias.size(), 0.0f) {
        for (std::size_t l = 0; l < w.kernels.size(); ++l) {
            kernels.emplace_back(w.kernels[l].out_channels, w.kernels[l].in_channels, w.kernels[l].size);
            biases[l].assign(w.biases[l].size(), 0.0f);
        }
    }
};

struct ClassifierOutcome {
    double loss = 0.0;
    bool correct = false;
};

// Global average of the last tap -> linear logits -> softmax cross-entropy.
// Adds this sample's gradients to `grads` when it is non-null.
inline ClassifierOutcome classifier_loss(const BackboneSpec& spec, const BackboneWeights& w, const DenseLayer& head,
                                         const synthetic::LabeledImage& sample, ClassifierGrads* grads) {
    std::vector<StageTrace> trace;
    const TapSet taps = run_backbone(spec, w, sample.image, grads ? &trace : nullptr);
    const Tensor3& top = taps.taps.back();
    std::vector<float> feat(top.channels, 0.0f);
    for (int c = 0; c < top.channels; ++c) {
        double s = 0.0;
        for (std::size_t p = 0; p < top.plane(); ++p) s += top.channel(c)[p];
        feat[c] = static_cast<float>(s / static_cast<double>(top.plane()));
    }
    const auto logits = dense_forward(head, feat);
    const auto ce = softmax_cross_entropy(logits, sample.label);
    ClassifierOutcome out{ce.loss, std::max_element(logits.begin(), logits.end()) - logits.begin() == sample.label};
    if (!grads) return out;

    const auto hg = dense_backward(head, feat, ce.grad);
    for (std::size_t i = 0; i < hg.weights.size(); ++i) grads->head_weights[i] += hg.weights[i];
    for (std::size_t i = 0; i < hg.bias.size(); ++i) grads->head_bias[i] += hg.bias[i];

    Tensor3 g(top.channels, top.height, top.width);
    for (int c = 0; c < top.channels; ++c) std::fill_n(g.channel(c), g.plane(), hg.input[c] / static_cast<float>(top.plane()));
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const auto& layer = spec.layers[li];
        if (layer.relu) g = relu_backward(trace[li].activation, std::move(g));
        auto cg = conv2d_backward(trace[li].input, w.kernels[li], layer.stride, layer.pad, g, li > 0);
        for (std::size_t i = 0; i < cg.kernels.data.size(); ++i) grads->kernels[li].data[i] += cg.kernels.data[i];
        for (std::size_t i = 0; i < cg.bias.size(); ++i) grads->biases[li][i] += cg.bias[i];
        if (li == 0) break;
        g = std::move(cg.input);
        const auto& prev = spec.layers[li - 1];
        if (prev.pool_window > 0) g = maxpool2d_backward(trace[li - 1].activation, g, trace[li - 1].argmax);
    }
    return out;
}

}  // namespace detail

// Trains the conv stages plus a throwaway linear classifier (global average of
// the last tap -> logits) with softmax cross-entropy. Only the conv weights are
// returned.
//
// When the first stage is unpadded, training sees inputs shifted by -0.5 and
// the shift is folded into the first-stage biases afterwards, so the returned
// weights expect ordinary [0,1] images.
inline PretrainResult pretrain_toy(const BackboneSpec& spec, const std::vector<synthetic::LabeledImage>& dataset,
                                   const PretrainConfig& cfg,
                                   const std::function<void(int, const PretrainEpoch&)>& on_epoch = {}) {
    if (dataset.empty()) throw DataError("pretraining dataset is empty");
    int num_classes = 0;
    for (const auto& s : dataset) num_classes = std::max(num_classes, s.label + 1);
    if (num_classes < 2) throw DataError("pretraining needs at least 2 classes");
    if (cfg.epochs < 0 || cfg.batch <= 0 || !(cfg.lr > 0.0f) || !(cfg.momentum >= 0.0f && cfg.momentum < 1.0f))
        throw ConfigError("invalid pretraining config");

    PretrainResult res;
    res.weights = init_backbone_weights(spec, sub_seed(cfg.seed, "backbone-init"));
    if (cfg.epochs == 0) return res;

    const int last_c = spec.layers.back().out_channels;
    DenseLayer head(last_c, num_classes);
    {
        Rng rng(sub_seed(cfg.seed, "pretrain-head-init"));
        const float bound = 1.0f / std::sqrt(static_cast<float>(last_c));
        for (float& v : head.weights) v = rng.uniform(-bound, bound);
    }
    Rng order_rng(sub_seed(cfg.seed, "pretrain-order"));
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t L = spec.layers.size();
    const float shift = spec.layers.front().pad == 0 ? 0.5f : 0.0f;
    synthetic::LabeledImage shifted;
    // Momentum buffers share the gradient layout.
    detail::ClassifierGrads velocity(res.weights, head);
    auto step = [&](std::span<float> param, std::span<const float> grad, std::span<float> vel, float lr) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            vel[i] = cfg.momentum * vel[i] - lr * grad[i];
            param[i] += vel[i];
        }
    };
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        PretrainEpoch stats;
        std::size_t correct = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
            const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch));
            detail::ClassifierGrads grads(res.weights, head);
            for (std::size_t bi = b0; bi < b1; ++bi) {
                shifted = dataset[order[bi]];
                for (float& v : shifted.image.data) v -= shift;
                const auto r = detail::classifier_loss(spec, res.weights, head, shifted, &grads);
                stats.loss += r.loss;
                correct += r.correct;
            }
            const float lr = cfg.lr / static_cast<float>(b1 - b0);
            step(head.weights, grads.head_weights, velocity.head_weights, lr);
            step(head.bias, grads.head_bias, velocity.head_bias, lr);
            for (std::size_t l = 0; l < L; ++l) {
                step(res.weights.kernels[l].data, grads.kernels[l].data, velocity.kernels[l].data, lr);
                step(res.weights.biases[l], grads.biases[l], velocity.biases[l], lr);
            }
        }
        stats.loss /= static_cast<double>(dataset.size());
        stats.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
        res.history.push_back(stats);
        if (on_epoch) on_epoch(epoch, stats);
    }
    const ConvKernels& k0 = res.weights.kernels.front();
    const std::size_t per_out = k0.data.size() / static_cast<std::size_t>(k0.out_channels);
    for (int o = 0; o < k0.out_channels; ++o) {
        double sum = 0.0;
        for (std::size_t i = 0; i < per_out; ++i) sum += k0.data[static_cast<std::size_t>(o) * per_out + i];
        res.weights.biases.front()[o] -= static_cast<float>(shift * sum);
    }
    return res;
}

}  // namespace deepedge
