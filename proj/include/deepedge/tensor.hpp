#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepedge/error.hpp"
#include "deepedge/rng.hpp"

namespace deepedge {

// Dense channels x height x width array, row-major within each channel.
struct Tensor3 {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Tensor3() = default;
    Tensor3(int c, int h, int w, float fill = 0.0f) : channels(c), height(h), width(w) {
        if (c <= 0 || h <= 0 || w <= 0)
            throw DimensionError("Tensor3 dimensions must be positive, got " + std::to_string(c) +
                                 "x" + std::to_string(h) + "x" + std::to_string(w));
        data.assign(static_cast<std::size_t>(c) * h * w, fill);
    }

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    bool empty() const { return data.empty(); }

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    float* channel(int c) { return data.data() + static_cast<std::size_t>(c) * plane(); }
    const float* channel(int c) const { return data.data() + static_cast<std::size_t>(c) * plane(); }

    bool same_shape(const Tensor3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

// Convolution bank: out_channels x in_channels x size x size.
struct ConvKernels {
    int out_channels = 0;
    int in_channels = 0;
    int size = 0;
    std::vector<float> data;

    ConvKernels() = default;
    ConvKernels(int out_c, int in_c, int k, float fill = 0.0f)
        : out_channels(out_c), in_channels(in_c), size(k) {
        if (out_c <= 0 || in_c <= 0 || k <= 0) throw DimensionError("ConvKernels dimensions must be positive");
        data.assign(static_cast<std::size_t>(out_c) * in_c * k * k, fill);
    }

    std::size_t fan_in() const { return static_cast<std::size_t>(in_channels) * size * size; }
    float& at(int o, int c, int i, int j) { return data[((static_cast<std::size_t>(o) * in_channels + c) * size + i) * size + j]; }
    float at(int o, int c, int i, int j) const { return data[((static_cast<std::size_t>(o) * in_channels + c) * size + i) * size + j]; }

    friend bool operator==(const ConvKernels&, const ConvKernels&) = default;
};

namespace detail {

// C[M,N] += A[M,K] * B[K,N], all row-major and densely packed.
inline void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C) {
    constexpr std::size_t kBlock = 256;
    std::size_t i = 0;
    for (; i + 4 <= M; i += 4) {
        float* c0 = C + i * N;
        float* c1 = c0 + N;
        float* c2 = c1 + N;
        float* c3 = c2 + N;
        const float* a0 = A + i * K;
        const float* a1 = a0 + K;
        const float* a2 = a1 + K;
        const float* a3 = a2 + K;
        for (std::size_t j0 = 0; j0 < N; j0 += kBlock) {
            const std::size_t j1 = std::min(N, j0 + kBlock);
            for (std::size_t k = 0; k < K; ++k) {
                const float x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
                const float* b = B + k * N;
                for (std::size_t j = j0; j < j1; ++j) {
                    const float bv = b[j];
                    c0[j] += x0 * bv;
                    c1[j] += x1 * bv;
                    c2[j] += x2 * bv;
                    c3[j] += x3 * bv;
                }
            }
        }
    }
    for (; i < M; ++i) {
        float* c = C + i * N;
        const float* a = A + i * K;
        for (std::size_t k = 0; k < K; ++k) {
            const float av = a[k];
            const float* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A^T * B with A stored [K,M] and B stored [K,N].
inline void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const float* A, const float* B, float* C) {
    for (std::size_t k = 0; k < K; ++k) {
        const float* a = A + k * M;
        const float* b = B + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const float av = a[i];
            if (av == 0.0f) continue;
            float* c = C + i * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// out[cols, rows] = in[rows, cols]^T
inline void transpose(std::size_t rows, std::size_t cols, const float* in, float* out) {
    constexpr std::size_t kTile = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
        for (std::size_t c0 = 0; c0 < cols; c0 += kTile)
            for (std::size_t r = r0; r < std::min(rows, r0 + kTile); ++r)
                for (std::size_t c = c0; c < std::min(cols, c0 + kTile); ++c) out[c * rows + r] = in[r * cols + c];
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
    const int span = in + 2 * pad - k;
    return span < 0 ? 0 : span / stride + 1;
}

// Column matrix [C*K*K, OH*OW] for zero-padded convolution.
inline std::vector<float> im2col(const Tensor3& in, int k, int stride, int pad, int oh, int ow) {
    const std::size_t cols = static_cast<std::size_t>(oh) * ow;
    std::vector<float> col(static_cast<std::size_t>(in.channels) * k * k * cols, 0.0f);
    std::size_t row = 0;
    for (int c = 0; c < in.channels; ++c) {
        const float* src = in.channel(c);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j, ++row) {
                float* dst = col.data() + row * cols;
                // output columns whose source column lies inside the input
                const int lo = pad - j, hi = in.width - 1 + pad - j;
                if (hi < 0) continue;
                const int x0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
                const int x1 = std::min(ow, hi / stride + 1);
                for (int y = 0; y < oh; ++y) {
                    const int sy = y * stride + i - pad;
                    if (sy < 0 || sy >= in.height) continue;
                    const float* srow = src + static_cast<std::size_t>(sy) * in.width + (j - pad);
                    float* drow = dst + static_cast<std::size_t>(y) * ow;
                    if (stride == 1) {
                        std::copy(srow + x0, srow + x1, drow + x0);
                    } else {
                        for (int x = x0; x < x1; ++x) drow[x] = srow[x * stride];
                    }
                }
            }
        }
    }
    return col;
}

inline void col2im(const std::vector<float>& col, Tensor3& out, int k, int stride, int pad, int oh, int ow) {
    const std::size_t cols = static_cast<std::size_t>(oh) * ow;
    std::size_t row = 0;
    for (int c = 0; c < out.channels; ++c) {
        float* dst = out.channel(c);
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j, ++row) {
                const float* src = col.data() + row * cols;
                for (int y = 0; y < oh; ++y) {
                    const int sy = y * stride + i - pad;
                    if (sy < 0 || sy >= out.height) continue;
                    for (int x = 0; x < ow; ++x) {
                        const int sx = x * stride + j - pad;
                        if (sx >= 0 && sx < out.width)
                            dst[static_cast<std::size_t>(sy) * out.width + sx] += src[static_cast<std::size_t>(y) * ow + x];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// Zero-padded 2-D convolution (cross-correlation) with per-output-channel bias.
inline Tensor3 conv2d_forward(const Tensor3& input, const ConvKernels& kernels, std::span<const float> bias,
                              int stride, int pad) {
    if (kernels.in_channels != input.channels)
        throw DimensionError("conv2d: kernel expects " + std::to_string(kernels.in_channels) +
                             " input channels, got " + std::to_string(input.channels));
    if (bias.size() != static_cast<std::size_t>(kernels.out_channels))
        throw DimensionError("conv2d: bias length does not match output channels");
    if (stride <= 0 || pad < 0) throw DimensionError("conv2d: stride must be positive and pad nonnegative");
    const int oh = detail::conv_out_dim(input.height, kernels.size, stride, pad);
    const int ow = detail::conv_out_dim(input.width, kernels.size, stride, pad);
    if (oh < 1 || ow < 1) throw DimensionError("conv2d: kernel does not fit the padded input");

    Tensor3 out(kernels.out_channels, oh, ow);
    for (int o = 0; o < kernels.out_channels; ++o) std::fill_n(out.channel(o), out.plane(), bias[o]);
    const auto col = detail::im2col(input, kernels.size, stride, pad, oh, ow);
    detail::gemm_nn(kernels.out_channels, out.plane(), kernels.fan_in(), kernels.data.data(), col.data(),
                    out.data.data());
    return out;
}

struct ConvGrads {
    ConvKernels kernels;
    std::vector<float> bias;
    Tensor3 input;  // empty when not requested
};

// Gradients of a scalar loss through conv2d_forward given dL/d(output).
inline ConvGrads conv2d_backward(const Tensor3& input, const ConvKernels& kernels, int stride, int pad,
                                 const Tensor3& grad_out, bool want_input_grad) {
    const int oh = grad_out.height, ow = grad_out.width;
    if (grad_out.channels != kernels.out_channels || oh != detail::conv_out_dim(input.height, kernels.size, stride, pad) ||
        ow != detail::conv_out_dim(input.width, kernels.size, stride, pad))
        throw DimensionError("conv2d_backward: gradient shape does not match forward output");

    ConvGrads g;
    g.kernels = ConvKernels(kernels.out_channels, kernels.in_channels, kernels.size);
    g.bias.assign(kernels.out_channels, 0.0f);
    for (int o = 0; o < kernels.out_channels; ++o) {
        double s = 0.0;
        const float* go = grad_out.channel(o);
        for (std::size_t p = 0; p < grad_out.plane(); ++p) s += go[p];
        g.bias[o] = static_cast<float>(s);
    }
    const std::size_t P = grad_out.plane();
    const std::size_t Q = kernels.fan_in();
    const auto col = detail::im2col(input, kernels.size, stride, pad, oh, ow);
    std::vector<float> colT(Q * P);
    detail::transpose(Q, P, col.data(), colT.data());
    detail::gemm_nn(kernels.out_channels, Q, P, grad_out.data.data(), colT.data(), g.kernels.data.data());
    if (want_input_grad) {
        std::vector<float> dcol(Q * P, 0.0f);
        detail::gemm_tn(Q, P, kernels.out_channels, kernels.data.data(), grad_out.data.data(), dcol.data());
        g.input = Tensor3(input.channels, input.height, input.width);
        detail::col2im(dcol, g.input, kernels.size, stride, pad, oh, ow);
    }
    return g;
}

inline Tensor3 maxpool2d(const Tensor3& input, int window, int stride, std::vector<std::uint32_t>* argmax = nullptr) {
    if (window <= 0 || stride <= 0) throw DimensionError("maxpool2d: window and stride must be positive");
    if (window > input.height || window > input.width)
        throw DimensionError("maxpool2d: window " + std::to_string(window) + " exceeds input " +
                             std::to_string(input.height) + "x" + std::to_string(input.width));
    const int oh = (input.height - window) / stride + 1;
    const int ow = (input.width - window) / stride + 1;
    Tensor3 out(input.channels, oh, ow);
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t idx = 0;
    for (int c = 0; c < input.channels; ++c) {
        const float* src = input.channel(c);
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x, ++idx) {
                std::size_t best = static_cast<std::size_t>(y * stride) * input.width + x * stride;
                for (int i = 0; i < window; ++i) {
                    const std::size_t base = static_cast<std::size_t>(y * stride + i) * input.width + x * stride;
                    for (int j = 0; j < window; ++j)
                        if (src[base + j] > src[best]) best = base + j;
                }
                out.data[idx] = src[best];
                if (argmax) (*argmax)[idx] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return out;
}

// Routes each pooled gradient back to the input cell that won the max.
inline Tensor3 maxpool2d_backward(const Tensor3& input, const Tensor3& grad_out, const std::vector<std::uint32_t>& argmax) {
    if (argmax.size() != grad_out.size() || grad_out.channels != input.channels)
        throw DimensionError("maxpool2d_backward: shape mismatch");
    Tensor3 g(input.channels, input.height, input.width);
    const std::size_t per = grad_out.plane();
    for (int c = 0; c < input.channels; ++c) {
        float* dst = g.channel(c);
        for (std::size_t p = 0; p < per; ++p) {
            const std::size_t i = c * per + p;
            dst[argmax[i]] += grad_out.data[i];
        }
    }
    return g;
}

inline Tensor3 relu(Tensor3 input) {
    for (float& v : input.data) v = v > 0.0f ? v : 0.0f;
    return input;
}

inline void relu_inplace(std::span<float> v) {
    for (float& x : v) x = x > 0.0f ? x : 0.0f;
}

// grad * [activation > 0]; `activation` is the relu output (or its input).
inline Tensor3 relu_backward(const Tensor3& activation, Tensor3 grad) {
    if (!activation.same_shape(grad)) throw DimensionError("relu_backward: shape mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(activation.data[i] > 0.0f)) grad.data[i] = 0.0f;
    return grad;
}

// Fully-connected layer y = W x + b with W stored out_dim x in_dim.
struct DenseLayer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<float> weights;
    std::vector<float> bias;

    DenseLayer() = default;
    DenseLayer(int in, int out) : in_dim(in), out_dim(out) {
        if (in <= 0 || out <= 0) throw DimensionError("DenseLayer dimensions must be positive");
        weights.assign(static_cast<std::size_t>(in) * out, 0.0f);
        bias.assign(out, 0.0f);
    }

    float& w(int o, int i) { return weights[static_cast<std::size_t>(o) * in_dim + i]; }
    float w(int o, int i) const { return weights[static_cast<std::size_t>(o) * in_dim + i]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

inline std::vector<float> dense_forward(const DenseLayer& layer, std::span<const float> x) {
    if (x.size() != static_cast<std::size_t>(layer.in_dim))
        throw DimensionError("dense_forward: expected input of length " + std::to_string(layer.in_dim) + ", got " +
                             std::to_string(x.size()));
    std::vector<float> y(layer.bias);
    for (int o = 0; o < layer.out_dim; ++o) {
        const float* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
        float s = 0.0f;
        for (int i = 0; i < layer.in_dim; ++i) s += row[i] * x[i];
        y[o] += s;
    }
    return y;
}

struct DenseGrads {
    std::vector<float> weights;  // out_dim x in_dim
    std::vector<float> bias;
    std::vector<float> input;
};

inline DenseGrads dense_backward(const DenseLayer& layer, std::span<const float> x, std::span<const float> dldy) {
    if (x.size() != static_cast<std::size_t>(layer.in_dim) || dldy.size() != static_cast<std::size_t>(layer.out_dim))
        throw DimensionError("dense_backward: dimension mismatch");
    DenseGrads g;
    g.weights.assign(layer.weights.size(), 0.0f);
    g.bias.assign(dldy.begin(), dldy.end());
    g.input.assign(layer.in_dim, 0.0f);
    for (int o = 0; o < layer.out_dim; ++o) {
        const float go = dldy[o];
        float* gw = g.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
        const float* w = layer.weights.data() + static_cast<std::size_t>(o) * layer.in_dim;
        for (int i = 0; i < layer.in_dim; ++i) {
            gw[i] = go * x[i];
            g.input[i] += w[i] * go;
        }
    }
    return g;
}

// Row-batched variants: X is batch x in_dim, Y is batch x out_dim.
inline std::vector<float> dense_forward_batch(const DenseLayer& layer, std::span<const float> X, std::size_t batch) {
    if (X.size() != batch * layer.in_dim) throw DimensionError("dense_forward_batch: dimension mismatch");
    std::vector<float> Y(batch * layer.out_dim);
    for (std::size_t b = 0; b < batch; ++b) std::copy(layer.bias.begin(), layer.bias.end(), Y.begin() + b * layer.out_dim);
    std::vector<float> Wt(layer.weights.size());
    detail::transpose(layer.out_dim, layer.in_dim, layer.weights.data(), Wt.data());
    detail::gemm_nn(batch, layer.out_dim, layer.in_dim, X.data(), Wt.data(), Y.data());
    return Y;
}

// Gradients summed over the batch. `input` is left empty unless requested.
inline DenseGrads dense_backward_batch(const DenseLayer& layer, std::span<const float> X, std::span<const float> dY,
                                       std::size_t batch, bool want_input_grad) {
    if (X.size() != batch * layer.in_dim || dY.size() != batch * layer.out_dim)
        throw DimensionError("dense_backward_batch: dimension mismatch");
    DenseGrads g;
    g.weights.assign(layer.weights.size(), 0.0f);
    g.bias.assign(layer.out_dim, 0.0f);
    for (std::size_t b = 0; b < batch; ++b)
        for (int o = 0; o < layer.out_dim; ++o) g.bias[o] += dY[b * layer.out_dim + o];
    detail::gemm_tn(layer.out_dim, layer.in_dim, batch, dY.data(), X.data(), g.weights.data());
    if (want_input_grad) {
        g.input.assign(batch * layer.in_dim, 0.0f);
        detail::gemm_nn(batch, layer.in_dim, layer.out_dim, dY.data(), layer.weights.data(), g.input.data());
    }
    return g;
}

struct LossResult {
    double loss = 0.0;
    std::vector<float> grad;
};

/// Sum of squared differences and its gradient with respect to `pred`.
inline LossResult mse_loss(std::span<const float> pred, std::span<const float> target) {
    if (pred.size() != target.size()) throw DimensionError("mse_loss: length mismatch");
    if (pred.empty()) throw DimensionError("mse_loss: empty input");
    LossResult r;
    r.grad.resize(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - target[i];
        r.loss += d * d;
        r.grad[i] = static_cast<float>(2.0 * d);
    }
    return r;
}

/// Softmax cross-entropy for one sample; gradient is with respect to the logits.
inline LossResult softmax_cross_entropy(std::span<const float> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw DimensionError("softmax_cross_entropy: label out of range");
    const float mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (float v : logits) z += std::exp(static_cast<double>(v - mx));
    LossResult r;
    r.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        r.grad[i] = static_cast<float>(std::exp(static_cast<double>(logits[i] - mx)) / z);
    r.loss = -(static_cast<double>(logits[label] - mx) - std::log(z));
    r.grad[label] -= 1.0f;
    return r;
}

/// Inverted-dropout mask: kept units carry 1/(1-rate), dropped units 0.
inline std::vector<float> dropout_mask(std::size_t dim, float rate, Rng& rng) {
    if (!(rate >= 0.0f && rate < 1.0f)) throw ConfigError("dropout rate must lie in [0, 1)");
    std::vector<float> mask(dim, 1.0f);
    if (rate == 0.0f) return mask;
    const float keep = 1.0f / (1.0f - rate);
    for (float& m : mask) m = rng.uniform() < rate ? 0.0f : keep;
    return mask;
}

inline std::vector<float> dropout_mask(std::size_t dim, float rate, std::uint64_t seed) {
    Rng rng(seed);
    return dropout_mask(dim, rate, rng);
}

inline void sgd_step(std::span<float> params, std::span<const float> grads, float lr) {
    if (params.size() != grads.size()) throw DimensionError("sgd_step: shape mismatch");
    if (!(lr > 0.0f)) throw ConfigError("sgd_step: learning rate must be positive");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

namespace detail {

// Corner-aligned source coordinate: dst 0 -> src 0, dst n_out-1 -> src n_in-1.
inline float aligned_coord(int dst, int n_in, int n_out) {
    if (n_out == 1) return 0.5f * static_cast<float>(n_in - 1);
    return static_cast<float>(static_cast<double>(dst) * (n_in - 1) / (n_out - 1));
}

}  // namespace detail

/// Per-channel bilinear resize with corner-aligned coordinate mapping.
inline Tensor3 bilinear_resize(const Tensor3& input, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw DimensionError("bilinear_resize: output dims must be positive");
    Tensor3 out(input.channels, out_h, out_w);
    std::vector<int> x0(out_w), x1(out_w);
    std::vector<float> fx(out_w);
    for (int x = 0; x < out_w; ++x) {
        const float sx = detail::aligned_coord(x, input.width, out_w);
        x0[x] = std::min(static_cast<int>(sx), input.width - 1);
        x1[x] = std::min(x0[x] + 1, input.width - 1);
        fx[x] = sx - static_cast<float>(x0[x]);
    }
    for (int y = 0; y < out_h; ++y) {
        const float sy = detail::aligned_coord(y, input.height, out_h);
        const int y0 = std::min(static_cast<int>(sy), input.height - 1);
        const int y1 = std::min(y0 + 1, input.height - 1);
        const float fy = sy - static_cast<float>(y0);
        for (int c = 0; c < input.channels; ++c) {
            const float* r0 = input.channel(c) + static_cast<std::size_t>(y0) * input.width;
            const float* r1 = input.channel(c) + static_cast<std::size_t>(y1) * input.width;
            float* dst = out.channel(c) + static_cast<std::size_t>(y) * out_w;
            for (int x = 0; x < out_w; ++x) {
                const float top = r0[x0[x]] + fx[x] * (r0[x1[x]] - r0[x0[x]]);
                const float bot = r1[x0[x]] + fx[x] * (r1[x1[x]] - r1[x0[x]]);
                dst[x] = top + fy * (bot - top);
            }
        }
    }
    return out;
}

// Bilinear sample of one channel at a fractional (row, col), clamped to bounds.
inline float sample_bilinear(const Tensor3& t, int c, float row, float col) {
    row = std::clamp(row, 0.0f, static_cast<float>(t.height - 1));
    col = std::clamp(col, 0.0f, static_cast<float>(t.width - 1));
    const int y0 = static_cast<int>(row), x0 = static_cast<int>(col);
    const int y1 = std::min(y0 + 1, t.height - 1), x1 = std::min(x0 + 1, t.width - 1);
    const float fy = row - static_cast<float>(y0), fx = col - static_cast<float>(x0);
    const float top = t.at(c, y0, x0) + fx * (t.at(c, y0, x1) - t.at(c, y0, x0));
    const float bot = t.at(c, y1, x0) + fx * (t.at(c, y1, x1) - t.at(c, y1, x0));
    return top + fy * (bot - top);
}

}  // namespace deepedge
