#pragma once

// Pooled multi-scale descriptors built from backbone taps.
//
// Layout (fixed, so head weights stay portable): scale-major, then conv layer,
// then pooling in the order [average, max, center], then channel.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepedge/backbone.hpp"
#include "deepedge/canny.hpp"
#include "deepedge/error.hpp"
#include "deepedge/patching.hpp"
#include "deepedge/tensor.hpp"

namespace deepedge {

enum class Pooling { average = 0, max = 1, center = 2 };

inline const char* pooling_name(Pooling p) {
    switch (p) {
        case Pooling::average: return "average";
        case Pooling::max: return "max";
        case Pooling::center: return "center";
    }
    return "?";
}

struct PoolingConfig {
    std::vector<int> sides{7, 5, 3, 3, 3};  // sub-volume side per conv layer
    std::vector<Pooling> poolings{Pooling::average, Pooling::max, Pooling::center};
    std::vector<int> layers{0, 1, 2, 3, 4};  // conv layers that contribute, ascending

    bool uses(Pooling p) const { return std::find(poolings.begin(), poolings.end(), p) != poolings.end(); }

    void validate(std::size_t backbone_layers) const {
        if (sides.size() != backbone_layers)
            throw ConfigError("pooling needs one sub-volume side per conv layer (" + std::to_string(backbone_layers) +
                              "), got " + std::to_string(sides.size()));
        for (int s : sides)
            if (s <= 0 || s % 2 == 0) throw ConfigError("sub-volume sides must be odd and positive");
        if (poolings.empty()) throw ConfigError("at least one pooling type must be enabled");
        for (std::size_t i = 0; i < poolings.size(); ++i)
            if (i > 0 && static_cast<int>(poolings[i]) <= static_cast<int>(poolings[i - 1]))
                throw ConfigError("poolings must be listed once each in the order average, max, center");
        if (layers.empty()) throw ConfigError("at least one conv layer must contribute to the descriptor");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i] < 0 || static_cast<std::size_t>(layers[i]) >= backbone_layers)
                throw ConfigError("descriptor layer index out of range");
            if (i > 0 && layers[i] <= layers[i - 1]) throw ConfigError("descriptor layers must be ascending and unique");
        }
    }
};

inline std::size_t descriptor_length(const PoolingConfig& cfg, std::size_t num_scales, const std::vector<int>& channels) {
    std::size_t per_scale = 0;
    for (int l : cfg.layers) per_scale += static_cast<std::size_t>(channels.at(l));
    return cfg.poolings.size() * num_scales * per_scale;
}

enum class ScaleKind { cropped, full };

/// Tap cell corresponding to the candidate.
inline Pixel map_center(int tap_h, int tap_w, ScaleKind kind, Pixel candidate, int image_h, int image_w) {
    if (tap_h <= 0 || tap_w <= 0) throw DimensionError("map_center: empty tap");
    if (kind == ScaleKind::cropped) return {(tap_h - 1) / 2, (tap_w - 1) / 2};
    const auto prop = [](int v, int tap, int img) {
        const long r = std::lround(static_cast<double>(v) * tap / img);
        return static_cast<int>(std::clamp<long>(r, 0, tap - 1));
    };
    return {prop(candidate.row, tap_h, image_h), prop(candidate.col, tap_w, image_w)};
}

struct PooledFeatures {
    std::vector<float> average;
    std::vector<float> max;
    std::vector<float> center;

    // Concatenation [average | max | center] over channels.
    std::vector<float> flat() const {
        std::vector<float> v(average);
        v.insert(v.end(), max.begin(), max.end());
        v.insert(v.end(), center.begin(), center.end());
        return v;
    }
};

/// Average, max and center value of a side x side window, clamped to the tap.
inline PooledFeatures pool_subvolume(const Tensor3& tap, Pixel center, int side) {
    if (side <= 0 || side % 2 == 0) throw ConfigError("sub-volume side must be odd and positive");
    if (center.row < 0 || center.col < 0 || center.row >= tap.height || center.col >= tap.width)
        throw DimensionError("pool_subvolume: center outside tap");
    const int h = side / 2;
    const int r0 = std::max(0, center.row - h), r1 = std::min(tap.height - 1, center.row + h);
    const int c0 = std::max(0, center.col - h), c1 = std::min(tap.width - 1, center.col + h);
    const float n = static_cast<float>((r1 - r0 + 1) * (c1 - c0 + 1));
    PooledFeatures out;
    out.average.resize(tap.channels);
    out.max.resize(tap.channels);
    out.center.resize(tap.channels);
    for (int ch = 0; ch < tap.channels; ++ch) {
        float sum = 0.0f, mx = tap.at(ch, r0, c0);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const float v = tap.at(ch, r, c);
                sum += v;
                mx = std::max(mx, v);
            }
        out.average[ch] = sum / n;
        out.max[ch] = mx;
        out.center[ch] = tap.at(ch, center.row, center.col);
    }
    return out;
}

// Same pooling around a fractional center; every window sample is bilinearly
// interpolated. Samples whose coordinate leaves the tap are dropped.
inline PooledFeatures pool_subvolume_bilinear(const Tensor3& tap, float row, float col, int side) {
    if (side <= 0 || side % 2 == 0) throw ConfigError("sub-volume side must be odd and positive");
    row = std::clamp(row, 0.0f, static_cast<float>(tap.height - 1));
    col = std::clamp(col, 0.0f, static_cast<float>(tap.width - 1));
    const int h = side / 2;
    PooledFeatures out;
    out.average.assign(tap.channels, 0.0f);
    out.max.assign(tap.channels, 0.0f);
    out.center.assign(tap.channels, 0.0f);
    for (int ch = 0; ch < tap.channels; ++ch) {
        float sum = 0.0f, mx = -INFINITY;
        int n = 0;
        for (int i = -h; i <= h; ++i) {
            const float r = row + static_cast<float>(i);
            if (r < 0.0f || r > static_cast<float>(tap.height - 1)) continue;
            for (int j = -h; j <= h; ++j) {
                const float c = col + static_cast<float>(j);
                if (c < 0.0f || c > static_cast<float>(tap.width - 1)) continue;
                const float v = sample_bilinear(tap, ch, r, c);
                sum += v;
                mx = std::max(mx, v);
                ++n;
            }
        }
        out.average[ch] = sum / static_cast<float>(n);
        out.max[ch] = mx;
        out.center[ch] = sample_bilinear(tap, ch, row, col);
    }
    return out;
}

namespace detail {

inline void append_pooled(std::vector<float>& d, const PooledFeatures& p, const PoolingConfig& cfg) {
    for (Pooling kind : cfg.poolings) {
        const auto& src = kind == Pooling::average ? p.average : kind == Pooling::max ? p.max : p.center;
        d.insert(d.end(), src.begin(), src.end());
    }
}

inline void check_taps(std::span<const TapSet> taps, const ScaleConfig& scales, const PoolingConfig& cfg) {
    if (taps.size() != scales.size())
        throw DimensionError("descriptor needs one tap set per scale (" + std::to_string(scales.size()) + "), got " +
                             std::to_string(taps.size()));
    for (const auto& t : taps)
        if (t.taps.size() != cfg.sides.size())
            throw DimensionError("tap set has " + std::to_string(t.taps.size()) + " layers, pooling config expects " +
                                 std::to_string(cfg.sides.size()));
}

}  // namespace detail

/// Descriptor from exact per-candidate pyramids: `taps[s]` comes from the
/// backbone applied to scale s of this candidate's pyramid.
inline std::vector<float> descriptor_for_candidate(std::span<const TapSet> taps, Pixel candidate, int image_h, int image_w,
                                                   const ScaleConfig& scales, const PoolingConfig& cfg) {
    detail::check_taps(taps, scales, cfg);
    std::vector<float> d;
    for (std::size_t s = 0; s < taps.size(); ++s) {
        const ScaleKind kind = scales.scales[s].full() ? ScaleKind::full : ScaleKind::cropped;
        for (int l : cfg.layers) {
            const Tensor3& tap = taps[s].taps[l];
            const Pixel c = map_center(tap.height, tap.width, kind, candidate, image_h, image_w);
            detail::append_pooled(d, pool_subvolume(tap, c, cfg.sides[l]), cfg);
        }
    }
    return d;
}

enum class FastInterp { nearest, bilinear };

// Taps of each scale's rendering of the whole image. Cropped scales render
// the image mirror-padded by `pad` pixels per side, so every exact patch is a
// window of that rendering.
struct FullImageTaps {
    int image_h = 0;
    int image_w = 0;
    std::vector<TapSet> per_scale;
    std::vector<int> pad;  // per scale, in image pixels
};

/// Fast-path descriptor: the candidate is mapped proportionally into each
/// precomputed full-image tap and pooled there.
inline std::vector<float> fast_descriptor(const FullImageTaps& full, Pixel candidate, const ScaleConfig& scales,
                                          const PoolingConfig& cfg, FastInterp interp = FastInterp::nearest) {
    if (full.per_scale.empty()) throw DataError("fast descriptor requested without precomputed taps");
    detail::check_taps(full.per_scale, scales, cfg);
    std::vector<float> d;
    for (std::size_t s = 0; s < full.per_scale.size(); ++s) {
        const int pad = s < full.pad.size() ? full.pad[s] : 0;
        const Pixel at{candidate.row + pad, candidate.col + pad};
        const int h = full.image_h + 2 * pad, w = full.image_w + 2 * pad;
        for (int l : cfg.layers) {
            const Tensor3& tap = full.per_scale[s].taps[l];
            if (interp == FastInterp::nearest) {
                const Pixel c = map_center(tap.height, tap.width, ScaleKind::full, at, h, w);
                detail::append_pooled(d, pool_subvolume(tap, c, cfg.sides[l]), cfg);
            } else {
                const float r = static_cast<float>(static_cast<double>(at.row) * tap.height / h);
                const float c = static_cast<float>(static_cast<double>(at.col) * tap.width / w);
                detail::append_pooled(d, pool_subvolume_bilinear(tap, r, c, cfg.sides[l]), cfg);
            }
        }
    }
    return d;
}

inline Tensor3 to_three_channels(const Tensor3& image) {
    if (image.channels == 3) return image;
    if (image.channels != 1) throw DimensionError("images must have 1 or 3 channels");
    Tensor3 out(3, image.height, image.width);
    for (int c = 0; c < 3; ++c) std::copy(image.data.begin(), image.data.end(), out.channel(c));
    return out;
}

// Runs the backbone for descriptor extraction and counts every evaluation.
// Not safe for concurrent use (the counter is unsynchronized).
class DescriptorExtractor {
public:
    DescriptorExtractor(const BackboneModel& backbone, ScaleConfig scales, PoolingConfig pooling)
        : backbone_(backbone), scales_(std::move(scales)), pooling_(std::move(pooling)) {
        scales_.validate();
        pooling_.validate(backbone_.spec.layers.size());
        if (scales_.target != backbone_.spec.input_size)
            throw ConfigError("patch target size " + std::to_string(scales_.target) + " differs from backbone input " +
                              std::to_string(backbone_.spec.input_size));
        const auto geom = tap_geometry(backbone_.spec, scales_.target, scales_.target);
        for (int l : pooling_.layers)
            if (geom[l].height < pooling_.sides[l] || geom[l].width < pooling_.sides[l])
                throw ConfigError("sub-volume side " + std::to_string(pooling_.sides[l]) + " does not fit the " +
                                  std::to_string(geom[l].height) + "x" + std::to_string(geom[l].width) + " tap of layer " +
                                  std::to_string(l + 1));
    }

    const ScaleConfig& scales() const { return scales_; }
    const PoolingConfig& pooling() const { return pooling_; }
    std::size_t length() const { return descriptor_length(pooling_, scales_.size(), backbone_.spec.channels()); }
    std::size_t evaluations() const { return evaluations_; }
    void reset_evaluations() { evaluations_ = 0; }

    TapSet run(const Tensor3& patch) {
        ++evaluations_;
        return forward_with_taps(backbone_.spec, backbone_.weights, patch);
    }

    /// Exact descriptor: one backbone pass per scale for this candidate.
    std::vector<float> exact(const Tensor3& image, Pixel candidate) {
        const Tensor3 rgb = to_three_channels(image);
        std::vector<TapSet> taps;
        for (const auto& s : scales_.scales) taps.push_back(run(render_scale(rgb, candidate, s, scales_.target)));
        return descriptor_for_candidate(taps, candidate, rgb.height, rgb.width, scales_, pooling_);
    }

    // Exact descriptors for several candidates of one image. The full-image
    // scale renders identically for every candidate, so its taps are computed
    // once; results equal exact() bit for bit.
    std::vector<std::vector<float>> exact_batch(const Tensor3& image, std::span<const Pixel> candidates) {
        const Tensor3 rgb = to_three_channels(image);
        std::vector<std::optional<TapSet>> shared(scales_.size());
        std::vector<std::vector<float>> out;
        out.reserve(candidates.size());
        for (const Pixel& p : candidates) {
            std::vector<TapSet> taps;
            for (std::size_t s = 0; s < scales_.size(); ++s) {
                const Scale& sc = scales_.scales[s];
                if (sc.full()) {
                    if (!shared[s]) shared[s] = run(render_scale(rgb, p, sc, scales_.target));
                    taps.push_back(*shared[s]);
                } else {
                    taps.push_back(run(render_scale(rgb, p, sc, scales_.target)));
                }
            }
            out.push_back(descriptor_for_candidate(taps, p, rgb.height, rgb.width, scales_, pooling_));
        }
        return out;
    }

    /// One backbone pass per scale over the whole image (fast path).
    FullImageTaps precompute(const Tensor3& image) {
        const Tensor3 rgb = to_three_channels(image);
        const int min_size = min_input_size(backbone_.spec);
        FullImageTaps full{rgb.height, rgb.width, {}, {}};
        for (const auto& s : scales_.scales) {
            const int pad = s.full() ? 0 : s.crop / 2;
            const Tensor3 src = pad > 0 ? mirror_pad(rgb, pad) : rgb;
            int h = scales_.target, w = scales_.target;
            if (!s.full()) {
                h = static_cast<int>(std::lround(static_cast<double>(src.height) * scales_.target / s.crop));
                w = static_cast<int>(std::lround(static_cast<double>(src.width) * scales_.target / s.crop));
            }
            h = std::max(h, min_size);
            w = std::max(w, min_size);
            ++evaluations_;
            full.per_scale.push_back(forward_full_image(backbone_.spec, backbone_.weights, bilinear_resize(src, h, w)));
            full.pad.push_back(pad);
        }
        return full;
    }

    std::vector<float> fast(const FullImageTaps& full, Pixel candidate, FastInterp interp = FastInterp::nearest) const {
        return fast_descriptor(full, candidate, scales_, pooling_, interp);
    }

private:
    const BackboneModel& backbone_;
    ScaleConfig scales_;
    PoolingConfig pooling_;
    std::size_t evaluations_ = 0;
};

}  // namespace deepedge
