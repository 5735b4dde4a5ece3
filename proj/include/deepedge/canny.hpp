#pragma once

// Canny edge detector; its output is the candidate set every later stage scores.

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "deepedge/error.hpp"
#include "deepedge/image.hpp"
#include "deepedge/tensor.hpp"

namespace deepedge {

struct CannyParams {
    float gaussian_sigma = 1.5f;
    float low_thresh = 0.1f;   // on magnitude normalized to [0, 1]
    float high_thresh = 0.2f;

    void validate() const {
        if (!(gaussian_sigma > 0.0f)) throw ConfigError("canny sigma must be positive");
        if (!(low_thresh > 0.0f && low_thresh < 1.0f && high_thresh > 0.0f && high_thresh < 1.0f))
            throw ConfigError("canny thresholds must lie in (0, 1)");
        if (!(low_thresh < high_thresh)) throw ConfigError("canny low threshold must be below the high threshold");
    }
};

struct Pixel {
    int row = 0;
    int col = 0;
    friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct CandidateSet {
    int height = 0;
    int width = 0;
    std::vector<Pixel> points;  // sorted, unique

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

struct GradientField {
    RealMap magnitude;    // normalized to [0, 1]
    RealMap orientation;  // atan2(gy, gx), radians; gx along columns, gy along rows
};

// Index reflection about the border without repeating the edge sample
// (-1 -> 1, n -> n-2). Handles offsets of any size.
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

inline RealMap to_luma(const Tensor3& image) {
    RealMap g(image.height, image.width);
    if (image.channels == 1) {
        std::copy(image.data.begin(), image.data.end(), g.data.begin());
    } else if (image.channels == 3) {
        for (int y = 0; y < image.height; ++y)
            for (int x = 0; x < image.width; ++x)
                g.at(y, x) = 0.299f * image.at(0, y, x) + 0.587f * image.at(1, y, x) + 0.114f * image.at(2, y, x);
    } else {
        throw DimensionError("canny expects a 1- or 3-channel image");
    }
    return g;
}

inline std::vector<float> gaussian_kernel(float sigma) {
    const int radius = static_cast<int>(std::ceil(3.0f * sigma));
    std::vector<float> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (static_cast<double>(sigma) * sigma));
        k[i + radius] = static_cast<float>(v);
        sum += v;
    }
    for (float& v : k) v = static_cast<float>(v / sum);
    return k;
}

inline RealMap gaussian_blur(const RealMap& in, float sigma) {
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    RealMap tmp(in.height, in.width), out(in.height, in.width);
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            float s = 0.0f;
            for (int i = -r; i <= r; ++i) s += k[i + r] * in.at(y, reflect_index(x + i, in.width));
            tmp.at(y, x) = s;
        }
    for (int y = 0; y < in.height; ++y)
        for (int x = 0; x < in.width; ++x) {
            float s = 0.0f;
            for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(reflect_index(y + i, in.height), x);
            out.at(y, x) = s;
        }
    return out;
}

/// Gaussian smoothing (3 sigma support, mirrored border) followed by 3x3 Sobel.
inline GradientField gradient_field(const RealMap& gray, float sigma) {
    if (gray.height < 3 || gray.width < 3) throw DimensionError("gradient_field: image must be at least 3x3");
    if (!(sigma > 0.0f)) throw ConfigError("gradient_field: sigma must be positive");
    const RealMap b = gaussian_blur(gray, sigma);
    GradientField g{RealMap(gray.height, gray.width), RealMap(gray.height, gray.width)};
    float peak = 0.0f;
    for (int y = 0; y < b.height; ++y) {
        const int ym = reflect_index(y - 1, b.height), yp = reflect_index(y + 1, b.height);
        for (int x = 0; x < b.width; ++x) {
            const int xm = reflect_index(x - 1, b.width), xp = reflect_index(x + 1, b.width);
            const float gx = (b.at(ym, xp) + 2 * b.at(y, xp) + b.at(yp, xp)) - (b.at(ym, xm) + 2 * b.at(y, xm) + b.at(yp, xm));
            const float gy = (b.at(yp, xm) + 2 * b.at(yp, x) + b.at(yp, xp)) - (b.at(ym, xm) + 2 * b.at(ym, x) + b.at(ym, xp));
            const float m = std::sqrt(gx * gx + gy * gy);
            g.magnitude.at(y, x) = m;
            g.orientation.at(y, x) = std::atan2(gy, gx);
            peak = std::max(peak, m);
        }
    }
    // Flat images have numerically tiny gradients; treat them as zero.
    if (peak > 1e-6f) {
        for (float& m : g.magnitude.data) m /= peak;
    } else {
        std::fill(g.magnitude.data.begin(), g.magnitude.data.end(), 0.0f);
    }
    return g;
}

/// Keeps pixels that are maxima along their gradient direction (4 bins).
inline RealMap non_max_suppression(const GradientField& g) {
    const auto& mag = g.magnitude;
    RealMap out(mag.height, mag.width);
    auto m = [&](int y, int x) { return mag.in_bounds(y, x) ? mag.at(y, x) : 0.0f; };
    for (int y = 0; y < mag.height; ++y)
        for (int x = 0; x < mag.width; ++x) {
            const float v = mag.at(y, x);
            if (v <= 0.0f) continue;
            float deg = g.orientation.at(y, x) * 57.29577951f;
            if (deg < 0) deg += 180.0f;
            int dy = 0, dx = 0;
            if (deg < 22.5f || deg >= 157.5f) {
                dx = 1;
            } else if (deg < 67.5f) {
                dy = 1, dx = 1;
            } else if (deg < 112.5f) {
                dy = 1;
            } else {
                dy = 1, dx = -1;
            }
            // Strict on the forward side, non-strict behind: a two-pixel
            // plateau straddling a step keeps exactly one pixel.
            if (v > m(y + dy, x + dx) && v >= m(y - dy, x - dx)) out.at(y, x) = v;
        }
    return out;
}

/// Keeps weak pixels (>= low) 8-connected to a strong pixel (>= high).
inline BinaryMap hysteresis(const RealMap& nms, float low, float high) {
    BinaryMap keep(nms.height, nms.width);
    std::deque<Pixel> queue;
    for (int y = 0; y < nms.height; ++y)
        for (int x = 0; x < nms.width; ++x)
            if (nms.at(y, x) > 0.0f && nms.at(y, x) >= high) {
                keep.at(y, x) = 1;
                queue.push_back({y, x});
            }
    while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int y = p.row + dy, x = p.col + dx;
                if (!nms.in_bounds(y, x) || keep.at(y, x)) continue;
                if (nms.at(y, x) > 0.0f && nms.at(y, x) >= low) {
                    keep.at(y, x) = 1;
                    queue.push_back({y, x});
                }
            }
    }
    return keep;
}

inline CandidateSet candidates_from_map(const BinaryMap& m) {
    CandidateSet c{m.height, m.width, {}};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(y, x)) c.points.push_back({y, x});
    return c;
}

inline CandidateSet canny_detect(const Tensor3& image, const CannyParams& params) {
    params.validate();
    const GradientField g = gradient_field(to_luma(image), params.gaussian_sigma);
    return candidates_from_map(hysteresis(non_max_suppression(g), params.low_thresh, params.high_thresh));
}

}  // namespace deepedge
