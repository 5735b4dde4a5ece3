#pragma once

// Procedural shape images: the pretraining classes for the toy backbone and a
// multi-annotator contour corpus for desk-scale training and evaluation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deepedge/image.hpp"
#include "deepedge/rng.hpp"
#include "deepedge/tensor.hpp"

namespace deepedge::synthetic {

enum class ShapeKind { disc = 0, rectangle = 1, triangle = 2 };

struct Shape {
    ShapeKind kind = ShapeKind::disc;
    float cy = 0, cx = 0;  // center
    float size = 0;        // radius / half-extent
    float angle = 0;       // rotation for rectangles and triangles
    float aspect = 1;      // rectangle height/width ratio
    std::array<float, 3> color{};

    bool contains(float y, float x) const {
        const float dy = y - cy, dx = x - cx;
        switch (kind) {
            case ShapeKind::disc:
                return dy * dy + dx * dx <= size * size;
            case ShapeKind::rectangle: {
                const float c = std::cos(angle), s = std::sin(angle);
                const float u = c * dx + s * dy, v = -s * dx + c * dy;
                return std::abs(u) <= size && std::abs(v) <= size * aspect;
            }
            case ShapeKind::triangle: {
                std::array<float, 3> vy{}, vx{};
                for (int k = 0; k < 3; ++k) {
                    const float a = angle + static_cast<float>(k) * 2.0943951f;
                    vy[k] = cy + size * std::sin(a);
                    vx[k] = cx + size * std::cos(a);
                }
                bool pos = false, neg = false;
                for (int k = 0; k < 3; ++k) {
                    const int n = (k + 1) % 3;
                    const float cross = (vx[n] - vx[k]) * (y - vy[k]) - (vy[n] - vy[k]) * (x - vx[k]);
                    pos |= cross > 0;
                    neg |= cross < 0;
                }
                return !(pos && neg);
            }
        }
        return false;
    }
};

// Low-frequency value noise plus fine grain, per channel, around `base`.
inline Tensor3 textured_background(int h, int w, std::array<float, 3> base, float amplitude, float grain, Rng& rng) {
    Tensor3 img(3, h, w);
    constexpr int kCell = 16;
    const int gh = h / kCell + 2, gw = w / kCell + 2;
    for (int c = 0; c < 3; ++c) {
        std::vector<float> grid(static_cast<std::size_t>(gh) * gw);
        for (float& g : grid) g = rng.uniform(-1.0f, 1.0f);
        for (int y = 0; y < h; ++y) {
            const float gy = static_cast<float>(y) / kCell;
            const int y0 = static_cast<int>(gy);
            const float fy = gy - y0;
            for (int x = 0; x < w; ++x) {
                const float gx = static_cast<float>(x) / kCell;
                const int x0 = static_cast<int>(gx);
                const float fx = gx - x0;
                auto g = [&](int yy, int xx) { return grid[static_cast<std::size_t>(yy) * gw + xx]; };
                const float sy = fy * fy * (3 - 2 * fy), sx = fx * fx * (3 - 2 * fx);
                const float top = g(y0, x0) + sx * (g(y0, x0 + 1) - g(y0, x0));
                const float bot = g(y0 + 1, x0) + sx * (g(y0 + 1, x0 + 1) - g(y0 + 1, x0));
                img.at(c, y, x) = base[c] + amplitude * (top + sy * (bot - top)) + grain * rng.uniform(-1.0f, 1.0f);
            }
        }
    }
    return img;
}

inline void clamp01(Tensor3& t) {
    for (float& v : t.data) v = std::clamp(v, 0.0f, 1.0f);
}

inline void paint(Tensor3& img, const Shape& s, float grain, Rng& rng) {
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (s.contains(static_cast<float>(y), static_cast<float>(x)))
                for (int c = 0; c < 3; ++c) img.at(c, y, x) = s.color[c] + grain * rng.uniform(-1.0f, 1.0f);
}

// Pixels inside `s` with a 4-neighbour (within the frame) outside it.
inline BinaryMap shape_boundary(const Shape& s, int h, int w) {
    BinaryMap inside(h, w), b(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) inside.at(y, x) = s.contains(static_cast<float>(y), static_cast<float>(x)) ? 1 : 0;
    static constexpr int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!inside.at(y, x)) continue;
            for (int k = 0; k < 4; ++k) {
                const int ny = y + dy[k], nx = x + dx[k];
                if (inside.in_bounds(ny, nx) && !inside.at(ny, nx)) {
                    b.at(y, x) = 1;
                    break;
                }
            }
        }
    return b;
}

struct LabeledImage {
    Tensor3 image;
    int label = 0;
};

// Pretraining set: one centered shape per image, class = shape kind.
inline std::vector<LabeledImage> make_shape_classes(int per_class, int size, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledImage> out;
    for (int i = 0; i < per_class; ++i) {
        for (int k = 0; k < num_classes; ++k) {
            std::array<float, 3> bg{rng.uniform(0.2f, 0.8f), rng.uniform(0.2f, 0.8f), rng.uniform(0.2f, 0.8f)};
            Tensor3 img = textured_background(size, size, bg, 0.12f, 0.04f, rng);
            Shape s;
            s.kind = static_cast<ShapeKind>(k % 3);
            s.size = rng.uniform(0.2f, 0.38f) * static_cast<float>(size);
            s.cy = static_cast<float>(size) * rng.uniform(0.4f, 0.6f);
            s.cx = static_cast<float>(size) * rng.uniform(0.4f, 0.6f);
            s.angle = rng.uniform(0.0f, 6.2831853f);
            s.aspect = rng.uniform(0.6f, 1.0f);
            for (int c = 0; c < 3; ++c) {
                const float d = rng.uniform(0.3f, 0.5f);
                s.color[c] = bg[c] > 0.5f ? bg[c] - d : bg[c] + d;
            }
            paint(img, s, 0.03f, rng);
            clamp01(img);
            out.push_back({std::move(img), k});
        }
    }
    return out;
}

struct CorpusImage {
    Tensor3 image;
    std::vector<BinaryMap> annotations;
};

struct CorpusParams {
    int height = 120;
    int width = 160;
    int annotators = 5;
    int min_shapes = 2;
    int max_shapes = 3;
    int clutter = 8;  // small unannotated blobs painted under the shapes
};

// Contour corpus: textured background with a few opaque shapes. Each shape has
// a contrast level; an annotator marks its visible boundary with probability
// that grows with contrast, and the highest-contrast shape is always marked by
// every annotator. Texture edges and clutter blobs are never annotated.
inline CorpusImage make_contour_image(const CorpusParams& p, Rng& rng) {
    std::array<float, 3> bg{rng.uniform(0.35f, 0.65f), rng.uniform(0.35f, 0.65f), rng.uniform(0.35f, 0.65f)};
    CorpusImage out;
    out.image = textured_background(p.height, p.width, bg, 0.10f, 0.03f, rng);

    for (int i = 0; i < p.clutter; ++i) {
        Shape s;
        s.kind = static_cast<ShapeKind>(rng.below(3));
        s.size = rng.uniform(1.5f, 4.0f);
        s.cy = rng.uniform(0.0f, static_cast<float>(p.height));
        s.cx = rng.uniform(0.0f, static_cast<float>(p.width));
        s.angle = rng.uniform(0.0f, 6.2831853f);
        s.aspect = rng.uniform(0.5f, 1.0f);
        const float d = (rng.bernoulli(0.5f) ? 1.0f : -1.0f) * rng.uniform(0.12f, 0.3f);
        for (int c = 0; c < 3; ++c) s.color[c] = std::clamp(bg[c] + d, 0.0f, 1.0f);
        paint(out.image, s, 0.02f, rng);
    }

    const int n = p.min_shapes + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.max_shapes - p.min_shapes + 1)));
    std::vector<Shape> shapes;
    std::vector<float> contrast;
    const float dim = static_cast<float>(std::min(p.height, p.width));
    for (int i = 0; i < n; ++i) {
        Shape s;
        s.kind = static_cast<ShapeKind>(rng.below(3));
        s.size = rng.uniform(0.12f, 0.28f) * dim;
        s.cy = rng.uniform(0.2f, 0.8f) * static_cast<float>(p.height);
        s.cx = rng.uniform(0.2f, 0.8f) * static_cast<float>(p.width);
        s.angle = rng.uniform(0.0f, 6.2831853f);
        s.aspect = rng.uniform(0.5f, 1.0f);
        const float level = i == 0 ? 1.0f : rng.uniform(0.35f, 1.0f);
        const float sign = rng.bernoulli(0.5f) ? 1.0f : -1.0f;
        for (int c = 0; c < 3; ++c) s.color[c] = std::clamp(bg[c] + sign * level * 0.4f + rng.uniform(-0.05f, 0.05f), 0.0f, 1.0f);
        shapes.push_back(s);
        contrast.push_back(level);
    }
    // Paint back to front; later shapes occlude earlier ones.
    for (const auto& s : shapes) paint(out.image, s, 0.02f, rng);
    clamp01(out.image);

    // Visible boundary of each shape: own boundary minus pixels covered by later shapes.
    std::vector<BinaryMap> visible;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        BinaryMap b = shape_boundary(shapes[i], p.height, p.width);
        for (int y = 0; y < p.height; ++y)
            for (int x = 0; x < p.width; ++x) {
                if (!b.at(y, x)) continue;
                for (std::size_t j = i + 1; j < shapes.size(); ++j)
                    if (shapes[j].contains(static_cast<float>(y), static_cast<float>(x))) {
                        b.at(y, x) = 0;
                        break;
                    }
            }
        visible.push_back(std::move(b));
    }
    for (int a = 0; a < p.annotators; ++a) {
        BinaryMap m(p.height, p.width);
        for (std::size_t i = 0; i < shapes.size(); ++i) {
            const float pmark = i == 0 ? 1.0f : std::clamp(contrast[i] * 1.1f - 0.1f, 0.2f, 1.0f);
            if (!rng.bernoulli(pmark)) continue;
            for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] |= visible[i].data[k];
        }
        out.annotations.push_back(std::move(m));
    }
    return out;
}

}  // namespace deepedge::synthetic
