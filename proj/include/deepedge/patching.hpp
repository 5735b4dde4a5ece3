#pragma once

// Mirror-padded multi-scale patches around a candidate point.

#include <string>
#include <vector>

#include "deepedge/canny.hpp"
#include "deepedge/error.hpp"
#include "deepedge/tensor.hpp"

namespace deepedge {

// One crop size, or the whole image.
struct Scale {
    int crop = 0;  // 0 = full image
    bool full() const { return crop == 0; }
    friend bool operator==(const Scale&, const Scale&) = default;
};

struct ScaleConfig {
    std::vector<Scale> scales{{64}, {128}, {196}, {0}};
    int target = 227;

    std::size_t size() const { return scales.size(); }

    void validate() const {
        if (scales.empty()) throw ConfigError("at least one patch scale is required");
        for (const auto& s : scales)
            if (s.crop < 0) throw ConfigError("patch sizes must be positive");
        if (target <= 0) throw ConfigError("patch target size must be positive");
    }
};

inline std::string scale_name(const Scale& s) { return s.full() ? "full" : std::to_string(s.crop); }

/// size x size crop with the candidate at index size/2 (floor); samples off
/// the image are reflected without repeating the border pixel.
inline Tensor3 extract_patch_mirror(const Tensor3& image, Pixel center, int size) {
    if (size <= 0) throw DimensionError("patch size must be positive");
    if (center.row < 0 || center.col < 0 || center.row >= image.height || center.col >= image.width)
        throw DimensionError("patch center (" + std::to_string(center.row) + "," + std::to_string(center.col) +
                             ") is outside the image");
    Tensor3 patch(image.channels, size, size);
    const int half = size / 2;
    std::vector<int> cols(size);
    for (int j = 0; j < size; ++j) cols[j] = reflect_index(center.col - half + j, image.width);
    for (int i = 0; i < size; ++i) {
        const int r = reflect_index(center.row - half + i, image.height);
        for (int c = 0; c < image.channels; ++c) {
            const float* src = image.channel(c) + static_cast<std::size_t>(r) * image.width;
            float* dst = patch.channel(c) + static_cast<std::size_t>(i) * size;
            for (int j = 0; j < size; ++j) dst[j] = src[cols[j]];
        }
    }
    return patch;
}

/// Image grown by `pad` pixels per side with the same reflection as patches.
inline Tensor3 mirror_pad(const Tensor3& image, int pad) {
    if (pad < 0) throw DimensionError("padding must be nonnegative");
    Tensor3 out(image.channels, image.height + 2 * pad, image.width + 2 * pad);
    for (int c = 0; c < image.channels; ++c)
        for (int i = 0; i < out.height; ++i) {
            const int r = reflect_index(i - pad, image.height);
            for (int j = 0; j < out.width; ++j) out.at(c, i, j) = image.at(c, r, reflect_index(j - pad, image.width));
        }
    return out;
}

struct PatchPyramid {
    Pixel candidate;
    std::vector<Tensor3> patches;  // one target x target tensor per scale
};

inline Tensor3 render_scale(const Tensor3& image, Pixel center, const Scale& s, int target) {
    if (s.full()) return bilinear_resize(image, target, target);
    return bilinear_resize(extract_patch_mirror(image, center, s.crop), target, target);
}

inline PatchPyramid build_pyramid(const Tensor3& image, Pixel center, const ScaleConfig& cfg) {
    cfg.validate();
    if (center.row < 0 || center.col < 0 || center.row >= image.height || center.col >= image.width)
        throw DimensionError("pyramid center is outside the image");
    PatchPyramid p{center, {}};
    for (const auto& s : cfg.scales) p.patches.push_back(render_scale(image, center, s, cfg.target));
    return p;
}

}  // namespace deepedge
