#pragma once

// 2-D maps and Netpbm (PGM/PPM) reading and writing.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "deepedge/error.hpp"
#include "deepedge/tensor.hpp"

namespace deepedge {

template <typename T>
struct Map2 {
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Map2() = default;
    Map2(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {
        if (h < 0 || w < 0) throw DimensionError("Map2 dimensions must be nonnegative");
    }

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
    bool in_bounds(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }
    bool same_dims(int h, int w) const { return height == h && width == w; }
    template <typename U>
    bool same_dims(const Map2<U>& o) const { return height == o.height && width == o.width; }

    friend bool operator==(const Map2&, const Map2&) = default;
};

using BinaryMap = Map2<std::uint8_t>;  // nonzero = set
using RealMap = Map2<float>;

inline std::size_t count_set(const BinaryMap& m) {
    return static_cast<std::size_t>(std::count_if(m.data.begin(), m.data.end(), [](std::uint8_t v) { return v != 0; }));
}

struct Pnm {
    int channels = 0;  // 1 (P5) or 3 (P6)
    int height = 0;
    int width = 0;
    int maxval = 255;
    std::vector<std::uint16_t> samples;  // interleaved, row-major
};

namespace detail {

inline void skip_pnm_space(const std::string& s, std::size_t& i) {
    while (i < s.size()) {
        if (s[i] == '#') {
            while (i < s.size() && s[i] != '\n') ++i;
        } else if (std::isspace(static_cast<unsigned char>(s[i]))) {
            ++i;
        } else {
            break;
        }
    }
}

inline int read_pnm_int(const std::string& s, std::size_t& i, const std::string& path) {
    skip_pnm_space(s, i);
    if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i])))
        throw DataError("malformed Netpbm header in '" + path + "'");
    long v = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
        v = v * 10 + (s[i] - '0');
        if (v > 1 << 24) throw DataError("implausible Netpbm header value in '" + path + "'");
        ++i;
    }
    return static_cast<int>(v);
}

}  // namespace detail

inline Pnm read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot open image '" + path + "'", path);
    const std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (s.size() < 2 || s[0] != 'P' || (s[1] != '5' && s[1] != '6'))
        throw DataError("unreadable image '" + path + "': only binary PGM (P5) and PPM (P6) are supported");
    Pnm img;
    img.channels = s[1] == '5' ? 1 : 3;
    std::size_t i = 2;
    img.width = detail::read_pnm_int(s, i, path);
    img.height = detail::read_pnm_int(s, i, path);
    img.maxval = detail::read_pnm_int(s, i, path);
    if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535)
        throw DataError("invalid Netpbm header in '" + path + "'");
    ++i;  // single whitespace byte before the raster
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
    const std::size_t bps = img.maxval < 256 ? 1 : 2;
    if (i > s.size() || s.size() - i < n * bps) throw DataError("truncated image raster in '" + path + "'");
    img.samples.resize(n);
    const auto* raw = reinterpret_cast<const unsigned char*>(s.data() + i);
    for (std::size_t k = 0; k < n; ++k)
        img.samples[k] = bps == 1 ? raw[k] : static_cast<std::uint16_t>((raw[2 * k] << 8) | raw[2 * k + 1]);
    return img;
}

inline void write_pnm(const std::string& path, const Pnm& img) {
    std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n" + std::to_string(img.maxval) + "\n";
    const bool wide = img.maxval > 255;
    for (std::uint16_t v : img.samples) {
        if (wide) out.push_back(static_cast<char>(v >> 8));
        out.push_back(static_cast<char>(v & 0xff));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw MissingArtifactError("cannot open '" + path + "' for writing", path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// Image as a C x H x W tensor with samples scaled to [0, 1].
inline Tensor3 pnm_to_tensor(const Pnm& img) {
    Tensor3 t(img.channels, img.height, img.width);
    const float scale = 1.0f / static_cast<float>(img.maxval);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                t.at(c, y, x) = static_cast<float>(img.samples[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c]) * scale;
    return t;
}

inline Tensor3 read_image(const std::string& path) { return pnm_to_tensor(read_pnm(path)); }

// Writes a 1- or 3-channel tensor in [0, 1] as 8-bit PGM/PPM.
inline void write_image(const std::string& path, const Tensor3& t) {
    if (t.channels != 1 && t.channels != 3) throw DimensionError("write_image: need 1 or 3 channels");
    Pnm img{t.channels, t.height, t.width, 255, {}};
    img.samples.resize(t.size());
    for (int y = 0; y < t.height; ++y)
        for (int x = 0; x < t.width; ++x)
            for (int c = 0; c < t.channels; ++c)
                img.samples[(static_cast<std::size_t>(y) * t.width + x) * t.channels + c] =
                    static_cast<std::uint16_t>(std::lround(std::clamp(t.at(c, y, x), 0.0f, 1.0f) * 255.0f));
    write_pnm(path, img);
}

inline BinaryMap read_binary_map(const std::string& path) {
    const Pnm img = read_pnm(path);
    if (img.channels != 1) throw DataError("annotation '" + path + "' must be a grayscale PGM");
    BinaryMap m(img.height, img.width);
    for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] = img.samples[k] != 0 ? 1 : 0;
    return m;
}

inline void write_binary_map(const std::string& path, const BinaryMap& m) {
    Pnm img{1, m.height, m.width, 255, {}};
    img.samples.resize(m.data.size());
    for (std::size_t k = 0; k < m.data.size(); ++k) img.samples[k] = m.data[k] ? 255 : 0;
    write_pnm(path, img);
}

// Probability map as 16-bit PGM; stored value / 65535 is the probability.
inline void write_prob_map(const std::string& path, const RealMap& m) {
    Pnm img{1, m.height, m.width, 65535, {}};
    img.samples.resize(m.data.size());
    for (std::size_t k = 0; k < m.data.size(); ++k)
        img.samples[k] = static_cast<std::uint16_t>(std::lround(std::clamp(m.data[k], 0.0f, 1.0f) * 65535.0f));
    write_pnm(path, img);
}

inline RealMap read_prob_map(const std::string& path) {
    const Pnm img = read_pnm(path);
    if (img.channels != 1) throw DataError("probability map '" + path + "' must be a grayscale PGM");
    RealMap m(img.height, img.width);
    const float scale = 1.0f / static_cast<float>(img.maxval);
    for (std::size_t k = 0; k < m.data.size(); ++k) m.data[k] = static_cast<float>(img.samples[k]) * scale;
    return m;
}

}  // namespace deepedge
