#pragma once

// Portable tensor container used for backbone weights and head models.
//
//   magic    8 bytes  "DEEPEDGE"
//   version  u32      kTensorFileVersion
//   header   u32 length + UTF-8 bytes (key=value lines describing the payload)
//   count    u32      number of tensors
//   tensors  count x { u32 name length, name bytes, u32 rank, rank x u32 dims,
//                      prod(dims) x f32 }
//
// Every integer and real is little-endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "deepedge/error.hpp"

namespace deepedge {

inline constexpr std::array<char, 8> kTensorFileMagic{'D', 'E', 'E', 'P', 'E', 'D', 'G', 'E'};
inline constexpr std::uint32_t kTensorFileVersion = 1;

class FormatError : public DataError {
public:
    enum class Kind { io, bad_magic, version_mismatch, truncated, shape_mismatch };
    Kind kind;
    FormatError(Kind k, const std::string& what) : DataError(what), kind(k) {}
};

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct TensorFile {
    std::string header;
    std::vector<NamedTensor> tensors;

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

    bool read(void* dst, std::size_t n) {
        if (bytes_.size() - pos_ < n) return false;
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    bool u32(std::uint32_t& v) {
        unsigned char b[4];
        if (!read(b, 4)) return false;
        v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
            (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        return true;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_tensor_file(const TensorFile& file) {
    std::string out(kTensorFileMagic.begin(), kTensorFileMagic.end());
    detail::put_u32(out, kTensorFileVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(file.header.size()));
    out += file.header;
    detail::put_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
        if (t.element_count() != t.data.size())
            throw FormatError(FormatError::Kind::shape_mismatch, "tensor '" + t.name + "' data does not match its dims");
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) detail::put_u32(out, d);
        for (float v : t.data) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

inline TensorFile decode_tensor_file(const std::string& bytes) {
    using K = FormatError::Kind;
    detail::ByteReader in(bytes);
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kTensorFileMagic)
        throw FormatError(K::bad_magic, "not a deepedge tensor file (bad magic)");
    std::uint32_t version = 0;
    if (!in.u32(version)) throw FormatError(K::truncated, "tensor file truncated in version field");
    if (version != kTensorFileVersion)
        throw FormatError(K::version_mismatch, "tensor file version " + std::to_string(version) + " unsupported (expected " +
                                                   std::to_string(kTensorFileVersion) + ")");
    TensorFile file;
    std::uint32_t len = 0;
    if (!in.u32(len) || in.remaining() < len) throw FormatError(K::truncated, "tensor file truncated in header");
    file.header.resize(len);
    in.read(file.header.data(), len);
    std::uint32_t count = 0;
    if (!in.u32(count)) throw FormatError(K::truncated, "tensor file truncated before tensor count");
    for (std::uint32_t n = 0; n < count; ++n) {
        NamedTensor t;
        const std::string where = "tensor #" + std::to_string(n);
        if (!in.u32(len) || in.remaining() < len) throw FormatError(K::truncated, "tensor file truncated in name of " + where);
        t.name.resize(len);
        in.read(t.name.data(), len);
        std::uint32_t rank = 0;
        if (!in.u32(rank)) throw FormatError(K::truncated, "tensor file truncated in layer '" + t.name + "'");
        if (rank > 8) throw FormatError(K::shape_mismatch, "layer '" + t.name + "' has implausible rank " + std::to_string(rank));
        t.dims.resize(rank);
        for (auto& d : t.dims)
            if (!in.u32(d)) throw FormatError(K::truncated, "tensor file truncated in layer '" + t.name + "'");
        const std::size_t n_elem = t.element_count();
        if (in.remaining() / 4 < n_elem) throw FormatError(K::truncated, "tensor file truncated in layer '" + t.name + "'");
        t.data.resize(n_elem);
        for (auto& v : t.data) {
            std::uint32_t bits = 0;
            in.u32(bits);
            v = std::bit_cast<float>(bits);
        }
        file.tensors.push_back(std::move(t));
    }
    return file;
}

inline void write_binary_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError(FormatError::Kind::io, "cannot open '" + path + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError(FormatError::Kind::io, "failed writing '" + path + "'");
}

inline std::string read_binary_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot open '" + path + "'", path);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void save_tensor_file(const std::string& path, const TensorFile& file) {
    write_binary_file(path, encode_tensor_file(file));
}

inline TensorFile load_tensor_file(const std::string& path) { return decode_tensor_file(read_binary_file(path)); }

}  // namespace deepedge
