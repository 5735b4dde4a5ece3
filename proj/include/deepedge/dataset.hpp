#pragma once

// Corpus ingestion, candidate labeling against multiple annotators, and
// train/holdout sampling.
//
// Corpus layout:
//   root/images/<id>.ppm | <id>.pgm      binary netpbm
//   root/annotations/<id>/<k>.pgm        8-bit, nonzero = boundary, one per annotator

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepedge/canny.hpp"
#include "deepedge/error.hpp"
#include "deepedge/image.hpp"
#include "deepedge/rng.hpp"
#include "deepedge/tensor.hpp"

namespace deepedge {

struct AnnotatedImage {
    std::string id;
    Tensor3 image;
    std::vector<BinaryMap> annotations;
};

struct LabeledCandidate {
    Pixel point;
    std::uint8_t binary = 0;
    float consensus = 0.0f;
    friend bool operator==(const LabeledCandidate&, const LabeledCandidate&) = default;
};

namespace detail {

inline std::vector<std::filesystem::path> sorted_entries(const std::filesystem::path& dir, bool want_dirs) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (want_dirs ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Loads every image under root/images with its annotation maps, sorted by id.
/// Throws MissingArtifactError when an image has no annotations and
/// DimensionError when an annotation's size differs from its image.
inline std::vector<AnnotatedImage> load_corpus(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw MissingArtifactError("corpus root not found", root);
    std::vector<AnnotatedImage> corpus;
    const fs::path images = fs::path(root) / "images";
    if (!fs::is_directory(images)) return corpus;
    for (const auto& path : detail::sorted_entries(images, false)) {
        const auto ext = path.extension().string();
        if (ext != ".ppm" && ext != ".pgm") continue;
        AnnotatedImage a;
        a.id = path.stem().string();
        a.image = read_image(path.string());
        const fs::path adir = fs::path(root) / "annotations" / a.id;
        if (fs::is_directory(adir)) {
            for (const auto& ap : detail::sorted_entries(adir, false)) {
                if (ap.extension() != ".pgm") continue;
                BinaryMap m = read_binary_map(ap.string());
                if (m.height != a.image.height || m.width != a.image.width)
                    throw DimensionError("annotation " + ap.string() + " is " + std::to_string(m.width) + "x" +
                                         std::to_string(m.height) + " but its image is " + std::to_string(a.image.width) +
                                         "x" + std::to_string(a.image.height));
                a.annotations.push_back(std::move(m));
            }
        }
        if (a.annotations.empty()) throw MissingArtifactError("no annotations for image '" + a.id + "'", adir.string());
        corpus.push_back(std::move(a));
    }
    return corpus;
}

/// An annotator agrees with a candidate when it marked any pixel within
/// Chebyshev distance `radius`; consensus is the agreeing fraction.
inline std::vector<LabeledCandidate> label_candidates(const CandidateSet& candidates, const std::vector<BinaryMap>& annotations,
                                                      int radius = 1) {
    if (radius < 0) throw ConfigError("match radius must be nonnegative");
    for (const auto& a : annotations)
        if (a.height != candidates.height || a.width != candidates.width)
            throw DimensionError("annotation size differs from the candidate map");
    std::vector<LabeledCandidate> out;
    out.reserve(candidates.size());
    const float k = static_cast<float>(annotations.size());
    for (const Pixel& p : candidates.points) {
        int agree = 0;
        for (const auto& a : annotations) {
            const int y0 = std::max(0, p.row - radius), y1 = std::min(a.height - 1, p.row + radius);
            const int x0 = std::max(0, p.col - radius), x1 = std::min(a.width - 1, p.col + radius);
            bool hit = false;
            for (int y = y0; y <= y1 && !hit; ++y)
                for (int x = x0; x <= x1 && !hit; ++x) hit = a.at(y, x) != 0;
            agree += hit;
        }
        LabeledCandidate c;
        c.point = p;
        c.consensus = annotations.empty() ? 0.0f : static_cast<float>(agree) / k;
        c.binary = agree > 0;
        out.push_back(c);
    }
    return out;
}

// A labeled candidate together with the corpus image it came from.
struct SampleRef {
    std::size_t image = 0;
    LabeledCandidate label;
    friend bool operator==(const SampleRef&, const SampleRef&) = default;
};

struct SampleCounts {
    std::size_t positives = 4000;
    std::size_t negatives = 4000;
    std::size_t holdout = 2000;
};

struct TrainingSplit {
    std::vector<SampleRef> train;    // positives first, then negatives
    std::vector<SampleRef> holdout;
};

/// Draws P positives and N negatives without replacement, then a holdout of
/// H from what remains. Throws DataError naming the shortfall.
inline TrainingSplit sample_training_sets(const std::vector<std::vector<LabeledCandidate>>& labels, const SampleCounts& counts,
                                          std::uint64_t seed) {
    std::vector<SampleRef> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (const auto& c : labels[i]) (c.binary ? pos : neg).push_back({i, c});
    if (pos.size() < counts.positives || neg.size() < counts.negatives)
        throw DataError("not enough labeled candidates: need " + std::to_string(counts.positives) + " positives and " +
                        std::to_string(counts.negatives) + " negatives, corpus has " + std::to_string(pos.size()) +
                        " positives and " + std::to_string(neg.size()) + " negatives");
    Rng rng(sub_seed(seed, "sampling"));
    rng.shuffle(pos);
    rng.shuffle(neg);
    TrainingSplit s;
    s.train.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(counts.positives));
    s.train.insert(s.train.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(counts.negatives));
    std::vector<SampleRef> rest(pos.begin() + static_cast<std::ptrdiff_t>(counts.positives), pos.end());
    rest.insert(rest.end(), neg.begin() + static_cast<std::ptrdiff_t>(counts.negatives), neg.end());
    if (rest.size() < counts.holdout)
        throw DataError("not enough labeled candidates for a holdout of " + std::to_string(counts.holdout) + ": " +
                        std::to_string(rest.size()) + " remain after training sampling");
    rng.shuffle(rest);
    s.holdout.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(counts.holdout));
    return s;
}

}  // namespace deepedge
