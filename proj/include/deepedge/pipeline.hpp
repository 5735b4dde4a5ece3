#pragma once

// Orchestration shared by the command-line tool and the end-to-end tests:
// corpus labeling, descriptor extraction for sampled candidates, descriptor
// slicing for ablations, and scoring whole test sets.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "deepedge/bench_eval.hpp"
#include "deepedge/canny.hpp"
#include "deepedge/config.hpp"
#include "deepedge/dataset.hpp"
#include "deepedge/descriptor.hpp"
#include "deepedge/heads.hpp"

namespace deepedge {

struct LabeledCorpus {
    std::vector<AnnotatedImage> images;
    std::vector<CandidateSet> candidates;
    std::vector<std::vector<LabeledCandidate>> labels;
};

inline LabeledCorpus label_corpus(std::vector<AnnotatedImage> images, const CannyParams& canny, int match_radius) {
    LabeledCorpus c;
    c.images = std::move(images);
    for (const auto& a : c.images) {
        c.candidates.push_back(canny_detect(a.image, canny));
        c.labels.push_back(label_candidates(c.candidates.back(), a.annotations, match_radius));
    }
    return c;
}

/// Exact descriptors for the given samples, in the order given. Samples of
/// one image are extracted together so the full-image scale runs once.
inline DescriptorSet extract_descriptors(DescriptorExtractor& extractor, const LabeledCorpus& corpus,
                                         const std::vector<SampleRef>& samples) {
    std::map<std::size_t, std::vector<std::size_t>> by_image;
    for (std::size_t i = 0; i < samples.size(); ++i) by_image[samples[i].image].push_back(i);
    std::vector<std::vector<float>> rows(samples.size());
    for (const auto& [img, idx] : by_image) {
        std::vector<Pixel> pts;
        for (std::size_t i : idx) pts.push_back(samples[i].label.point);
        auto ds = extractor.exact_batch(corpus.images[img].image, pts);
        for (std::size_t k = 0; k < idx.size(); ++k) rows[idx[k]] = std::move(ds[k]);
    }
    DescriptorSet set;
    set.dim = extractor.length();
    for (std::size_t i = 0; i < samples.size(); ++i)
        set.push(rows[i], static_cast<float>(samples[i].label.binary), samples[i].label.consensus);
    return set;
}

/// Positions, within a descriptor built from `full_scales` scales and the
/// pooling config `full`, of the entries a narrower configuration produces.
/// `scale_subset` indexes into the full scale list.
inline std::vector<std::size_t> descriptor_slice(const PoolingConfig& full, std::size_t full_scales,
                                                 const std::vector<int>& channels, const std::vector<std::size_t>& scale_subset,
                                                 const PoolingConfig& sub) {
    std::vector<std::size_t> out;
    std::size_t per_scale = 0;
    for (int l : full.layers) per_scale += full.poolings.size() * static_cast<std::size_t>(channels.at(l));
    for (std::size_t s : scale_subset) {
        if (s >= full_scales) throw ConfigError("scale index out of range for the cached descriptors");
        for (int l : sub.layers) {
            const auto lit = std::find(full.layers.begin(), full.layers.end(), l);
            if (lit == full.layers.end()) throw ConfigError("layer missing from the cached descriptors");
            std::size_t layer_off = s * per_scale;
            for (auto it = full.layers.begin(); it != lit; ++it)
                layer_off += full.poolings.size() * static_cast<std::size_t>(channels.at(*it));
            for (Pooling p : sub.poolings) {
                const auto pit = std::find(full.poolings.begin(), full.poolings.end(), p);
                if (pit == full.poolings.end()) throw ConfigError("pooling missing from the cached descriptors");
                const std::size_t base = layer_off + static_cast<std::size_t>(pit - full.poolings.begin()) * channels.at(l);
                for (int c = 0; c < channels.at(l); ++c) out.push_back(base + static_cast<std::size_t>(c));
            }
        }
    }
    return out;
}

inline std::vector<float> slice_row(std::span<const float> row, const std::vector<std::size_t>& idx) {
    std::vector<float> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = row[idx[i]];
    return out;
}

inline DescriptorSet slice_set(const DescriptorSet& set, const std::vector<std::size_t>& idx) {
    DescriptorSet out;
    out.dim = idx.size();
    out.features.reserve(set.size() * idx.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto r = set.row(i);
        for (std::size_t j : idx) out.features.push_back(r[j]);
    }
    out.binary = set.binary;
    out.consensus = set.consensus;
    return out;
}

// Descriptors of every candidate of every test image, computed once.
struct CandidateDescriptors {
    std::vector<CandidateSet> candidates;
    std::vector<std::vector<std::vector<float>>> rows;  // [image][candidate]
    std::vector<std::vector<BinaryMap>> annotations;
    std::size_t backbone_evaluations = 0;
};

inline CandidateDescriptors describe_candidates(DescriptorExtractor& extractor, const LabeledCorpus& corpus, PredictMode mode,
                                                FastInterp interp = FastInterp::nearest) {
    CandidateDescriptors out;
    const std::size_t before = extractor.evaluations();
    for (std::size_t i = 0; i < corpus.images.size(); ++i) {
        const auto& img = corpus.images[i].image;
        const auto& cs = corpus.candidates[i];
        out.candidates.push_back(cs);
        out.annotations.push_back(corpus.images[i].annotations);
        if (mode == PredictMode::exact) {
            out.rows.push_back(extractor.exact_batch(img, cs.points));
        } else {
            std::vector<std::vector<float>> rows;
            if (!cs.empty()) {
                const FullImageTaps full = extractor.precompute(img);
                for (const Pixel& p : cs.points) rows.push_back(extractor.fast(full, p, interp));
            }
            out.rows.push_back(std::move(rows));
        }
    }
    out.backbone_evaluations = extractor.evaluations() - before;
    return out;
}

struct ScoredMaps {
    std::vector<RealMap> fused, classification, regression;
};

/// Scores cached candidate descriptors (optionally sliced) with a head model.
inline ScoredMaps score_candidates(const CandidateDescriptors& cd, const HeadModel& model,
                                   const std::vector<std::size_t>* slice = nullptr) {
    ScoredMaps out;
    for (std::size_t i = 0; i < cd.candidates.size(); ++i) {
        const auto& cs = cd.candidates[i];
        RealMap f(cs.height, cs.width), c(cs.height, cs.width), r(cs.height, cs.width);
        for (std::size_t k = 0; k < cs.points.size(); ++k) {
            const Pixel p = cs.points[k];
            const HeadScores s = slice ? model.score(slice_row(cd.rows[i][k], *slice)) : model.score(cd.rows[i][k]);
            f.at(p.row, p.col) = s.fused;
            c.at(p.row, p.col) = s.classification;
            r.at(p.row, p.col) = s.regression;
        }
        out.fused.push_back(std::move(f));
        out.classification.push_back(std::move(c));
        out.regression.push_back(std::move(r));
    }
    return out;
}

// ---- ablations ------------------------------------------------------------

struct AblationRow {
    std::string name;
    EvalReport report;
};

struct AblationVariant {
    std::string name;
    std::vector<std::size_t> scale_subset;
    PoolingConfig pooling;
};

inline std::vector<std::string> ablation_axes() { return {"scales", "layers", "pooling", "branches"}; }

/// Configurations compared along one axis, each a restriction of `cfg`.
inline std::vector<AblationVariant> ablation_variants(const std::string& axis, const RunConfig& cfg) {
    const PoolingConfig base = cfg.pooling_config();
    std::vector<std::size_t> all_scales(cfg.scales.size());
    for (std::size_t i = 0; i < all_scales.size(); ++i) all_scales[i] = i;
    std::vector<AblationVariant> v;
    if (axis == "scales") {
        for (std::size_t i = 0; i < cfg.scales.size(); ++i) v.push_back({scale_name(cfg.scales[i]), {i}, base});
        // growing prefixes, ending with every scale
        for (std::size_t n = 2; n <= cfg.scales.size(); ++n) {
            std::vector<std::size_t> sub(all_scales.begin(), all_scales.begin() + static_cast<std::ptrdiff_t>(n));
            std::string name;
            for (std::size_t i : sub) name += (name.empty() ? "" : ",") + scale_name(cfg.scales[i]);
            v.push_back({name, sub, base});
        }
    } else if (axis == "layers") {
        for (int l : base.layers) {
            PoolingConfig p = base;
            p.layers = {l};
            v.push_back({"conv" + std::to_string(l + 1), all_scales, p});
        }
        v.push_back({"all", all_scales, base});
    } else if (axis == "pooling") {
        for (Pooling q : base.poolings) {
            PoolingConfig p = base;
            p.poolings = {q};
            v.push_back({pooling_name(q), all_scales, p});
        }
        v.push_back({"all", all_scales, base});
    } else if (axis == "branches") {
        v.push_back({"fused", all_scales, base});
    } else {
        throw ConfigError("unknown ablation axis '" + axis + "' (expected scales, layers, pooling or branches)");
    }
    return v;
}

inline ScaleConfig subset_scales(const ScaleConfig& s, const std::vector<std::size_t>& subset) {
    ScaleConfig out{{}, s.target};
    for (std::size_t i : subset) out.scales.push_back(s.scales.at(i));
    return out;
}

/// Trains one head per variant on sliced descriptors and evaluates it on the
/// cached test descriptors. The branches axis reports the three score maps
/// of the full model.
inline std::vector<AblationRow> run_ablation(const std::string& axis, const RunConfig& cfg, const BackboneModel& backbone,
                                             const DescriptorSet& train, const DescriptorSet& holdout,
                                             const CandidateDescriptors& test, const TrainLogger& log = {}) {
    const auto variants = ablation_variants(axis, cfg);
    const PoolingConfig base = cfg.pooling_config();
    const auto channels = backbone.spec.channels();
    std::vector<AblationRow> rows;
    for (const auto& var : variants) {
        const auto idx = descriptor_slice(base, cfg.scales.size(), channels, var.scale_subset, var.pooling);
        if (log) log("ablation " + axis + ": training '" + var.name + "' (descriptor length " + std::to_string(idx.size()) + ")");
        TrainResult tr = train_branches(slice_set(train, idx), slice_set(holdout, idx), cfg.train_config());
        const ScoredMaps maps = score_candidates(test, tr.model, &idx);
        if (axis == "branches") {
            rows.push_back({"classification", evaluate(maps.classification, test.annotations, cfg.eval)});
            rows.push_back({"regression", evaluate(maps.regression, test.annotations, cfg.eval)});
            rows.push_back({"fused", evaluate(maps.fused, test.annotations, cfg.eval)});
        } else {
            rows.push_back({var.name, evaluate(maps.fused, test.annotations, cfg.eval)});
        }
    }
    return rows;
}

inline std::string format_ablation_table(const std::string& axis, const std::vector<AblationRow>& rows) {
    std::string out = axis + ",ods,ois,ap\n";
    char buf[200];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f\n", r.name.c_str(), r.report.ods, r.report.ois, r.report.ap);
        out += r.name.find(',') == std::string::npos ? std::string(buf)
                                                     : "\"" + r.name + "\"" + std::string(buf).substr(r.name.size());
    }
    return out;
}

}  // namespace deepedge
