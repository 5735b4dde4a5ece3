#include <gtest/gtest.h>

#include "deepedge/pipeline.hpp"
#include "deepedge/synthetic.hpp"
#include "oracles.hpp"

using namespace deepedge;

namespace {

struct Fixture {
    BackboneModel backbone{default_backbone_spec({3, 4, 3, 3, 4}), {}};
    RunConfig cfg;

    Fixture() {
        backbone.weights = init_backbone_weights(backbone.spec, 5);
        cfg.backbone_channels = {3, 4, 3, 3, 4};
        cfg.scales = {{24}, {48}, {0}};
        cfg.counts = {20, 20, 10};
        cfg.train.hidden1 = 12;
        cfg.train.hidden2 = 6;
        cfg.train.epochs = 2;
        cfg.train.mining_epoch = 1;
        cfg.train.batch = 10;
        cfg.eval.thresholds = 5;
    }
};

LabeledCorpus small_corpus(int images, std::uint64_t seed) {
    synthetic::CorpusParams p;
    p.height = 40;
    p.width = 48;
    p.annotators = 3;
    Rng rng(seed);
    std::vector<AnnotatedImage> out;
    for (int i = 0; i < images; ++i) {
        auto ci = synthetic::make_contour_image(p, rng);
        out.push_back({"img" + std::to_string(i), ci.image, ci.annotations});
    }
    return label_corpus(out, CannyParams{}, 1);
}

}  // namespace

TEST(DescriptorSlice, EqualsDirectExtraction) {
    Fixture f;
    DescriptorExtractor full(f.backbone, f.cfg.scale_config(), f.cfg.pooling_config());
    Rng rng(1);
    const Tensor3 img = oracle::random_tensor(3, 30, 36, rng, 0.0f, 1.0f);
    const Pixel p{4, 30};
    const auto d_full = full.exact(img, p);
    const std::vector<std::vector<std::size_t>> subsets{{0}, {2}, {0, 2}, {1, 2}};
    for (const auto& sub : subsets) {
        for (int variant = 0; variant < 3; ++variant) {
            PoolingConfig pc = f.cfg.pooling_config();
            if (variant == 1) pc.layers = {1, 4};
            if (variant == 2) pc.poolings = {Pooling::average, Pooling::center};
            DescriptorExtractor narrow(f.backbone, subset_scales(f.cfg.scale_config(), sub), pc);
            const auto idx = descriptor_slice(f.cfg.pooling_config(), 3, f.backbone.spec.channels(), sub, pc);
            ASSERT_EQ(idx.size(), narrow.length());
            EXPECT_EQ(slice_row(d_full, idx), narrow.exact(img, p)) << "variant " << variant;
        }
    }
}

TEST(DescriptorSlice, IdentityForFullConfig) {
    Fixture f;
    const PoolingConfig pc = f.cfg.pooling_config();
    const auto idx = descriptor_slice(pc, 3, f.backbone.spec.channels(), {0, 1, 2}, pc);
    for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
    EXPECT_EQ(idx.size(), descriptor_length(pc, 3, f.backbone.spec.channels()));
}

TEST(DescriptorSlice, MissingPartsRejected) {
    Fixture f;
    PoolingConfig narrow = f.cfg.pooling_config();
    narrow.poolings = {Pooling::max};
    PoolingConfig wide = f.cfg.pooling_config();
    EXPECT_THROW(descriptor_slice(narrow, 3, f.backbone.spec.channels(), {0}, wide), ConfigError);
    EXPECT_THROW(descriptor_slice(wide, 3, f.backbone.spec.channels(), {3}, wide), ConfigError);
}

TEST(Pipeline, ExtractDescriptorsMatchesExact) {
    Fixture f;
    const LabeledCorpus corpus = small_corpus(2, 3);
    DescriptorExtractor ex(f.backbone, f.cfg.scale_config(), f.cfg.pooling_config());
    std::vector<SampleRef> samples;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < std::min<std::size_t>(3, corpus.labels[i].size()); ++k) samples.push_back({1 - i, corpus.labels[1 - i][k]});
    const DescriptorSet set = extract_descriptors(ex, corpus, samples);
    ASSERT_EQ(set.size(), samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto want = ex.exact(corpus.images[samples[i].image].image, samples[i].label.point);
        EXPECT_TRUE(std::equal(want.begin(), want.end(), set.row(i).begin()));
        EXPECT_EQ(set.binary[i], float(samples[i].label.binary));
        EXPECT_EQ(set.consensus[i], samples[i].label.consensus);
    }
}

TEST(Pipeline, DescribeCandidatesCountsEvaluations) {
    Fixture f;
    const LabeledCorpus corpus = small_corpus(2, 4);
    DescriptorExtractor ex(f.backbone, f.cfg.scale_config(), f.cfg.pooling_config());
    const CandidateDescriptors fast = describe_candidates(ex, corpus, PredictMode::fast);
    EXPECT_EQ(fast.backbone_evaluations, 2 * f.cfg.scales.size());
    const CandidateDescriptors exact = describe_candidates(ex, corpus, PredictMode::exact);
    // The full-image scale is shared across a picture's candidates.
    std::size_t cands = corpus.candidates[0].size() + corpus.candidates[1].size();
    EXPECT_EQ(exact.backbone_evaluations, 2 * cands + 2);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(exact.rows[i].size(), corpus.candidates[i].size());
}

TEST(Pipeline, ScoreCandidatesMatchesPredictEdgeMap) {
    Fixture f;
    const LabeledCorpus corpus = small_corpus(1, 5);
    DescriptorExtractor ex(f.backbone, f.cfg.scale_config(), f.cfg.pooling_config());
    HeadModel m;
    m.classification = init_branch(int(ex.length()), 6, 4, 1);
    m.regression = init_branch(int(ex.length()), 6, 4, 2);
    m.norm.mean.assign(ex.length(), 0.0f);
    m.norm.scale.assign(ex.length(), 1.0f);
    m.fingerprint = "fp";
    const ScoredMaps maps = score_candidates(describe_candidates(ex, corpus, PredictMode::fast), m);
    const EdgePrediction p = predict_edge_map(corpus.images[0].image, ex, m, "fp", CannyParams{}, PredictMode::fast);
    EXPECT_EQ(maps.fused[0], p.fused);
    EXPECT_EQ(maps.classification[0], p.classification);
    EXPECT_EQ(maps.regression[0], p.regression);
}

TEST(Ablation, VariantSchemas) {
    RunConfig cfg;
    auto names = [&](const std::string& axis) {
        std::vector<std::string> n;
        for (const auto& v : ablation_variants(axis, cfg)) n.push_back(v.name);
        return n;
    };
    EXPECT_EQ(names("pooling"), (std::vector<std::string>{"average", "max", "center", "all"}));
    EXPECT_EQ(names("layers"), (std::vector<std::string>{"conv1", "conv2", "conv3", "conv4", "conv5", "all"}));
    EXPECT_EQ(names("scales"),
              (std::vector<std::string>{"64", "128", "196", "full", "64,128", "64,128,196", "64,128,196,full"}));
    EXPECT_EQ(names("branches"), (std::vector<std::string>{"fused"}));
    EXPECT_THROW(ablation_variants("colors", cfg), ConfigError);
}

TEST(Ablation, RowsAndTable) {
    Fixture f;
    const LabeledCorpus train_c = small_corpus(3, 6);
    const LabeledCorpus test_c = small_corpus(2, 7);
    DescriptorExtractor ex(f.backbone, f.cfg.scale_config(), f.cfg.pooling_config());
    const TrainingSplit split = sample_training_sets(train_c.labels, f.cfg.counts, f.cfg.seed);
    const DescriptorSet train = extract_descriptors(ex, train_c, split.train);
    const DescriptorSet hold = extract_descriptors(ex, train_c, split.holdout);
    const CandidateDescriptors test = describe_candidates(ex, test_c, PredictMode::fast);

    const auto rows = run_ablation("branches", f.cfg, f.backbone, train, hold, test);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].name, "classification");
    EXPECT_EQ(rows[1].name, "regression");
    EXPECT_EQ(rows[2].name, "fused");

    const auto pooling_rows = run_ablation("pooling", f.cfg, f.backbone, train, hold, test);
    ASSERT_EQ(pooling_rows.size(), 4u);
    for (const auto& r : pooling_rows) {
        EXPECT_GE(r.report.ap, 0.0);
        EXPECT_LE(r.report.ap, 1.0);
    }

    const auto scale_rows = run_ablation("scales", f.cfg, f.backbone, train, hold, test);
    const std::string table = format_ablation_table("scales", scale_rows);
    EXPECT_EQ(table.substr(0, table.find('\n')), "scales,ods,ois,ap");
    EXPECT_NE(table.find("\n\"24,48,full\","), std::string::npos) << table;
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 1 + static_cast<long>(scale_rows.size()));
}
