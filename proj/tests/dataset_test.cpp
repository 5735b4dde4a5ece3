#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "deepedge/dataset.hpp"
#include "oracles.hpp"

using namespace deepedge;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("deepedge_" + name)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void add_image(const fs::path& root, const std::string& id, int h, int w, int annotations, int ann_h = -1) {
    fs::create_directories(root / "images");
    write_image((root / "images" / (id + ".ppm")).string(), Tensor3(3, h, w, 0.5f));
    if (annotations == 0) return;
    fs::create_directories(root / "annotations" / id);
    for (int a = 0; a < annotations; ++a) {
        BinaryMap m(ann_h < 0 ? h : ann_h, w);
        m.at(0, a) = 1;
        write_binary_map((root / "annotations" / id / ("a" + std::to_string(a) + ".pgm")).string(), m);
    }
}

CandidateSet candidates_of(int h, int w, std::vector<Pixel> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return {h, w, std::move(pts)};
}

std::vector<LabeledCandidate> synthetic_labels(std::size_t pos, std::size_t neg, int row) {
    std::vector<LabeledCandidate> out;
    for (std::size_t i = 0; i < pos + neg; ++i) {
        LabeledCandidate c;
        c.point = {row, static_cast<int>(i)};
        c.binary = i < pos;
        c.consensus = i < pos ? 0.5f : 0.0f;
        out.push_back(c);
    }
    return out;
}

}  // namespace

TEST(LoadCorpus, EmptyRootGivesEmptyList) {
    TempDir d("empty_corpus");
    EXPECT_TRUE(load_corpus(d.path().string()).empty());
}

TEST(LoadCorpus, MissingRoot) {
    EXPECT_THROW(load_corpus((fs::temp_directory_path() / "deepedge_no_such_corpus").string()), MissingArtifactError);
}

TEST(LoadCorpus, OneImageTwoAnnotations) {
    TempDir d("two_annotations");
    add_image(d.path(), "img", 6, 9, 2);
    const auto c = load_corpus(d.path().string());
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].id, "img");
    EXPECT_EQ(c[0].image.height, 6);
    EXPECT_EQ(c[0].image.width, 9);
    ASSERT_EQ(c[0].annotations.size(), 2u);
    EXPECT_EQ(c[0].annotations[1].at(0, 1), 1);
    EXPECT_EQ(count_set(c[0].annotations[1]), 1u);
}

TEST(LoadCorpus, LexicographicOrder) {
    TempDir d("ordering");
    for (const char* id : {"b", "c10", "a", "c2"}) add_image(d.path(), id, 4, 4, 1);
    std::vector<std::string> ids;
    for (const auto& a : load_corpus(d.path().string())) ids.push_back(a.id);
    EXPECT_EQ(ids, (std::vector<std::string>{"a", "b", "c10", "c2"}));
}

TEST(LoadCorpus, DimensionMismatchNamesTheFile) {
    TempDir d("dim_mismatch");
    add_image(d.path(), "img", 6, 9, 2, 5);
    try {
        load_corpus(d.path().string());
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("a0.pgm"), std::string::npos) << e.what();
    }
}

TEST(LoadCorpus, MissingAnnotations) {
    TempDir d("missing_annotations");
    add_image(d.path(), "img", 4, 4, 0);
    EXPECT_THROW(load_corpus(d.path().string()), MissingArtifactError);
}

TEST(LoadCorpus, UnreadableFile) {
    TempDir d("unreadable");
    add_image(d.path(), "img", 4, 4, 1);
    std::ofstream(d.path() / "annotations" / "img" / "broken.pgm") << "P5\n4 4\n255\nxy";
    EXPECT_THROW(load_corpus(d.path().string()), DataError);
}

TEST(LabelCandidates, ThreeOfFive) {
    std::vector<BinaryMap> ann(5, BinaryMap(10, 10));
    for (int a = 0; a < 3; ++a) ann[a].at(4, 6) = 1;
    ann[4].at(0, 0) = 1;
    const auto labels = label_candidates(candidates_of(10, 10, {{4, 6}}), ann, 0);
    ASSERT_EQ(labels.size(), 1u);
    EXPECT_FLOAT_EQ(labels[0].consensus, 0.6f);
    EXPECT_EQ(labels[0].binary, 1);
}

TEST(LabelCandidates, FarFromEverything) {
    std::vector<BinaryMap> ann(3, BinaryMap(10, 10));
    for (auto& a : ann) a.at(0, 0) = 1;
    const auto labels = label_candidates(candidates_of(10, 10, {{8, 8}}), ann);
    EXPECT_EQ(labels[0].consensus, 0.0f);
    EXPECT_EQ(labels[0].binary, 0);
}

TEST(LabelCandidates, RadiusIsChebyshev) {
    std::vector<BinaryMap> ann(1, BinaryMap(10, 10));
    ann[0].at(5, 5) = 1;
    const auto l = label_candidates(candidates_of(10, 10, {{4, 4}, {3, 5}, {6, 7}}), ann, 1);
    EXPECT_EQ(l[0].binary, 0);  // (3,5) is two rows away
    EXPECT_EQ(l[1].binary, 1);  // (4,4) is a diagonal neighbor
    EXPECT_EQ(l[2].binary, 0);
    EXPECT_EQ(label_candidates(candidates_of(10, 10, {{6, 7}}), ann, 2)[0].binary, 1);
}

TEST(LabelCandidates, MatchesBruteForceScan) {
    Rng rng(1);
    for (int trial = 0; trial < 30; ++trial) {
        const int h = 5 + int(rng.below(10)), w = 5 + int(rng.below(10)), k = 1 + int(rng.below(6));
        const int radius = int(rng.below(3));
        std::vector<BinaryMap> ann(k, BinaryMap(h, w));
        for (auto& a : ann)
            for (auto& v : a.data) v = rng.bernoulli(0.05f);
        std::vector<Pixel> pts;
        for (int i = 0; i < 15; ++i) pts.push_back({int(rng.below(h)), int(rng.below(w))});
        const CandidateSet cs = candidates_of(h, w, pts);
        const auto labels = label_candidates(cs, ann, radius);
        ASSERT_EQ(labels.size(), cs.size());
        for (std::size_t i = 0; i < cs.size(); ++i) {
            int agree = 0;
            for (const auto& a : ann) {
                bool hit = false;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        if (a.at(y, x) && std::abs(y - cs.points[i].row) <= radius && std::abs(x - cs.points[i].col) <= radius)
                            hit = true;
                agree += hit;
            }
            EXPECT_EQ(labels[i].point, cs.points[i]);
            EXPECT_FLOAT_EQ(labels[i].consensus, float(agree) / float(k));
            EXPECT_EQ(labels[i].binary == 1, labels[i].consensus > 0.0f);
            // Consensus lies on the 1/K grid.
            const float scaled = labels[i].consensus * float(k);
            EXPECT_NEAR(scaled, std::round(scaled), 1e-5);
        }
    }
}

TEST(LabelCandidates, Errors) {
    std::vector<BinaryMap> ann(1, BinaryMap(8, 8));
    EXPECT_THROW(label_candidates(candidates_of(8, 9, {}), ann), DimensionError);
    EXPECT_THROW(label_candidates(candidates_of(8, 8, {}), ann, -1), ConfigError);
}

TEST(Sampling, SingletonSets) {
    const std::vector<std::vector<LabeledCandidate>> labels{synthetic_labels(1, 1, 0)};
    const TrainingSplit s = sample_training_sets(labels, {1, 1, 0}, 5);
    ASSERT_EQ(s.train.size(), 2u);
    EXPECT_EQ(s.train[0].label, labels[0][0]);
    EXPECT_EQ(s.train[1].label, labels[0][1]);
    EXPECT_TRUE(s.holdout.empty());
    EXPECT_EQ(sample_training_sets(labels, {1, 1, 0}, 6).train, s.train);
}

TEST(Sampling, BalancedDisjointAndReproducible) {
    std::vector<std::vector<LabeledCandidate>> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(synthetic_labels(20 + i, 40 - i, i));
    const SampleCounts counts{50, 60, 70};
    const TrainingSplit s = sample_training_sets(labels, counts, 11);
    ASSERT_EQ(s.train.size(), 110u);
    ASSERT_EQ(s.holdout.size(), 70u);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < s.train.size(); ++i) {
        pos += s.train[i].label.binary;
        EXPECT_EQ(s.train[i].label.binary == 1, i < 50) << "positives come first";
    }
    EXPECT_EQ(pos, 50u);
    std::set<std::pair<std::size_t, Pixel>> seen;
    for (const auto& r : s.train) EXPECT_TRUE(seen.insert({r.image, r.label.point}).second);
    for (const auto& r : s.holdout) EXPECT_TRUE(seen.insert({r.image, r.label.point}).second) << "holdout overlaps train";
    for (const auto& r : s.holdout) EXPECT_EQ(labels[r.image][r.label.point.col], r.label);

    const TrainingSplit again = sample_training_sets(labels, counts, 11);
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.holdout, s.holdout);
    EXPECT_NE(sample_training_sets(labels, counts, 12).train, s.train);
}

TEST(Sampling, ShortfallNamesCounts) {
    const std::vector<std::vector<LabeledCandidate>> labels{synthetic_labels(3, 10, 0)};
    try {
        sample_training_sets(labels, {4, 4, 0}, 1);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("3 positives"), std::string::npos) << msg;
        EXPECT_NE(msg.find("10 negatives"), std::string::npos) << msg;
    }
    EXPECT_THROW(sample_training_sets(labels, {3, 10, 1}, 1), DataError);
}
