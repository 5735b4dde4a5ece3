#include <gtest/gtest.h>

#include <queue>

#include "deepedge/bench_eval.hpp"
#include "oracles.hpp"

using namespace deepedge;

namespace {

std::size_t components8(const BinaryMap& m) {
    BinaryMap seen(m.height, m.width);
    std::size_t n = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x) || seen.at(y, x)) continue;
            ++n;
            std::queue<Pixel> q;
            q.push({y, x});
            seen.at(y, x) = 1;
            while (!q.empty()) {
                const Pixel p = q.front();
                q.pop();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = p.row + dy, xx = p.col + dx;
                        if (yy < 0 || xx < 0 || yy >= m.height || xx >= m.width) continue;
                        if (m.at(yy, xx) && !seen.at(yy, xx)) {
                            seen.at(yy, xx) = 1;
                            q.push({yy, xx});
                        }
                    }
            }
        }
    return n;
}

bool subset(const BinaryMap& a, const BinaryMap& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] && !b.data[i]) return false;
    return true;
}

BinaryMap random_map(int h, int w, int pixels, Rng& rng) {
    BinaryMap m(h, w);
    for (int k = 0; k < pixels; ++k) m.at(int(rng.below(h)), int(rng.below(w))) = 1;
    return m;
}

RealMap as_prob(const BinaryMap& m) {
    RealMap r(m.height, m.width);
    for (std::size_t i = 0; i < m.data.size(); ++i) r.data[i] = m.data[i] ? 1.0f : 0.0f;
    return r;
}

}  // namespace

TEST(Thin, EmptyStaysEmpty) {
    const BinaryMap m(12, 9);
    EXPECT_EQ(thin_edge_map(m), m);
}

TEST(Thin, OnePixelLinesUnchanged) {
    BinaryMap m(20, 20);
    for (int x = 2; x < 18; ++x) m.at(5, x) = 1;
    for (int k = 0; k < 10; ++k) m.at(8 + k, 3 + k) = 1;
    for (int y = 9; y < 19; ++y) m.at(y, 17) = 1;
    EXPECT_EQ(thin_edge_map(m), m);
}

TEST(Thin, ThickBarBecomesOnePixelPath) {
    BinaryMap m(11, 30);
    for (int y = 4; y <= 6; ++y)
        for (int x = 3; x <= 26; ++x) m.at(y, x) = 1;
    const BinaryMap t = thin_edge_map(m);
    EXPECT_TRUE(subset(t, m));
    EXPECT_EQ(components8(t), 1u);
    int first = 99, last = -1;
    for (int x = 0; x < 30; ++x) {
        int n = 0;
        for (int y = 0; y < 11; ++y) n += t.at(y, x);
        EXPECT_LE(n, 1) << "column " << x;
        if (n) {
            first = std::min(first, x);
            last = std::max(last, x);
        }
    }
    for (int x = first; x <= last; ++x) {
        int n = 0;
        for (int y = 0; y < 11; ++y) n += t.at(y, x);
        EXPECT_EQ(n, 1) << "gap at column " << x;
    }
    EXPECT_LE(first, 4);
    EXPECT_GE(last, 25);
}

TEST(Thin, RandomBlobsKeepComponentsAndAreIdempotent) {
    Rng rng(1);
    for (int trial = 0; trial < 40; ++trial) {
        BinaryMap m(16, 16);
        for (int k = 0; k < 4; ++k) {
            const int y = int(rng.below(12)), x = int(rng.below(12)), h = 1 + int(rng.below(4)), w = 1 + int(rng.below(4));
            for (int yy = y; yy < y + h; ++yy)
                for (int xx = x; xx < x + w; ++xx) m.at(yy, xx) = 1;
        }
        const BinaryMap t = thin_edge_map(m);
        EXPECT_TRUE(subset(t, m));
        EXPECT_EQ(components8(t), components8(m));
        EXPECT_EQ(thin_edge_map(t), t);
    }
}

TEST(Match, IdentityAndFarApart) {
    Rng rng(2);
    const BinaryMap g = random_map(12, 12, 15, rng);
    const MatchResult same = match_boundaries(g, g, 1.5);
    EXPECT_EQ(same.true_positives, count_set(g));
    EXPECT_EQ(same.false_positives, 0u);

    BinaryMap a(12, 12), b(12, 12);
    a.at(0, 0) = a.at(0, 1) = a.at(1, 0) = 1;
    b.at(10, 10) = b.at(11, 11) = 1;
    const MatchResult far = match_boundaries(a, b, 3.0);
    EXPECT_EQ(far.true_positives, 0u);
    EXPECT_EQ(far.false_positives, 3u);
}

TEST(Match, OneToOne) {
    BinaryMap pred(5, 5), gt(5, 5);
    pred.at(2, 1) = pred.at(2, 2) = pred.at(2, 3) = 1;
    gt.at(2, 2) = 1;
    const MatchResult r = match_boundaries(pred, gt, 2.0);
    EXPECT_EQ(r.true_positives, 1u);
    EXPECT_EQ(r.false_positives, 2u);
}

TEST(Match, DistanceIsEuclideanAndInclusive) {
    BinaryMap pred(6, 6), gt(6, 6);
    pred.at(0, 0) = 1;
    gt.at(3, 4) = 1;
    EXPECT_EQ(match_boundaries(pred, gt, 5.0).true_positives, 1u);
    EXPECT_EQ(match_boundaries(pred, gt, 4.99).true_positives, 0u);
}

TEST(Match, EqualsExhaustiveSearch) {
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial) {
        const BinaryMap pred = random_map(9, 9, 10, rng), gt = random_map(9, 9, 10, rng);
        const double d = rng.uniform(0.5f, 3.0f);
        const std::size_t want = oracle::exhaustive_matching(oracle::pixels(pred), oracle::pixels(gt), d);
        const MatchResult r = match_boundaries(pred, gt, d);
        EXPECT_EQ(r.true_positives, want);
        EXPECT_EQ(r.true_positives + r.false_positives, count_set(pred));
        EXPECT_EQ(match_boundaries(gt, pred, d).true_positives, want) << "matching is symmetric";
    }
}

TEST(Match, Errors) {
    EXPECT_THROW(match_boundaries(BinaryMap(4, 4), BinaryMap(4, 5), 1.0), DimensionError);
    EXPECT_THROW(match_boundaries(BinaryMap(4, 4), BinaryMap(4, 4), -1.0), ConfigError);
}

TEST(Evaluate, PerfectPrediction) {
    Rng rng(4);
    BinaryMap g(30, 30);
    for (int x = 3; x < 27; ++x) g.at(10, x) = 1;
    for (int y = 12; y < 28; ++y) g.at(y, 20) = 1;
    const EvalReport r = evaluate({as_prob(g)}, {{g}});
    for (const auto& p : r.curve) {
        EXPECT_DOUBLE_EQ(p.precision, 1.0);
        EXPECT_DOUBLE_EQ(p.recall, 1.0);
        EXPECT_DOUBLE_EQ(p.f, 1.0);
    }
    EXPECT_DOUBLE_EQ(r.ods, 1.0);
    EXPECT_DOUBLE_EQ(r.ois, 1.0);
    EXPECT_DOUBLE_EQ(r.ap, 1.0);
}

TEST(Evaluate, AllZeroPrediction) {
    Rng rng(5);
    const EvalReport r = evaluate({RealMap(10, 10), RealMap(10, 10)}, {{random_map(10, 10, 8, rng)}, {random_map(10, 10, 5, rng)}});
    for (const auto& p : r.curve) {
        EXPECT_EQ(p.recall, 0.0);
        EXPECT_EQ(p.tp, 0u);
    }
    EXPECT_EQ(r.ods, 0.0);
    EXPECT_EQ(r.ois, 0.0);
    EXPECT_EQ(r.ap, 0.0);
}

TEST(Evaluate, ThresholdsAreUniformInOpenInterval) {
    const auto t = EvalParams{}.threshold_values();
    ASSERT_EQ(t.size(), 51u);
    EXPECT_DOUBLE_EQ(t.front(), 1.0 / 52.0);
    EXPECT_DOUBLE_EQ(t.back(), 51.0 / 52.0);
    EXPECT_THROW(EvalParams{0}.threshold_values(), ConfigError);
}

TEST(Evaluate, MatchesExhaustiveOracleOnSmallInstances) {
    Rng rng(6);
    for (int trial = 0; trial < 12; ++trial) {
        const oracle::Instance in = oracle::random_instance(rng, 2, 2);
        for (bool thin : {false, true}) {
            EvalParams params;
            params.thresholds = 9;
            params.max_dist_frac = 0.15;
            params.thin = thin;
            const EvalReport r = evaluate(in.preds, in.gts, params);
            const oracle::Scores want =
                oracle::evaluate(in.preds, in.gts, params.thresholds, params.max_dist_frac,
                                 thin ? std::function<BinaryMap(const BinaryMap&)>(thin_edge_map) : nullptr);
            EXPECT_NEAR(r.ods, want.ods, 1e-9) << "trial " << trial;
            EXPECT_NEAR(r.ois, want.ois, 1e-9) << "trial " << trial;
            EXPECT_NEAR(r.ap, want.ap, 1e-9) << "trial " << trial;
        }
    }
}

TEST(Evaluate, CurveProperties) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const oracle::Instance in = oracle::random_instance(rng, 1 + int(rng.below(3)), 1 + int(rng.below(3)), 10, 20, 8);
        EvalParams params;
        params.thresholds = 15;
        params.max_dist_frac = 0.1;
        params.thin = false;
        const EvalReport r = evaluate(in.preds, in.gts, params);
        EXPECT_GE(r.ap, 0.0);
        EXPECT_LE(r.ap, 1.0);
        for (std::size_t k = 1; k < r.curve.size(); ++k) {
            EXPECT_LE(r.curve[k].tp, r.curve[k - 1].tp);
            EXPECT_LT(r.curve[k - 1].threshold, r.curve[k].threshold);
        }
        for (const auto& p : r.curve) {
            EXPECT_NEAR(p.f, f_measure(p.precision, p.recall), 1e-15);
            EXPECT_LE(p.precision, 1.0);
            EXPECT_LE(p.recall, 1.0);
        }
    }
}

// Per-image best thresholds do not always beat a shared one once counts are
// pooled, so this is a rate check rather than an every-instance guarantee.
TEST(Evaluate, OdsRarelyExceedsOis) {
    Rng rng(10);
    int violations = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const oracle::Instance in = oracle::random_instance(rng, 2, 2);
        const EvalReport r = evaluate(in.preds, in.gts);
        violations += r.ods > r.ois + 1e-12;
    }
    EXPECT_LE(violations, 4);
}

// Image a gains precision at its own best threshold and gives up recall, so
// the pooled counts score below the shared threshold.
TEST(Evaluate, PooledCountsCanFavorSharedThreshold) {
    RealMap a(8, 8), b(8, 8);
    BinaryMap ga(8, 8), gb(8, 8);
    for (int x = 0; x < 8; ++x) ga.at(0, x) = gb.at(0, x) = 1;
    for (int x = 0; x < 3; ++x) ga.at(1, x) = 1;
    for (int x = 0; x < 4; ++x) gb.at(1, x) = 1;
    a.at(0, 0) = a.at(0, 1) = 0.9f;
    a.at(0, 2) = 0.3f;
    for (Pixel p : {Pixel{5, 0}, {5, 2}, {5, 4}, {5, 6}, {7, 0}, {7, 2}}) a.at(p.row, p.col) = 0.3f;
    b.at(0, 0) = 0.9f;
    b.at(0, 1) = 0.3f;
    b.at(5, 0) = 0.9f;
    for (Pixel p : {Pixel{5, 2}, {5, 4}, {5, 6}, {7, 0}}) b.at(p.row, p.col) = 0.3f;
    EvalParams params;
    params.thresholds = 3;
    params.thin = false;
    const EvalReport r = evaluate({a, b}, {{ga}, {gb}}, params);
    EXPECT_DOUBLE_EQ(r.ods_threshold, 0.25);
    EXPECT_NEAR(r.ods, 10.0 / 39.0, 1e-12);
    EXPECT_NEAR(r.ois, 8.0 / 32.0, 1e-12);
    const oracle::Scores want = oracle::evaluate({a, b}, {{ga}, {gb}}, 3, params.max_dist_frac, nullptr);
    EXPECT_NEAR(want.ois, r.ois, 1e-12);
}

// An image whose F is the same at every threshold follows the shared one.
TEST(Evaluate, IndifferentImageFollowsSharedThreshold) {
    RealMap a(8, 8), b(8, 8);
    BinaryMap ga(8, 8), gb(8, 8);
    a.at(1, 1) = 0.9f;
    a.at(5, 5) = 0.3f;
    ga.at(1, 1) = 1;
    b.at(3, 3) = 0.3f;  // never matched: F is 0 everywhere
    gb.at(6, 1) = 1;
    EvalParams params;
    params.thresholds = 3;
    const EvalReport r = evaluate({a, b}, {{ga}, {gb}}, params);
    EXPECT_DOUBLE_EQ(r.ods_threshold, 0.5);
    // At 0.5 image b predicts nothing, so OIS counts are tp 1, fp 0, recall 1/2.
    EXPECT_NEAR(r.ois, 2.0 * 1.0 * 0.5 / 1.5, 1e-12);
    EXPECT_GE(r.ois, r.ods);
}

TEST(AveragePrecision, HandBuiltCurve) {
    std::vector<PRPoint> c(3);
    c[0].recall = 0.8, c[0].precision = 0.5;
    c[1].recall = 0.5, c[1].precision = 0.6;
    c[2].recall = 0.2, c[2].precision = 0.4;  // interpolated up to 0.6
    // 0.2*0.6 + 0.3*0.6 + 0.3*(0.6+0.5)/2
    EXPECT_NEAR(average_precision(c), 0.12 + 0.18 + 0.165, 1e-12);
    EXPECT_EQ(average_precision({}), 0.0);
}

TEST(AveragePrecision, InterpolatedPrecisionIsNonincreasing) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<PRPoint> c(10);
        for (auto& p : c) {
            p.recall = rng.uniform();
            p.precision = rng.uniform();
        }
        // Raising any precision can only raise the area.
        const double a = average_precision(c);
        auto bumped = c;
        bumped[rng.below(10)].precision = 1.0;
        EXPECT_GE(average_precision(bumped), a - 1e-12);
        // The envelope dominates the raw curve, so AP is at least the raw trapezoid area.
        std::sort(c.begin(), c.end(), [](const PRPoint& x, const PRPoint& y) { return x.recall < y.recall; });
        double raw = c[0].recall * c[0].precision;
        for (std::size_t i = 1; i < c.size(); ++i) raw += (c[i].recall - c[i - 1].recall) * (c[i].precision + c[i - 1].precision) / 2;
        EXPECT_GE(a, raw - 1e-12);
    }
}

TEST(Evaluate, Errors) {
    EXPECT_THROW(evaluate({}, {}), DataError);
    EXPECT_THROW(evaluate({RealMap(4, 4)}, {{}}), DataError);
    EXPECT_THROW(evaluate({RealMap(4, 4)}, {{BinaryMap(4, 5)}}), DimensionError);
    EXPECT_THROW(evaluate({RealMap(4, 4), RealMap(4, 4)}, {{BinaryMap(4, 4)}}), DataError);
}

TEST(Report, TextAndCsvLayout) {
    Rng rng(9);
    const oracle::Instance in = oracle::random_instance(rng, 2, 2);
    EvalParams params;
    params.thresholds = 4;
    const EvalReport r = evaluate(in.preds, in.gts, params);
    const std::string csv = format_pr_csv(r);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "threshold,tp,fp,fn,precision,recall,f");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
    }
    EXPECT_EQ(rows, 4);
    const std::string text = format_report_text(r);
    EXPECT_EQ(text.rfind("ODS ", 0), 0u);
    EXPECT_NE(text.find("\nOIS "), std::string::npos);
    EXPECT_NE(text.find("\nAP  "), std::string::npos);
}
