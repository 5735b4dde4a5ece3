#pragma once

// Boundary benchmark: binarize a probability map at a sweep of thresholds,
// thin, match to each annotator within a distance tolerance, and summarize
// the precision/recall curve as ODS, OIS and AP.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "deepedge/canny.hpp"
#include "deepedge/error.hpp"
#include "deepedge/image.hpp"

namespace deepedge {

// ---- thinning ---------------------------------------------------------------

namespace detail {

// Neighbours x1..x8 counterclockwise from east: E, NE, N, NW, W, SW, S, SE.
inline constexpr int kRingDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};
inline constexpr int kRingDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};

inline bool thin_deletable(const BinaryMap& m, int y, int x, bool first_pass) {
    bool n[9];
    for (int i = 0; i < 8; ++i) {
        const int yy = y + kRingDy[i], xx = x + kRingDx[i];
        n[i] = m.in_bounds(yy, xx) && m.at(yy, xx);
    }
    n[8] = n[0];
    int crossings = 0;
    for (int i = 0; i < 4; ++i)
        if (!n[2 * i] && (n[2 * i + 1] || n[2 * i + 2])) ++crossings;
    if (crossings != 1) return false;
    int n1 = 0, n2 = 0;
    for (int k = 0; k < 4; ++k) {
        n1 += n[2 * k] || n[2 * k + 1];
        n2 += n[2 * k + 1] || n[(2 * k + 2) % 8];
    }
    const int lo = std::min(n1, n2);
    if (lo < 2 || lo > 3) return false;
    // x1..x8 are n[0..7]
    if (first_pass) return !((n[1] || n[2] || !n[7]) && n[0]);
    return !((n[5] || n[6] || !n[3]) && n[4]);
}

}  // namespace detail

/// Two-subiteration parallel thinning, repeated until nothing changes.
/// The result is a subset of the input and keeps its 8-connectivity.
inline BinaryMap thin_edge_map(const BinaryMap& input) {
    BinaryMap m = input;
    std::vector<Pixel> on;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            std::uint8_t& v = m.at(y, x);
            v = v ? 1 : 0;
            if (v) on.push_back({y, x});
        }
    std::vector<std::size_t> doomed;
    for (bool changed = true; changed;) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            doomed.clear();
            for (std::size_t i = 0; i < on.size(); ++i)
                if (detail::thin_deletable(m, on[i].row, on[i].col, pass == 0)) doomed.push_back(i);
            if (doomed.empty()) continue;
            changed = true;
            for (std::size_t i : doomed) m.at(on[i].row, on[i].col) = 0;
            std::erase_if(on, [&m](const Pixel& p) { return !m.at(p.row, p.col); });
        }
    }
    return m;
}

// ---- matching ---------------------------------------------------------------

struct MatchResult {
    std::size_t true_positives = 0;   // matched prediction pixels
    std::size_t false_positives = 0;  // unmatched prediction pixels
    std::size_t matched_gt = 0;       // equals true_positives for a single gt map
};

namespace detail {

// Maximum bipartite matching (Hopcroft-Karp). adj[u] lists right vertices.
class BipartiteMatcher {
public:
    BipartiteMatcher(std::size_t left, std::size_t right) : adj_(left), match_l_(left, -1), match_r_(right, -1) {}

    void add_edge(std::size_t u, std::size_t v) { adj_[u].push_back(static_cast<int>(v)); }

    std::size_t solve() {
        std::size_t total = 0;
        while (bfs())
            for (std::size_t u = 0; u < adj_.size(); ++u)
                if (match_l_[u] < 0 && dfs(static_cast<int>(u))) ++total;
        return total;
    }

private:
    static constexpr int kInf = std::numeric_limits<int>::max();

    bool bfs() {
        std::queue<int> q;
        dist_.assign(adj_.size(), kInf);
        for (std::size_t u = 0; u < adj_.size(); ++u)
            if (match_l_[u] < 0) {
                dist_[u] = 0;
                q.push(static_cast<int>(u));
            }
        bool found = false;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : adj_[u]) {
                const int w = match_r_[v];
                if (w < 0) {
                    found = true;
                } else if (dist_[w] == kInf) {
                    dist_[w] = dist_[u] + 1;
                    q.push(w);
                }
            }
        }
        return found;
    }

    bool dfs(int u) {
        for (int v : adj_[u]) {
            const int w = match_r_[v];
            if (w < 0 || (dist_[w] == dist_[u] + 1 && dfs(w))) {
                match_l_[u] = v;
                match_r_[v] = u;
                return true;
            }
        }
        dist_[u] = kInf;
        return false;
    }

    std::vector<std::vector<int>> adj_;
    std::vector<int> match_l_, match_r_, dist_;
};

inline std::vector<std::pair<int, int>> disc_offsets(double max_dist) {
    std::vector<std::pair<int, int>> off;
    const int r = static_cast<int>(std::floor(max_dist));
    const double r2 = max_dist * max_dist + 1e-9;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (dy * dy + dx * dx <= r2) off.emplace_back(dy, dx);
    return off;
}

// Vertex numbering of the pixels of several gt maps, treated as disjoint.
struct GtIndex {
    int height = 0, width = 0;
    std::vector<std::vector<int>> ids;  // per map, -1 where unset
    int count = 0;

    explicit GtIndex(const std::vector<const BinaryMap*>& gts) {
        if (!gts.empty()) height = gts[0]->height, width = gts[0]->width;
        for (const BinaryMap* g : gts) {
            std::vector<int> id(g->data.size(), -1);
            for (std::size_t i = 0; i < g->data.size(); ++i)
                if (g->data[i]) id[i] = count++;
            ids.push_back(std::move(id));
        }
    }
};

// Maximum matching of pred pixels against every map of the index jointly.
inline std::size_t match_against(const BinaryMap& pred, const GtIndex& gt, const std::vector<std::pair<int, int>>& offsets) {
    std::vector<Pixel> left;
    for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x)
            if (pred.at(y, x)) left.push_back({y, x});
    if (left.empty() || gt.count == 0) return 0;
    BipartiteMatcher bm(left.size(), static_cast<std::size_t>(gt.count));
    for (std::size_t u = 0; u < left.size(); ++u)
        for (const auto& [dy, dx] : offsets) {
            const int yy = left[u].row + dy, xx = left[u].col + dx;
            if (!pred.in_bounds(yy, xx)) continue;
            const std::size_t j = static_cast<std::size_t>(yy) * pred.width + xx;
            for (const auto& id : gt.ids)
                if (id[j] >= 0) bm.add_edge(u, static_cast<std::size_t>(id[j]));
        }
    return bm.solve();
}

inline std::size_t match_against(const BinaryMap& pred, const std::vector<const BinaryMap*>& gts, double max_dist) {
    return match_against(pred, GtIndex(gts), disc_offsets(max_dist));
}

inline void check_dims(const BinaryMap& a, const BinaryMap& b) {
    if (!a.same_dims(b))
        throw DimensionError("map sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                             std::to_string(b.width) + "x" + std::to_string(b.height));
}

}  // namespace detail

/// Exact maximum one-to-one matching between pred and gt pixels no farther
/// apart than max_dist (Euclidean).
inline MatchResult match_boundaries(const BinaryMap& pred, const BinaryMap& gt, double max_dist) {
    detail::check_dims(pred, gt);
    if (!(max_dist >= 0.0)) throw ConfigError("max_dist must be nonnegative");
    const std::size_t m = detail::match_against(pred, {&gt}, max_dist);
    return {m, count_set(pred) - m, m};
}

// ---- evaluation -------------------------------------------------------------

struct MatchCounts {
    std::size_t tp = 0;          // prediction pixels matched to some annotator
    std::size_t fp = 0;          // prediction pixels matched to none
    std::size_t gt_matched = 0;  // summed over annotators
    std::size_t gt_total = 0;

    std::size_t fn() const { return gt_total - gt_matched; }
    MatchCounts& operator+=(const MatchCounts& o) {
        tp += o.tp;
        fp += o.fp;
        gt_matched += o.gt_matched;
        gt_total += o.gt_total;
        return *this;
    }
};

struct PRPoint {
    double threshold = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f = 0.0;
};

inline double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline PRPoint make_point(double threshold, const MatchCounts& c) {
    PRPoint p;
    p.threshold = threshold;
    p.tp = c.tp;
    p.fp = c.fp;
    p.fn = c.fn();
    p.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    p.recall = c.gt_total > 0 ? static_cast<double>(c.gt_matched) / static_cast<double>(c.gt_total) : 0.0;
    p.f = f_measure(p.precision, p.recall);
    return p;
}

struct EvalParams {
    int thresholds = 51;            // t_k = k / (K + 1), k = 1..K
    double max_dist_frac = 0.0075;  // of the image diagonal
    bool thin = true;

    std::vector<double> threshold_values() const {
        if (thresholds <= 0) throw ConfigError("at least one evaluation threshold is required");
        std::vector<double> t(static_cast<std::size_t>(thresholds));
        for (int k = 0; k < thresholds; ++k) t[k] = static_cast<double>(k + 1) / static_cast<double>(thresholds + 1);
        return t;
    }
};

struct EvalReport {
    std::vector<PRPoint> curve;  // one per threshold, ascending
    double ods = 0.0;
    double ods_threshold = 0.0;
    double ois = 0.0;
    double ap = 0.0;
};

namespace detail {

// Per-image matching state reused across thresholds.
struct ImageGroundTruth {
    std::vector<GtIndex> single;  // one index per annotator
    GtIndex joint;                // all annotators as one disjoint union
    std::size_t total = 0;
    std::vector<std::pair<int, int>> offsets;

    static std::vector<const BinaryMap*> pointers(const std::vector<BinaryMap>& a) {
        std::vector<const BinaryMap*> p;
        for (const auto& m : a) p.push_back(&m);
        return p;
    }

    ImageGroundTruth(const std::vector<BinaryMap>& annotations, double max_dist)
        : joint(pointers(annotations)), offsets(disc_offsets(max_dist)) {
        for (const auto& a : annotations) {
            single.emplace_back(std::vector<const BinaryMap*>{&a});
            total += count_set(a);
        }
    }
};

inline MatchCounts counts_at(const RealMap& prob, const ImageGroundTruth& gt, double threshold, bool thin) {
    BinaryMap pred(prob.height, prob.width);
    for (std::size_t i = 0; i < prob.data.size(); ++i) pred.data[i] = prob.data[i] >= threshold;
    if (thin) pred = thin_edge_map(pred);
    MatchCounts c;
    c.gt_total = gt.total;
    for (const auto& g : gt.single) c.gt_matched += match_against(pred, g, gt.offsets);
    c.tp = match_against(pred, gt.joint, gt.offsets);
    c.fp = count_set(pred) - c.tp;
    return c;
}

inline double max_dist_for(const RealMap& prob, const EvalParams& params) {
    return params.max_dist_frac * std::hypot(static_cast<double>(prob.height), static_cast<double>(prob.width));
}

inline void check_image(const RealMap& prob, const std::vector<BinaryMap>& annotations) {
    if (annotations.empty()) throw DataError("evaluation needs at least one annotation per image");
    for (const auto& a : annotations)
        if (a.height != prob.height || a.width != prob.width)
            throw DimensionError("annotation size differs from the prediction map");
}

}  // namespace detail

/// Counts for one image at one threshold. Precision matches the thinned
/// prediction against all annotators jointly; recall matches it against each
/// annotator separately.
inline MatchCounts image_counts(const RealMap& prob, const std::vector<BinaryMap>& annotations, double threshold,
                                const EvalParams& params) {
    detail::check_image(prob, annotations);
    const detail::ImageGroundTruth gt(annotations, detail::max_dist_for(prob, params));
    return detail::counts_at(prob, gt, threshold, params.thin);
}

/// Area under the recall-sorted curve with interpolated precision (running
/// max from high recall), by trapezoids; the lowest-recall point's precision
/// is extended back to recall 0.
inline double average_precision(const std::vector<PRPoint>& curve) {
    if (curve.empty()) return 0.0;
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : curve) pts.emplace_back(p.recall, p.precision);
    std::sort(pts.begin(), pts.end());
    for (std::size_t i = pts.size() - 1; i-- > 0;) pts[i].second = std::max(pts[i].second, pts[i + 1].second);
    double area = pts.front().first * pts.front().second;
    for (std::size_t i = 1; i < pts.size(); ++i)
        area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
    return std::clamp(area, 0.0, 1.0);
}

inline EvalReport evaluate(const std::vector<RealMap>& predictions, const std::vector<std::vector<BinaryMap>>& annotations,
                           const EvalParams& params = {}) {
    if (predictions.size() != annotations.size())
        throw DataError("evaluation needs one prediction per annotated image (" + std::to_string(predictions.size()) + " vs " +
                        std::to_string(annotations.size()) + ")");
    if (predictions.empty()) throw DataError("evaluation needs at least one image");
    const auto ts = params.threshold_values();
    std::vector<MatchCounts> total(ts.size());
    std::vector<std::vector<MatchCounts>> per_image(predictions.size());
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        detail::check_image(predictions[i], annotations[i]);
        const detail::ImageGroundTruth gt(annotations[i], detail::max_dist_for(predictions[i], params));
        for (std::size_t k = 0; k < ts.size(); ++k) {
            per_image[i].push_back(detail::counts_at(predictions[i], gt, ts[k], params.thin));
            total[k] += per_image[i].back();
        }
    }
    EvalReport r;
    std::size_t ods_k = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        r.curve.push_back(make_point(ts[k], total[k]));
        if (r.curve.back().f > r.ods) {
            r.ods = r.curve.back().f;
            r.ods_threshold = ts[k];
            ods_k = k;
        }
    }
    // Each image takes its best threshold. Where several thresholds tie, the
    // one nearest the dataset-wide threshold wins, so an image departs from
    // the shared choice only when it strictly gains.
    MatchCounts best_sum;
    for (const auto& counts : per_image) {
        std::size_t best = 0;
        double best_f = -1.0;
        for (std::size_t k = 0; k < ts.size(); ++k) {
            const double f = make_point(ts[k], counts[k]).f;
            const auto gap = [ods_k](std::size_t j) { return j > ods_k ? j - ods_k : ods_k - j; };
            if (f > best_f || (f == best_f && gap(k) < gap(best))) {
                best_f = f;
                best = k;
            }
        }
        best_sum += counts[best];
    }
    r.ois = make_point(0.0, best_sum).f;
    r.ap = average_precision(r.curve);
    return r;
}

inline std::string format_report_text(const EvalReport& r) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "ODS %.6f  (threshold %.6f)\nOIS %.6f\nAP  %.6f\n\n", r.ods, r.ods_threshold, r.ois, r.ap);
    os << line;
    std::snprintf(line, sizeof line, "%-10s %10s %10s %10s %10s %10s %10s\n", "threshold", "tp", "fp", "fn", "precision",
                  "recall", "f");
    os << line;
    for (const auto& p : r.curve) {
        std::snprintf(line, sizeof line, "%-10.6f %10zu %10zu %10zu %10.6f %10.6f %10.6f\n", p.threshold, p.tp, p.fp, p.fn,
                      p.precision, p.recall, p.f);
        os << line;
    }
    return os.str();
}

inline std::string format_pr_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "threshold,tp,fp,fn,precision,recall,f\n";
    char line[160];
    for (const auto& p : r.curve) {
        std::snprintf(line, sizeof line, "%.6f,%zu,%zu,%zu,%.9f,%.9f,%.9f\n", p.threshold, p.tp, p.fp, p.fn, p.precision,
                      p.recall, p.f);
        os << line;
    }
    return os.str();
}

}  // namespace deepedge
