#include "vmp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "vmp/error.hpp"

namespace vmp {

std::size_t positive_rank(const RetrievalCase& c) {
    if (c.pool.empty()) throw Error("retrieval case has an empty pool");
    if (c.positive >= c.pool.size()) throw Error("positive index outside the pool");
    double sp = cosine_similarity(c.query, c.pool[c.positive]);
    std::size_t rank = 1;
    for (std::size_t i = 0; i < c.pool.size(); ++i) {
        if (i == c.positive) continue;
        double s = cosine_similarity(c.query, c.pool[i]);
        if (s > sp || (s == sp && i < c.positive)) ++rank;
    }
    return rank;
}

double recall_at_k(const std::vector<RetrievalCase>& cases, std::size_t k) {
    if (cases.empty()) throw Error("recall over no retrieval cases");
    if (k == 0) throw Error("recall needs k >= 1");
    std::size_t hit = 0;
    for (const auto& c : cases)
        if (positive_rank(c) <= k) ++hit;
    return static_cast<double>(hit) / static_cast<double>(cases.size());
}

double mean_reciprocal_rank(const std::vector<RetrievalCase>& cases) {
    if (cases.empty()) throw Error("mrr over no retrieval cases");
    double sum = 0.0;
    for (const auto& c : cases) sum += 1.0 / static_cast<double>(positive_rank(c));
    return sum / static_cast<double>(cases.size());
}

double intra_cluster_distance(const std::vector<std::vector<double>>& cluster) {
    if (cluster.size() < 2) return 0.0;
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < cluster.size(); ++i)
        for (std::size_t j = i + 1; j < cluster.size(); ++j) {
            sum += euclidean_distance(cluster[i], cluster[j]);
            ++n;
        }
    return sum / static_cast<double>(n);
}

namespace {

std::vector<double> centroid(const std::vector<std::vector<double>>& cluster) {
    if (cluster.empty()) throw Error("centroid of an empty cluster");
    std::vector<double> c(cluster[0].size(), 0.0);
    for (const auto& p : cluster)
        for (std::size_t j = 0; j < c.size(); ++j) c[j] += p[j];
    for (auto& v : c) v /= static_cast<double>(cluster.size());
    return c;
}

} // namespace

double inter_cluster_distance(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b) {
    return euclidean_distance(centroid(a), centroid(b));
}

ClusterDistances cluster_distances(const std::vector<std::vector<double>>& points,
                                   const std::vector<int>& labels) {
    if (points.size() != labels.size())
        throw Error("cluster_distances: points and labels disagree");
    std::map<int, std::vector<std::vector<double>>> groups;
    for (std::size_t i = 0; i < points.size(); ++i) groups[labels[i]].push_back(points[i]);
    if (groups.size() < 2) throw Error("cluster_distances needs at least two groups");
    ClusterDistances out;
    double intra_sum = 0.0;
    std::size_t intra_n = 0;
    for (const auto& [lbl, members] : groups) {
        (void)lbl;
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                intra_sum += euclidean_distance(members[i], members[j]);
                ++intra_n;
            }
    }
    if (intra_n) out.intra = intra_sum / static_cast<double>(intra_n);
    std::vector<std::vector<double>> cents;
    for (const auto& [lbl, members] : groups) {
        (void)lbl;
        cents.push_back(centroid(members));
    }
    double inter_sum = 0.0;
    std::size_t inter_n = 0;
    for (std::size_t i = 0; i < cents.size(); ++i)
        for (std::size_t j = i + 1; j < cents.size(); ++j) {
            inter_sum += euclidean_distance(cents[i], cents[j]);
            ++inter_n;
        }
    out.inter = inter_sum / static_cast<double>(inter_n);
    return out;
}

double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& labels) {
    if (points.size() != labels.size()) throw Error("silhouette: points and labels disagree");
    if (points.empty()) throw Error("silhouette over no points");
    std::map<int, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < points.size(); ++i) clusters[labels[i]].push_back(i);
    if (clusters.size() < 2) throw Error("silhouette needs at least two clusters");
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& own = clusters[labels[i]];
        if (own.size() < 2) continue; // singleton scores 0
        double a = 0.0;
        for (std::size_t j : own)
            if (j != i) a += euclidean_distance(points[i], points[j]);
        a /= static_cast<double>(own.size() - 1);
        double b = -1.0;
        for (const auto& [lbl, members] : clusters) {
            if (lbl == labels[i]) continue;
            double d = 0.0;
            for (std::size_t j : members) d += euclidean_distance(points[i], points[j]);
            d /= static_cast<double>(members.size());
            if (b < 0.0 || d < b) b = d;
        }
        double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(points.size());
}

MonotonicityReport monotonicity_report(const std::vector<EmbeddingRecord>& records,
                                       const LossConfig& cfg) {
    struct Acc {
        double sum = 0.0, sumsq = 0.0;
        std::size_t n = 0, viol = 0;
    };
    std::map<std::pair<int, int>, Acc> acc;
    for (const auto& g : group_by_function(records)) {
        for (std::size_t a : g)
            for (std::size_t b : g) {
                const auto& lo = records[a];
                const auto& hi = records[b];
                if (lo.level >= hi.level) continue;
                double d = euclidean_distance(lo.vec, hi.vec);
                double bound = cfg.beta * (hi.level - lo.level) - cfg.margin_m;
                Acc& s = acc[{lo.level, hi.level}];
                s.sum += d;
                s.sumsq += d * d;
                ++s.n;
                if (d < bound) ++s.viol;
            }
    }
    MonotonicityReport rep;
    for (const auto& [key, a] : acc) {
        LevelPairStat s;
        s.level_lo = key.first;
        s.level_hi = key.second;
        s.pairs = a.n;
        s.violations = a.viol;
        s.mean_distance = a.sum / static_cast<double>(a.n);
        double var = a.sumsq / static_cast<double>(a.n) - s.mean_distance * s.mean_distance;
        s.stddev_distance = std::sqrt(std::max(0.0, var));
        rep.stats.push_back(s);
        rep.total_pairs += a.n;
        rep.total_violations += a.viol;
    }
    if (rep.total_pairs)
        rep.violation_rate =
            static_cast<double>(rep.total_violations) / static_cast<double>(rep.total_pairs);
    // mean distance per gap, averaged over level pairs sharing that gap
    std::map<int, std::pair<double, std::size_t>> by_gap;
    for (const auto& s : rep.stats) {
        auto& [sum, n] = by_gap[s.level_hi - s.level_lo];
        sum += s.mean_distance * static_cast<double>(s.pairs);
        n += s.pairs;
    }
    rep.mean_increases_with_gap = by_gap.size() >= 2;
    double prev = -1.0;
    for (const auto& [gap, sn] : by_gap) {
        (void)gap;
        double mean = sn.first / static_cast<double>(sn.second);
        if (mean <= prev) rep.mean_increases_with_gap = false;
        prev = mean;
    }
    return rep;
}

std::string render_metrics(const std::vector<MetricLine>& lines) {
    std::string out;
    char buf[64];
    for (const auto& l : lines) {
        std::snprintf(buf, sizeof buf, "%.6f", l.value);
        out += l.metric + "\t" + l.setting + "\t" + buf + "\n";
    }
    return out;
}

} // namespace vmp
