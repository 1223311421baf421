#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vmp/losses.hpp"

namespace vmp {

// One retrieval task: a query embedding, a candidate pool, and the index of
// the single correct candidate within the pool.
struct RetrievalCase {
    std::vector<double> query;
    std::vector<std::vector<double>> pool;
    std::size_t positive = 0;
};

// Rank of the positive candidate (1-based) under cosine similarity.
// Candidates with equal similarity keep pool order, so an earlier tie
// outranks the positive.
std::size_t positive_rank(const RetrievalCase& c);

double recall_at_k(const std::vector<RetrievalCase>& cases, std::size_t k);
double mean_reciprocal_rank(const std::vector<RetrievalCase>& cases);

// Mean Euclidean distance over all unordered pairs within one cluster.
// Clusters with fewer than two points contribute nothing.
double intra_cluster_distance(const std::vector<std::vector<double>>& cluster);

// Euclidean distance between cluster centroids.
double inter_cluster_distance(const std::vector<std::vector<double>>& a,
                              const std::vector<std::vector<double>>& b);

// Labeled-set geometry: intra pools within-group pairs across all
// groups; inter averages centroid distance over group pairs.
struct ClusterDistances {
    double intra = 0.0;
    double inter = 0.0;
};

ClusterDistances cluster_distances(const std::vector<std::vector<double>>& points,
                                   const std::vector<int>& labels);

// Mean silhouette over all points, clusters given as a label per point.
// Singleton clusters score 0, as does a point with a == b == 0.
double silhouette(const std::vector<std::vector<double>>& points,
                  const std::vector<int>& labels);

// Ordering structure of embedding distances across protection levels.
struct LevelPairStat {
    int level_lo = 0;
    int level_hi = 0;
    double mean_distance = 0.0;
    double stddev_distance = 0.0; // population std
    std::size_t pairs = 0;
    std::size_t violations = 0; // d < beta*(hi-lo) - margin
};

struct MonotonicityReport {
    std::vector<LevelPairStat> stats; // sorted by (lo, hi)
    std::size_t total_pairs = 0;
    std::size_t total_violations = 0;
    double violation_rate = 0.0;
    // true when mean distance strictly increases with the level gap
    bool mean_increases_with_gap = false;
};

MonotonicityReport monotonicity_report(const std::vector<EmbeddingRecord>& records,
                                       const LossConfig& cfg);

// Flat "metric<TAB>setting<TAB>value" lines for machine-friendly reports.
struct MetricLine {
    std::string metric;
    std::string setting;
    double value = 0.0;
};

std::string render_metrics(const std::vector<MetricLine>& lines);

} // namespace vmp
