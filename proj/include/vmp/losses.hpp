#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vmp {

// One embedded view of a function: the same function_id appears
// once per protection level in a batch (-1 = unprotected source).
struct EmbeddingRecord {
    std::string function_id;
    int level = 0;
    std::vector<double> vec;
};

enum class PclVariant {
    AsWritten,  // max(0, d - beta*(t-s) + m): zero iff d <= beta*(t-s) - m
    LowerBound, // max(0, beta*(t-s) + m - d): zero iff d >= beta*(t-s) + m
};

// Defaults are implementation choices; the source publication for
// this construction does not pin them.  These values are calibrated
// against the built-in program generator at desk scale (a few hundred
// functions): the LowerBound hinge props same-function distances a
// margin above the beta*gap - m line the monotonicity report verifies,
// leaving a 2m dead zone that absorbs terminal training jitter, and
// alpha offsets the 1/batch normalization of the PEO step.
struct LossConfig {
    double tau_fcl = 1.0;   // FCL level-gap decay
    double beta = 0.45;     // PCL distance slope per level gap
    double margin_m = 0.05; // PCL margin
    double lambda = 0.3;    // weight of (FCL + PCL) inside the VMP loss
    double tau = 0.07;      // PEO softmax temperature
    double lambda_h = 0.5;  // PEO hard-negative rank weight
    int k_h = 16;           // PEO hard-negative count
    double alpha = 50.0;    // weight of PEO inside the joint loss
    PclVariant pcl_variant = PclVariant::LowerBound;
};

// Flat key=value file ('#'/';' comments, blank lines ok).  Keys
// match the field names; pcl_variant takes "as-written" or
// "lower-bound".  Unknown keys are errors.
LossConfig load_loss_config(const std::string& path);
LossConfig parse_loss_config(const std::string& text);

// exp(-|s - t| / tau_fcl)
double fcl_weight(int level_s, int level_t, double tau_fcl);

// Record indices grouped by function_id, groups and members in
// first-appearance order.
std::vector<std::vector<std::size_t>> group_by_function(
    const std::vector<EmbeddingRecord>& batch);

struct LossResult {
    double value = 0.0;
    // d(loss)/d(record.vec), parallel to the input batch.
    std::vector<std::vector<double>> grads;
};

// Sum over functions and ordered level pairs (s != t) of
// w_{s,t} * ||e^s - e^t||_2.  Subgradient 0 where the distance
// vanishes.
LossResult fcl_loss(const std::vector<EmbeddingRecord>& batch, const LossConfig& cfg);

// Sum over functions and level pairs s < t of the configured hinge.
LossResult pcl_loss(const std::vector<EmbeddingRecord>& batch, const LossConfig& cfg);

// lm_term + lambda * (fcl + pcl)
double vmp_loss(double lm_term, const std::vector<EmbeddingRecord>& batch,
                const LossConfig& cfg);

struct PeoResult {
    double value = 0.0;
    std::vector<double> grad_query;
    std::vector<double> grad_positive;
    // Gradient per candidate, zero for candidates outside the
    // hard-negative set.
    std::vector<std::vector<double>> grad_candidates;
    std::vector<std::size_t> hard_negatives; // candidate indices, rank order
};

// InfoNCE over cosine similarities with rank-weighted hard
// negatives: the K_h candidates most similar to the query form
// the negative set; the i-th gets weight kappa_i = 1 + lambda_h*i
// (rank 1 = most similar).  Ties keep candidate order.  Zero-norm
// vectors are rejected.
PeoResult peo_loss(const std::vector<double>& query, const std::vector<double>& positive,
                   const std::vector<std::vector<double>>& candidates, const LossConfig& cfg);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b);

} // namespace vmp
