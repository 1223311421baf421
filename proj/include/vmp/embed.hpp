#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vmp/dataset.hpp"
#include "vmp/isa.hpp"
#include "vmp/losses.hpp"

namespace vmp {

// Mean-aggregation embedding model.  One learnable row per
// vocabulary token plus one shared marker vector, stored as a
// single flat parameter block (vocab rows first, marker last).
//
// VM function embedding: mean over instruction summaries, where a
// summary is marker_vector + mean of the instruction's token
// rows -- the same tokens the hierarchical mask lets the marker
// see.  Source embedding: mean of token rows.
//
// The vocabulary covers every corpus token; unseen tokens fall
// back to a class token (<vr>, <vt>, <imm>, <mem>, <label>,
// <labeldef>) or the <oov> bucket.
struct EmbedModel {
    int dim = 0;
    std::vector<std::string> vocab; // sorted
    std::map<std::string, int> index;
    std::vector<double> params; // (vocab.size() + 1) * dim

    int marker_row() const { return static_cast<int>(vocab.size()); }
    const double* row(int r) const { return params.data() + static_cast<std::size_t>(r) * dim; }
    double* row(int r) { return params.data() + static_cast<std::size_t>(r) * dim; }
    int lookup(const std::string& token) const;
};

// Token class used for out-of-vocabulary fallback.
std::string token_class(const std::string& token);

EmbedModel build_model(const Dataset& ds, int dim, std::uint64_t seed, double init_scale);

// A function embedding as a linear form over parameter rows:
// vec = sum_r weight_r * row_r (+ marker_weight * marker).
struct EmbedSpec {
    std::vector<std::pair<int, double>> row_weights; // sorted by row
    double marker_weight = 0.0;
};

EmbedSpec embed_spec_vm(const EmbedModel& m, const VmProgram& p);
EmbedSpec embed_spec_source(const EmbedModel& m, const std::string& source_text);
std::vector<double> apply_spec(const EmbedModel& m, const EmbedSpec& spec);

// level == -1 embeds `text` as source; otherwise `text` is parsed
// as a VM program.  Empty inputs are errors.
EmbeddingRecord embed_function(const EmbedModel& m, const std::string& function_id, int level,
                               const std::string& text);

// Mean next-token cross-entropy of a bigram softmax head that
// shares the token table (logit of v given context c is
// row_v . row_c, first token predicted from <bos>).  A stand-in
// for a full language model: cheap, deterministic, and enough to
// exercise the composite loss.
double lm_surrogate(const EmbedModel& m, const std::vector<std::string>& tokens);

// Token stream used for the surrogate: regular VM tokens for
// protected levels, source tokens for level -1.
std::vector<std::string> lm_stream(int level, const std::string& text);

struct TrainRun {
    std::uint64_t seed = 0;
    int dim = 128;
    int epochs_pretrain = 120;
    int epochs_finetune = 20;
    double learning_rate = 0.1;
    double lr_decay = 0.97; // per-epoch multiplier
    int funcs_per_batch = 64;
    int levels_per_function = 0; // 0 = all levels present
    int max_backtracks = 30;     // 0 disables the acceptance check
    double init_scale = 0.5;
};

struct EpochTrace {
    std::string stage; // "pretrain" | "finetune"
    int epoch = 0;
    double lm = 0.0, fcl = 0.0, pcl = 0.0, vmp = 0.0, peo = 0.0;
};

struct TrainResult {
    EmbedModel model;
    std::vector<EpochTrace> trace;
};

// Two stages, always in order: pretrain alternates a VMP-loss
// step and a PEO step per batch; finetune keeps only the VMP
// loss.  Each step backtracks (halving the step size) until the
// batch loss does not increase.  Bit-identical output for
// identical inputs and seed.  Non-finite losses abort.
TrainResult train(const Dataset& ds, const LossConfig& loss_cfg, const TrainRun& run);

// One key=value file covering both the loss knobs and the run
// schedule (seed, dim, epochs_pretrain, epochs_finetune,
// learning_rate, lr_decay, funcs_per_batch, levels_per_function,
// max_backtracks, init_scale).  Unmentioned keys keep defaults.
struct TrainSettings {
    LossConfig loss;
    TrainRun run;
};

TrainSettings parse_train_settings(const std::string& text);
TrainSettings load_train_settings(const std::string& path);

// Versioned text checkpoint: header, vocabulary listing, then one
// row of decimals per vocabulary entry and a final marker row.
// Doubles are printed with 17 significant digits and reload
// bit-exactly.
std::string model_to_text(const EmbedModel& m);
EmbedModel model_from_text(const std::string& text);
void save_model(const EmbedModel& m, const std::string& path);
EmbedModel load_model(const std::string& path);

} // namespace vmp
