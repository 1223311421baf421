#include "vmp/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "vmp/error.hpp"
#include "vmp/mask.hpp"

namespace vmp {

namespace {

constexpr const char* kBos = "<bos>";
constexpr const char* kOov = "<oov>";

const char* kClassTokens[] = {"<vr>", "<vt>", "<imm>", "<mem>", "<label>", "<labeldef>"};

bool all_digits(const std::string& s, std::size_t from) {
    if (from >= s.size()) return false;
    for (std::size_t i = from; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// [0, 1) with platform-stable bits.
double u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1p-53;
}

std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
    return rng() % n;
}

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[draw_below(rng, i)]);
}

std::vector<std::string> vm_regular_tokens(const VmProgram& p) {
    std::vector<std::string> out;
    for (const auto& t : tokenize_vm(p).tokens)
        if (!t.is_marker) out.push_back(t.text);
    return out;
}

} // namespace

std::string token_class(const std::string& token) {
    if (token.rfind("%vr", 0) == 0) return "<vr>";
    if (token.rfind("%vt", 0) == 0) return "<vt>";
    if (!token.empty() && token.front() == '[' && token.back() == ']') return "<mem>";
    if (!token.empty() && token.front() == '@')
        return token.back() == ':' ? "<labeldef>" : "<label>";
    if (all_digits(token, (token[0] == '-' || token[0] == '+') ? 1 : 0)) return "<imm>";
    return kOov;
}

int EmbedModel::lookup(const std::string& token) const {
    if (auto it = index.find(token); it != index.end()) return it->second;
    return index.at(token_class(token));
}

EmbedModel build_model(const Dataset& ds, int dim, std::uint64_t seed, double init_scale) {
    if (dim < 8) throw Error("embedding dimension must be at least 8");
    std::set<std::string> toks;
    toks.insert(kBos);
    toks.insert(kOov);
    for (const char* c : kClassTokens) toks.insert(c);
    std::set<std::string> seen_sources;
    for (const auto& r : ds.records) {
        for (auto& t : vm_regular_tokens(parse_vm(r.normalized_vm_text))) toks.insert(std::move(t));
        if (seen_sources.insert(r.source_text).second)
            for (auto& t : tokenize_source(r.source_text)) toks.insert(std::move(t));
    }
    EmbedModel m;
    m.dim = dim;
    m.vocab.assign(toks.begin(), toks.end());
    for (std::size_t i = 0; i < m.vocab.size(); ++i)
        m.index[m.vocab[i]] = static_cast<int>(i);
    std::mt19937_64 rng(splitmix64(seed));
    m.params.resize((m.vocab.size() + 1) * static_cast<std::size_t>(dim));
    for (auto& p : m.params) p = (2.0 * u01(rng) - 1.0) * init_scale;
    return m;
}

namespace {

EmbedSpec normalize_spec(std::map<int, double>&& weights, double marker_weight) {
    EmbedSpec s;
    s.marker_weight = marker_weight;
    s.row_weights.assign(weights.begin(), weights.end());
    return s;
}

} // namespace

EmbedSpec embed_spec_vm(const EmbedModel& m, const VmProgram& p) {
    TokenizedFunction f = tokenize_vm(p);
    if (f.instr_count == 0) throw Error("cannot embed a VM program with no instructions");
    std::map<int, double> w;
    double inv_t = 1.0 / f.instr_count;
    for (const auto& tok : f.tokens) {
        if (tok.is_marker) continue;
        double share = inv_t / f.tokens_per_instr[static_cast<std::size_t>(tok.instr - 1)];
        w[m.lookup(tok.text)] += share;
    }
    return normalize_spec(std::move(w), 1.0);
}

EmbedSpec embed_spec_source(const EmbedModel& m, const std::string& source_text) {
    auto toks = tokenize_source(source_text);
    if (toks.empty()) throw Error("cannot embed empty source text");
    std::map<int, double> w;
    for (const auto& t : toks) w[m.lookup(t)] += 1.0 / static_cast<double>(toks.size());
    return normalize_spec(std::move(w), 0.0);
}

std::vector<double> apply_spec(const EmbedModel& m, const EmbedSpec& spec) {
    std::vector<double> v(static_cast<std::size_t>(m.dim), 0.0);
    for (const auto& [r, w] : spec.row_weights) {
        const double* row = m.row(r);
        for (int j = 0; j < m.dim; ++j) v[static_cast<std::size_t>(j)] += w * row[j];
    }
    if (spec.marker_weight != 0.0) {
        const double* row = m.row(m.marker_row());
        for (int j = 0; j < m.dim; ++j)
            v[static_cast<std::size_t>(j)] += spec.marker_weight * row[j];
    }
    return v;
}

EmbeddingRecord embed_function(const EmbedModel& m, const std::string& function_id, int level,
                               const std::string& text) {
    EmbedSpec spec = (level == -1) ? embed_spec_source(m, text)
                                   : embed_spec_vm(m, parse_vm(text));
    return {function_id, level, apply_spec(m, spec)};
}

std::vector<std::string> lm_stream(int level, const std::string& text) {
    if (level == -1) return tokenize_source(text);
    return vm_regular_tokens(parse_vm(text));
}

// ------------------------------------------------------------
// LM surrogate over aggregated bigram counts
// ------------------------------------------------------------

namespace {

// context row -> (next row -> count)
using BigramCounts = std::map<int, std::map<int, double>>;

void accumulate_bigrams(const EmbedModel& m, const std::vector<std::string>& tokens,
                        BigramCounts& counts, double& total) {
    int ctx = m.index.at(kBos);
    for (const auto& t : tokens) {
        int next = m.lookup(t);
        counts[ctx][next] += 1.0;
        total += 1.0;
        ctx = next;
    }
}

// NLL summed over counts; optionally accumulates d(NLL)/d(params).
double bigram_nll(const EmbedModel& m, const BigramCounts& counts, std::vector<double>* grad) {
    const std::size_t V = m.vocab.size();
    const int d = m.dim;
    double nll = 0.0;
    std::vector<double> logits(V), p(V);
    for (const auto& [ctx, nexts] : counts) {
        const double* c = m.row(ctx);
        double mx = -1e300;
        for (std::size_t v = 0; v < V; ++v) {
            const double* rv = m.row(static_cast<int>(v));
            double z = 0.0;
            for (int j = 0; j < d; ++j) z += rv[j] * c[j];
            logits[v] = z;
            mx = std::max(mx, z);
        }
        double zsum = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            p[v] = std::exp(logits[v] - mx);
            zsum += p[v];
        }
        double logz = mx + std::log(zsum);
        double n_ctx = 0.0;
        for (const auto& [next, cnt] : nexts) {
            nll += cnt * (logz - logits[static_cast<std::size_t>(next)]);
            n_ctx += cnt;
        }
        if (grad) {
            // g_v = n_ctx * p_v - count_v
            std::vector<double> gz(V);
            for (std::size_t v = 0; v < V; ++v) gz[v] = n_ctx * p[v] / zsum;
            for (const auto& [next, cnt] : nexts) gz[static_cast<std::size_t>(next)] -= cnt;
            double* gc = grad->data() + static_cast<std::size_t>(ctx) * d;
            for (std::size_t v = 0; v < V; ++v) {
                if (gz[v] == 0.0) continue;
                const double* rv = m.row(static_cast<int>(v));
                double* gv = grad->data() + v * static_cast<std::size_t>(d);
                for (int j = 0; j < d; ++j) {
                    gv[j] += gz[v] * c[j];
                    gc[j] += gz[v] * rv[j];
                }
            }
        }
    }
    return nll;
}

} // namespace

double lm_surrogate(const EmbedModel& m, const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw Error("lm_surrogate: empty token stream");
    // softmax over a one-token vocabulary is the constant 1
    if (m.vocab.size() == 1) return 0.0;
    BigramCounts counts;
    double total = 0.0;
    accumulate_bigrams(m, tokens, counts, total);
    return bigram_nll(m, counts, nullptr) / total;
}

// ------------------------------------------------------------
// Trainer
// ------------------------------------------------------------

namespace {

// One (function, opt) group: the unit contrastive losses pair up.
struct TrainGroup {
    std::string key; // function_id + "/" + opt_level
    // level -> static per-record data
    struct View {
        int level;
        EmbedSpec spec;
        BigramCounts bigrams;
        double bigram_total = 0.0;
    };
    std::vector<View> views; // sorted by level
};

struct BatchData {
    std::vector<std::size_t> groups;       // indices into the group list
    std::vector<std::vector<int>> levels;  // chosen level subset per group (indices into views)
};

struct Workspace {
    std::vector<TrainGroup> groups;
    const LossConfig* cfg = nullptr;
    const TrainRun* run = nullptr;
};

std::vector<TrainGroup> prepare_groups(const EmbedModel& m, const Dataset& ds) {
    std::map<std::string, std::map<int, const DatasetRecord*>> by_key;
    for (const auto& r : ds.records)
        by_key[r.function_id + "/" + r.opt_level][r.protection_level] = &r;
    std::vector<TrainGroup> groups;
    for (const auto& [key, levels] : by_key) {
        TrainGroup g;
        g.key = key;
        const DatasetRecord* any = levels.begin()->second;
        TrainGroup::View src;
        src.level = -1;
        src.spec = embed_spec_source(m, any->source_text);
        accumulate_bigrams(m, tokenize_source(any->source_text), src.bigrams, src.bigram_total);
        g.views.push_back(std::move(src));
        for (const auto& [lvl, rec] : levels) {
            TrainGroup::View v;
            v.level = lvl;
            VmProgram p = parse_vm(rec->normalized_vm_text);
            v.spec = embed_spec_vm(m, p);
            accumulate_bigrams(m, vm_regular_tokens(p), v.bigrams, v.bigram_total);
            g.views.push_back(std::move(v));
        }
        groups.push_back(std::move(g));
    }
    return groups;
}

void add_spec_grad(const EmbedModel& m, const EmbedSpec& spec, const std::vector<double>& de,
                   std::vector<double>& grad) {
    for (const auto& [r, w] : spec.row_weights) {
        double* g = grad.data() + static_cast<std::size_t>(r) * m.dim;
        for (int j = 0; j < m.dim; ++j) g[j] += w * de[static_cast<std::size_t>(j)];
    }
    if (spec.marker_weight != 0.0) {
        double* g = grad.data() + static_cast<std::size_t>(m.marker_row()) * m.dim;
        for (int j = 0; j < m.dim; ++j)
            g[j] += spec.marker_weight * de[static_cast<std::size_t>(j)];
    }
}

struct VmpEval {
    double lm = 0.0, fcl = 0.0, pcl = 0.0, value = 0.0;
};

// VMP batch loss; fills `grad` (same shape as params) when given.
VmpEval eval_vmp(const EmbedModel& m, const Workspace& ws, const BatchData& batch,
                 std::vector<double>* grad) {
    const LossConfig& cfg = *ws.cfg;
    BigramCounts counts;
    double total = 0.0;
    std::vector<EmbeddingRecord> recs;
    std::vector<const EmbedSpec*> specs;
    for (std::size_t bi = 0; bi < batch.groups.size(); ++bi) {
        const TrainGroup& g = ws.groups[batch.groups[bi]];
        for (int vi : batch.levels[bi]) {
            const auto& view = g.views[static_cast<std::size_t>(vi)];
            for (const auto& [ctx, nexts] : view.bigrams)
                for (const auto& [next, cnt] : nexts) counts[ctx][next] += cnt;
            total += view.bigram_total;
            recs.push_back({g.key, view.level, apply_spec(m, view.spec)});
            specs.push_back(&view.spec);
        }
    }
    VmpEval ev;
    std::vector<double> lm_grad;
    if (grad) lm_grad.assign(m.params.size(), 0.0);
    ev.lm = bigram_nll(m, counts, grad ? &lm_grad : nullptr) / total;
    if (grad)
        for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += lm_grad[i] / total;
    if (cfg.lambda != 0.0) {
        LossResult fcl = fcl_loss(recs, cfg);
        LossResult pcl = pcl_loss(recs, cfg);
        ev.fcl = fcl.value;
        ev.pcl = pcl.value;
        if (grad)
            for (std::size_t i = 0; i < recs.size(); ++i) {
                std::vector<double> de(static_cast<std::size_t>(m.dim), 0.0);
                for (int j = 0; j < m.dim; ++j)
                    de[static_cast<std::size_t>(j)] =
                        cfg.lambda * (fcl.grads[i][static_cast<std::size_t>(j)] +
                                      pcl.grads[i][static_cast<std::size_t>(j)]);
                add_spec_grad(m, *specs[i], de, *grad);
            }
    }
    ev.value = ev.lm + cfg.lambda * (ev.fcl + ev.pcl);
    return ev;
}

// PEO batch loss (mean over in-batch queries), scaled by alpha.
double eval_peo(const EmbedModel& m, const Workspace& ws, const BatchData& batch,
                int level_s, int level_t, std::vector<double>* grad) {
    const LossConfig& cfg = *ws.cfg;
    struct Entry {
        const EmbedSpec* q_spec;
        const EmbedSpec* t_spec;
        std::vector<double> q, t;
    };
    std::vector<Entry> entries;
    for (std::size_t gi : batch.groups) {
        const TrainGroup& g = ws.groups[gi];
        const EmbedSpec* qs = nullptr;
        const EmbedSpec* ts = nullptr;
        for (const auto& v : g.views) {
            if (v.level == level_s) qs = &v.spec;
            if (v.level == level_t) ts = &v.spec;
        }
        if (!qs || !ts) continue;
        entries.push_back({qs, ts, apply_spec(m, *qs), apply_spec(m, *ts)});
    }
    if (entries.size() < 2) throw Error("peo step needs at least two functions with both levels");
    double sum = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        std::vector<std::vector<double>> cand;
        std::vector<const EmbedSpec*> cand_specs;
        for (std::size_t j = 0; j < entries.size(); ++j)
            if (j != i) {
                cand.push_back(entries[j].t);
                cand_specs.push_back(entries[j].t_spec);
            }
        PeoResult r = peo_loss(entries[i].q, entries[i].t, cand, cfg);
        sum += r.value;
        if (grad) {
            double scale = cfg.alpha / static_cast<double>(entries.size());
            std::vector<double> de(static_cast<std::size_t>(m.dim));
            auto push = [&](const EmbedSpec* spec, const std::vector<double>& gv) {
                for (int j = 0; j < m.dim; ++j)
                    de[static_cast<std::size_t>(j)] = scale * gv[static_cast<std::size_t>(j)];
                add_spec_grad(m, *spec, de, *grad);
            };
            push(entries[i].q_spec, r.grad_query);
            push(entries[i].t_spec, r.grad_positive);
            for (std::size_t c = 0; c < cand.size(); ++c)
                if (!r.grad_candidates[c].empty()) push(cand_specs[c], r.grad_candidates[c]);
        }
    }
    return cfg.alpha * sum / static_cast<double>(entries.size());
}

void check_finite(double v, const std::string& where) {
    if (!std::isfinite(v))
        throw Error("training diverged: non-finite loss in " + where +
                    " (try a lower learning rate)");
}

// One backtracking descent step.  Returns the accepted loss.
template <typename LossFn>
double descend(EmbedModel& m, const std::vector<double>& grad, double base_loss, double lr,
               int max_backtracks, LossFn&& loss_of) {
    if (max_backtracks == 0) {
        for (std::size_t i = 0; i < m.params.size(); ++i) m.params[i] -= lr * grad[i];
        return loss_of();
    }
    std::vector<double> saved = m.params;
    double eta = lr;
    for (int attempt = 0; attempt < max_backtracks; ++attempt) {
        for (std::size_t i = 0; i < m.params.size(); ++i)
            m.params[i] = saved[i] - eta * grad[i];
        double l = loss_of();
        if (l <= base_loss) return l;
        eta *= 0.5;
    }
    m.params = saved; // no acceptable step; stand still
    return base_loss;
}

} // namespace

TrainResult train(const Dataset& ds, const LossConfig& loss_cfg, const TrainRun& run) {
    if (ds.records.empty()) throw Error("train: dataset has no records");
    if (run.funcs_per_batch < 2) throw Error("train: funcs_per_batch must be at least 2");
    if (run.epochs_pretrain < 0 || run.epochs_finetune < 0)
        throw Error("train: epoch counts must be nonnegative");

    TrainResult res;
    res.model = build_model(ds, run.dim, run.seed, run.init_scale);
    EmbedModel& m = res.model;

    Workspace ws;
    ws.groups = prepare_groups(m, ds);
    ws.cfg = &loss_cfg;
    ws.run = &run;
    if (loss_cfg.lambda != 0.0)
        for (const auto& g : ws.groups)
            if (g.views.size() < 2)
                throw Error("train: function " + g.key + " has fewer than two levels");

    std::mt19937_64 rng(splitmix64(run.seed ^ 0xC0FFEEull));
    std::vector<std::size_t> order(ws.groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // VM levels shared by every group, for PEO sampling.
    std::vector<int> vm_levels;
    if (!ws.groups.empty()) {
        std::set<int> shared;
        for (const auto& v : ws.groups[0].views)
            if (v.level >= 0) shared.insert(v.level);
        for (const auto& g : ws.groups) {
            std::set<int> own;
            for (const auto& v : g.views)
                if (v.level >= 0) own.insert(v.level);
            std::set<int> inter;
            for (int l : shared)
                if (own.count(l)) inter.insert(l);
            shared = inter;
        }
        vm_levels.assign(shared.begin(), shared.end());
    }

    auto make_batches = [&](std::vector<BatchData>& out) {
        out.clear();
        seeded_shuffle(order, rng);
        std::size_t per = static_cast<std::size_t>(run.funcs_per_batch);
        for (std::size_t at = 0; at < order.size(); at += per) {
            BatchData b;
            std::size_t end = std::min(order.size(), at + per);
            for (std::size_t i = at; i < end; ++i) b.groups.push_back(order[i]);
            if (b.groups.size() < 2 && !out.empty()) {
                // fold a short tail into the previous batch
                for (std::size_t gi : b.groups) out.back().groups.push_back(gi);
                break;
            }
            out.push_back(std::move(b));
        }
        for (auto& b : out) {
            b.levels.resize(b.groups.size());
            for (std::size_t i = 0; i < b.groups.size(); ++i) {
                const auto& views = ws.groups[b.groups[i]].views;
                std::vector<int> all(views.size());
                for (std::size_t v = 0; v < views.size(); ++v) all[v] = static_cast<int>(v);
                if (run.levels_per_function > 0 &&
                    static_cast<std::size_t>(run.levels_per_function) < all.size()) {
                    seeded_shuffle(all, rng);
                    all.resize(static_cast<std::size_t>(run.levels_per_function));
                    std::sort(all.begin(), all.end());
                }
                b.levels[i] = std::move(all);
            }
        }
    };

    auto run_stage = [&](const std::string& stage, int epochs, bool with_peo) {
        double lr = run.learning_rate;
        std::vector<BatchData> batches;
        for (int ep = 0; ep < epochs; ++ep) {
            make_batches(batches);
            EpochTrace tr;
            tr.stage = stage;
            tr.epoch = ep;
            std::size_t n_vmp = 0, n_peo = 0;
            for (const auto& batch : batches) {
                {
                    std::vector<double> grad(m.params.size(), 0.0);
                    VmpEval ev = eval_vmp(m, ws, batch, &grad);
                    check_finite(ev.value, "vmp step");
                    double accepted = descend(m, grad, ev.value, lr, run.max_backtracks, [&] {
                        return eval_vmp(m, ws, batch, nullptr).value;
                    });
                    check_finite(accepted, "vmp step");
                    VmpEval after = eval_vmp(m, ws, batch, nullptr);
                    tr.lm += after.lm;
                    tr.fcl += after.fcl;
                    tr.pcl += after.pcl;
                    tr.vmp += after.value;
                    ++n_vmp;
                }
                if (with_peo && loss_cfg.alpha != 0.0 && vm_levels.size() >= 2) {
                    std::size_t si = draw_below(rng, vm_levels.size());
                    std::size_t ti = draw_below(rng, vm_levels.size() - 1);
                    if (ti >= si) ++ti;
                    int ls = vm_levels[si], lt = vm_levels[ti];
                    std::vector<double> grad(m.params.size(), 0.0);
                    double v = eval_peo(m, ws, batch, ls, lt, &grad);
                    check_finite(v, "peo step");
                    double accepted = descend(m, grad, v, lr, run.max_backtracks, [&] {
                        return eval_peo(m, ws, batch, ls, lt, nullptr);
                    });
                    check_finite(accepted, "peo step");
                    tr.peo += eval_peo(m, ws, batch, ls, lt, nullptr);
                    ++n_peo;
                }
            }
            if (n_vmp) {
                tr.lm /= static_cast<double>(n_vmp);
                tr.fcl /= static_cast<double>(n_vmp);
                tr.pcl /= static_cast<double>(n_vmp);
                tr.vmp /= static_cast<double>(n_vmp);
            }
            if (n_peo) tr.peo /= static_cast<double>(n_peo);
            res.trace.push_back(tr);
            lr *= run.lr_decay;
        }
    };

    run_stage("pretrain", run.epochs_pretrain, true);
    run_stage("finetune", run.epochs_finetune, false);
    return res;
}

namespace {

std::string trim_copy(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double settings_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0')
        throw Error("config key '" + key + "': bad numeric value '" + v + "'");
    return x;
}

std::uint64_t settings_u64(const std::string& key, const std::string& v) {
    char* end = nullptr;
    unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0')
        throw Error("config key '" + key + "': bad integer value '" + v + "'");
    return x;
}

} // namespace

TrainSettings parse_train_settings(const std::string& text) {
    TrainSettings s;
    std::string loss_lines;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string ln = raw;
        if (auto p = ln.find_first_of("#;"); p != std::string::npos) ln = ln.substr(0, p);
        ln = trim_copy(ln);
        if (ln.empty()) continue;
        auto eq = ln.find('=');
        if (eq == std::string::npos)
            throw Error("config line " + std::to_string(line) + ": expected key=value");
        std::string key = trim_copy(ln.substr(0, eq));
        std::string val = trim_copy(ln.substr(eq + 1));
        TrainRun& r = s.run;
        if (key == "seed") r.seed = settings_u64(key, val);
        else if (key == "dim") r.dim = static_cast<int>(settings_double(key, val));
        else if (key == "epochs_pretrain") r.epochs_pretrain = static_cast<int>(settings_double(key, val));
        else if (key == "epochs_finetune") r.epochs_finetune = static_cast<int>(settings_double(key, val));
        else if (key == "learning_rate") r.learning_rate = settings_double(key, val);
        else if (key == "lr_decay") r.lr_decay = settings_double(key, val);
        else if (key == "funcs_per_batch") r.funcs_per_batch = static_cast<int>(settings_double(key, val));
        else if (key == "levels_per_function") r.levels_per_function = static_cast<int>(settings_double(key, val));
        else if (key == "max_backtracks") r.max_backtracks = static_cast<int>(settings_double(key, val));
        else if (key == "init_scale") r.init_scale = settings_double(key, val);
        else loss_lines += ln + "\n"; // loss key or an error parse_loss_config will report
    }
    s.loss = parse_loss_config(loss_lines);
    return s;
}

TrainSettings load_train_settings(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_train_settings(ss.str());
}

// ------------------------------------------------------------
// Checkpoint I/O
// ------------------------------------------------------------

std::string model_to_text(const EmbedModel& m) {
    std::string out = "vmp-embed-ckpt v1\n";
    out += "dim " + std::to_string(m.dim) + "\n";
    out += "vocab " + std::to_string(m.vocab.size()) + "\n";
    for (const auto& t : m.vocab) out += t + "\n";
    char buf[40];
    std::size_t rows = m.vocab.size() + 1;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = m.params.data() + r * static_cast<std::size_t>(m.dim);
        for (int j = 0; j < m.dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", row[j]);
            out += buf;
            out += (j + 1 == m.dim) ? '\n' : ' ';
        }
    }
    return out;
}

EmbedModel model_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) throw Error(std::string("checkpoint: missing ") + what);
        return line;
    };
    if (next_line("header") != "vmp-embed-ckpt v1")
        throw Error("checkpoint: unrecognized header");
    EmbedModel m;
    {
        std::istringstream h(next_line("dim"));
        std::string word;
        h >> word >> m.dim;
        if (word != "dim" || m.dim < 1) throw Error("checkpoint: bad dim line");
    }
    std::size_t vocab_n = 0;
    {
        std::istringstream h(next_line("vocab"));
        std::string word;
        h >> word >> vocab_n;
        if (word != "vocab") throw Error("checkpoint: bad vocab line");
    }
    for (std::size_t i = 0; i < vocab_n; ++i) m.vocab.push_back(next_line("vocab entry"));
    for (std::size_t i = 0; i < m.vocab.size(); ++i)
        m.index[m.vocab[i]] = static_cast<int>(i);
    m.params.resize((vocab_n + 1) * static_cast<std::size_t>(m.dim));
    for (std::size_t r = 0; r <= vocab_n; ++r) {
        std::istringstream row(next_line("vector row"));
        std::string tok;
        for (int j = 0; j < m.dim; ++j) {
            if (!(row >> tok)) throw Error("checkpoint: short vector row");
            char* end = nullptr;
            double v = std::strtod(tok.c_str(), &end);
            if (*end != '\0') throw Error("checkpoint: bad number '" + tok + "'");
            m.params[r * static_cast<std::size_t>(m.dim) + static_cast<std::size_t>(j)] = v;
        }
    }
    return m;
}

void save_model(const EmbedModel& m, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << model_to_text(m);
    if (!f) throw Error("write failed: " + path);
}

EmbedModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return model_from_text(ss.str());
}

} // namespace vmp
