#include "vmp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "vmp/error.hpp"

namespace vmp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    double x = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0')
        throw Error("config key '" + key + "': bad numeric value '" + v + "'");
    return x;
}

void check_dims(const std::vector<EmbeddingRecord>& batch) {
    for (std::size_t i = 1; i < batch.size(); ++i)
        if (batch[i].vec.size() != batch[0].vec.size())
            throw Error("embedding dimension mismatch in batch");
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw Error("cosine undefined for a zero-norm vector");
    double dot = std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    return dot / (na * nb);
}

double euclidean_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw Error("distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

LossConfig parse_loss_config(const std::string& text) {
    LossConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (auto p = s.find_first_of("#;"); p != std::string::npos) s = s.substr(0, p);
        s = trim(s);
        if (s.empty()) continue;
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw Error("config line " + std::to_string(line) + ": expected key=value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key == "tau_fcl") cfg.tau_fcl = parse_double(key, val);
        else if (key == "beta") cfg.beta = parse_double(key, val);
        else if (key == "margin_m") cfg.margin_m = parse_double(key, val);
        else if (key == "lambda") cfg.lambda = parse_double(key, val);
        else if (key == "tau") cfg.tau = parse_double(key, val);
        else if (key == "lambda_h") cfg.lambda_h = parse_double(key, val);
        else if (key == "alpha") cfg.alpha = parse_double(key, val);
        else if (key == "k_h") cfg.k_h = static_cast<int>(parse_double(key, val));
        else if (key == "pcl_variant") {
            if (val == "as-written") cfg.pcl_variant = PclVariant::AsWritten;
            else if (val == "lower-bound") cfg.pcl_variant = PclVariant::LowerBound;
            else throw Error("config key 'pcl_variant': expected as-written or lower-bound");
        } else {
            throw Error("unknown config key '" + key + "'");
        }
    }
    if (cfg.tau_fcl <= 0 || cfg.tau <= 0) throw Error("temperatures must be positive");
    if (cfg.k_h < 1) throw Error("k_h must be at least 1");
    return cfg;
}

LossConfig load_loss_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_loss_config(ss.str());
}

double fcl_weight(int level_s, int level_t, double tau_fcl) {
    return std::exp(-std::abs(level_s - level_t) / tau_fcl);
}

// Groups in first-appearance order so the result is independent
// of container choice.
std::vector<std::vector<std::size_t>> group_by_function(
    const std::vector<EmbeddingRecord>& batch) {
    std::vector<std::vector<std::size_t>> groups;
    std::map<std::string, std::size_t> where;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto it = where.find(batch[i].function_id);
        if (it == where.end()) {
            where[batch[i].function_id] = groups.size();
            groups.push_back({i});
        } else {
            groups[it->second].push_back(i);
        }
    }
    return groups;
}

LossResult fcl_loss(const std::vector<EmbeddingRecord>& batch, const LossConfig& cfg) {
    check_dims(batch);
    LossResult res;
    res.grads.assign(batch.size(), {});
    for (std::size_t i = 0; i < batch.size(); ++i)
        res.grads[i].assign(batch[i].vec.size(), 0.0);
    for (const auto& g : group_by_function(batch)) {
        for (std::size_t a : g) {
            for (std::size_t b : g) {
                if (a == b) continue;
                double w = fcl_weight(batch[a].level, batch[b].level, cfg.tau_fcl);
                double d = euclidean_distance(batch[a].vec, batch[b].vec);
                res.value += w * d;
                if (d > 0.0) {
                    for (std::size_t j = 0; j < batch[a].vec.size(); ++j) {
                        double u = (batch[a].vec[j] - batch[b].vec[j]) / d;
                        res.grads[a][j] += w * u;
                        res.grads[b][j] -= w * u;
                    }
                }
            }
        }
    }
    return res;
}

LossResult pcl_loss(const std::vector<EmbeddingRecord>& batch, const LossConfig& cfg) {
    check_dims(batch);
    LossResult res;
    res.grads.assign(batch.size(), {});
    for (std::size_t i = 0; i < batch.size(); ++i)
        res.grads[i].assign(batch[i].vec.size(), 0.0);
    for (const auto& g : group_by_function(batch)) {
        for (std::size_t a : g) {
            for (std::size_t b : g) {
                if (batch[a].level >= batch[b].level) continue; // ordered pairs s < t
                double gap = static_cast<double>(batch[b].level - batch[a].level);
                double d = euclidean_distance(batch[a].vec, batch[b].vec);
                // Symmetric hinges m on either side of the target line beta*gap.
                // AsWritten caps d from above at beta*gap - m; LowerBound props d
                // up to beta*gap + m, so trained distances settle a full margin
                // above the beta*gap - m line that the monotonicity report checks.
                // sign of d(hinge)/d(d); 0 when the hinge is inactive
                double slope = 0.0;
                if (cfg.pcl_variant == PclVariant::AsWritten) {
                    double h = d - (cfg.beta * gap - cfg.margin_m);
                    if (h > 0.0) {
                        res.value += h;
                        slope = 1.0;
                    }
                } else {
                    double h = cfg.beta * gap + cfg.margin_m - d;
                    if (h > 0.0) {
                        res.value += h;
                        slope = -1.0;
                    }
                }
                if (slope != 0.0 && d > 0.0) {
                    for (std::size_t j = 0; j < batch[a].vec.size(); ++j) {
                        double u = slope * (batch[a].vec[j] - batch[b].vec[j]) / d;
                        res.grads[a][j] += u;
                        res.grads[b][j] -= u;
                    }
                }
            }
        }
    }
    return res;
}

double vmp_loss(double lm_term, const std::vector<EmbeddingRecord>& batch,
                const LossConfig& cfg) {
    if (cfg.lambda == 0.0) return lm_term;
    return lm_term + cfg.lambda * (fcl_loss(batch, cfg).value + pcl_loss(batch, cfg).value);
}

namespace {

// d(cos(q, x))/dx = (q/|q| - cos * x/|x|) / |x|
void add_cos_grad_wrt_second(std::vector<double>& out, const std::vector<double>& q,
                             const std::vector<double>& x, double cos_qx, double scale) {
    double nq = norm(q), nx = norm(x);
    for (std::size_t j = 0; j < x.size(); ++j)
        out[j] += scale * (q[j] / nq - cos_qx * x[j] / nx) / nx;
}

} // namespace

PeoResult peo_loss(const std::vector<double>& query, const std::vector<double>& positive,
                   const std::vector<std::vector<double>>& candidates, const LossConfig& cfg) {
    if (candidates.empty()) throw Error("peo_loss: candidate pool is empty");
    PeoResult res;
    double sp = cosine_similarity(query, positive);
    std::vector<double> sims(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        sims[i] = cosine_similarity(query, candidates[i]);

    // Hard negatives: top K_h by similarity, ties keep pool order.
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    std::size_t kh = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_h), order.size());
    res.hard_negatives.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kh));

    // Stable log-sum-exp over {sp} u {hard negative sims}.
    double mx = sp / cfg.tau;
    for (std::size_t r = 0; r < kh; ++r) mx = std::max(mx, sims[res.hard_negatives[r]] / cfg.tau);
    double zp = std::exp(sp / cfg.tau - mx);
    double z = zp;
    std::vector<double> kappa(kh), zn(kh);
    for (std::size_t r = 0; r < kh; ++r) {
        kappa[r] = 1.0 + cfg.lambda_h * static_cast<double>(r + 1);
        zn[r] = kappa[r] * std::exp(sims[res.hard_negatives[r]] / cfg.tau - mx);
        z += zn[r];
    }
    res.value = -(sp / cfg.tau - mx) + std::log(z);

    // dL/d(sp) = (zp/z - 1)/tau; dL/d(sn_r) = (zn_r/z)/tau
    res.grad_query.assign(query.size(), 0.0);
    res.grad_positive.assign(positive.size(), 0.0);
    res.grad_candidates.assign(candidates.size(), std::vector<double>(query.size(), 0.0));
    double gp = (zp / z - 1.0) / cfg.tau;
    add_cos_grad_wrt_second(res.grad_positive, query, positive, sp, gp);
    add_cos_grad_wrt_second(res.grad_query, positive, query, sp, gp);
    for (std::size_t r = 0; r < kh; ++r) {
        std::size_t c = res.hard_negatives[r];
        double gn = (zn[r] / z) / cfg.tau;
        add_cos_grad_wrt_second(res.grad_candidates[c], query, candidates[c], sims[c], gn);
        add_cos_grad_wrt_second(res.grad_query, candidates[c], query, sims[c], gn);
    }
    return res;
}

} // namespace vmp
