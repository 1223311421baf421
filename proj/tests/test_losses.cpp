#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "vmp/error.hpp"
#include "vmp/losses.hpp"

using namespace vmp;

namespace {

// Central difference through an arbitrary scalar function of one
// mutated coordinate.
template <class F>
double fd_slope(F f, std::vector<double>& x, std::size_t j, double h = 1e-5) {
    double keep = x[j];
    x[j] = keep + h;
    double up = f();
    x[j] = keep - h;
    double dn = f();
    x[j] = keep;
    return (up - dn) / (2.0 * h);
}

bool grad_close(double a, double fd) {
    double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
    return std::abs(a - fd) / denom < 1e-4;
}

std::vector<double> rand_vec(std::mt19937_64& rng, std::size_t dim) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = u(rng);
    return v;
}

} // namespace

// ---------------------------------------------------------------
// Frozen spot values
// ---------------------------------------------------------------

TEST_CASE("fcl weight decays exponentially in the level gap") {
    CHECK(fcl_weight(0, 0, 1.0) == doctest::Approx(1.0));
    CHECK(fcl_weight(0, 2, 1.0) == doctest::Approx(0.135335).epsilon(1e-5));
    CHECK(fcl_weight(2, 0, 1.0) == fcl_weight(0, 2, 1.0)); // symmetric
    CHECK(fcl_weight(0, 2, 2.0) == doctest::Approx(std::exp(-1.0)));
    CHECK(fcl_weight(0, 1, 1.0) > fcl_weight(0, 2, 1.0));
    CHECK(fcl_weight(0, 2, 1.0) > fcl_weight(0, 3, 1.0));
}

TEST_CASE("fcl on one pair at unit distance") {
    LossConfig cfg; // tau_fcl = 1
    std::vector<EmbeddingRecord> batch = {
        {"f", 0, {0.0, 0.0}},
        {"f", 2, {1.0, 0.0}},
    };
    auto res = fcl_loss(batch, cfg);
    // both ordered pairs contribute e^-2 * 1
    CHECK(res.value == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-9));
    CHECK(res.grads[0][0] == doctest::Approx(-2.0 * std::exp(-2.0)).epsilon(1e-9));
    CHECK(res.grads[1][0] == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-9));
    CHECK(res.grads[0][1] == doctest::Approx(0.0));
}

TEST_CASE("fcl is zero with zero subgradient on identical vectors") {
    LossConfig cfg;
    std::vector<EmbeddingRecord> batch = {
        {"f", 0, {0.3, -0.7}},
        {"f", 1, {0.3, -0.7}},
        {"g", 0, {1.0, 1.0}},
    };
    auto res = fcl_loss(batch, cfg);
    CHECK(res.value == 0.0);
    for (const auto& g : res.grads)
        for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("fcl ignores records of different functions") {
    LossConfig cfg;
    std::vector<EmbeddingRecord> batch = {
        {"f", 0, {0.0, 0.0}},
        {"g", 1, {5.0, 5.0}},
    };
    CHECK(fcl_loss(batch, cfg).value == 0.0);
    CHECK(fcl_loss({}, cfg).value == 0.0);
}

TEST_CASE("pcl hinge in both variants") {
    LossConfig cfg;
    cfg.beta = 0.5;
    cfg.margin_m = 0.1; // gap-1 lines: cap at 0.4, floor at 0.6
    std::vector<EmbeddingRecord> close_batch = {
        {"f", 0, {0.0, 0.0}},
        {"f", 1, {0.2, 0.0}},
    };
    std::vector<EmbeddingRecord> far_batch = {
        {"f", 0, {0.0, 0.0}},
        {"f", 1, {0.6, 0.0}},
    };
    cfg.pcl_variant = PclVariant::AsWritten; // penalizes d above beta*gap - m
    CHECK(pcl_loss(close_batch, cfg).value == doctest::Approx(0.0));
    CHECK(pcl_loss(far_batch, cfg).value == doctest::Approx(0.2).epsilon(1e-9));
    cfg.pcl_variant = PclVariant::LowerBound; // penalizes d below beta*gap + m
    CHECK(pcl_loss(close_batch, cfg).value == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(pcl_loss(far_batch, cfg).value == doctest::Approx(0.0));
}

TEST_CASE("pcl pairs are ordered by level and scale with the gap") {
    LossConfig cfg;
    cfg.beta = 0.5;
    cfg.margin_m = 0.1;
    cfg.pcl_variant = PclVariant::LowerBound;
    // all three views collapsed to one point: hinge = floor each pair
    std::vector<EmbeddingRecord> batch = {
        {"f", 0, {1.0, 1.0}},
        {"f", 1, {1.0, 1.0}},
        {"f", 2, {1.0, 1.0}},
    };
    // gaps 1, 2, 1 -> floors 0.6 + 1.1 + 0.6
    CHECK(pcl_loss(batch, cfg).value == doctest::Approx(2.3).epsilon(1e-9));
    // order of records does not matter
    std::swap(batch[0], batch[2]);
    CHECK(pcl_loss(batch, cfg).value == doctest::Approx(2.3).epsilon(1e-9));
}

TEST_CASE("vmp loss composes the lm term with the contrastive pair") {
    LossConfig cfg;
    cfg.lambda = 0.0;
    CHECK(vmp_loss(5.25, {}, cfg) == 5.25);

    cfg.lambda = 0.5;
    std::mt19937_64 rng(5);
    std::vector<EmbeddingRecord> batch;
    for (int f = 0; f < 3; ++f)
        for (int lvl : {0, 1, 3})
            batch.push_back({"f" + std::to_string(f), lvl, rand_vec(rng, 4)});
    double expect = 1.0 + 0.5 * (fcl_loss(batch, cfg).value + pcl_loss(batch, cfg).value);
    CHECK(vmp_loss(1.0, batch, cfg) == expect);
}

TEST_CASE("peo equals log(1 + kappa) when all similarities tie") {
    LossConfig cfg;
    cfg.tau = 1.0;
    cfg.lambda_h = 0.0;
    std::vector<double> v = {0.6, 0.8};
    auto res = peo_loss(v, v, {v}, cfg);
    CHECK(res.value == doctest::Approx(0.693147).epsilon(1e-6)); // log 2
    cfg.lambda_h = 1.0;                                          // kappa_1 = 2
    CHECK(peo_loss(v, v, {v}, cfg).value == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("peo with an orthogonal negative") {
    LossConfig cfg;
    cfg.tau = 1.0;
    cfg.lambda_h = 0.0;
    std::vector<double> q = {1.0, 0.0};
    auto res = peo_loss(q, q, {{0.0, 1.0}}, cfg);
    // -1 + log(e + 1) = log(1 + e^-1)
    CHECK(res.value == doctest::Approx(0.313262).epsilon(1e-6));
}

// ---------------------------------------------------------------
// Structural behavior
// ---------------------------------------------------------------

TEST_CASE("hard negatives are the top K_h by similarity") {
    LossConfig cfg;
    cfg.k_h = 2;
    std::vector<double> q = {1.0, 0.0};
    std::vector<std::vector<double>> cands = {
        {0.0, 1.0},  // sim 0
        {0.9, 0.1},  // sim ~0.994
        {1.0, 1.0},  // sim ~0.707
        {-1.0, 0.0}, // sim -1
    };
    auto res = peo_loss(q, {1.0, 0.5}, cands, cfg);
    CHECK(res.hard_negatives == std::vector<std::size_t>{1, 2});
    // untouched candidates carry zero gradient
    for (double x : res.grad_candidates[0]) CHECK(x == 0.0);
    for (double x : res.grad_candidates[3]) CHECK(x == 0.0);
    bool moved = false;
    for (double x : res.grad_candidates[1]) moved = moved || x != 0.0;
    CHECK(moved);
}

TEST_CASE("similarity ties keep candidate order") {
    LossConfig cfg;
    cfg.k_h = 2;
    std::vector<double> v = {0.5, 0.5};
    auto res = peo_loss(v, v, {v, v, v}, cfg);
    CHECK(res.hard_negatives == std::vector<std::size_t>{0, 1});
}

TEST_CASE("K_h larger than the pool takes every candidate") {
    LossConfig cfg;
    cfg.k_h = 8;
    std::vector<double> q = {1.0, 0.0};
    auto res = peo_loss(q, q, {{0.0, 1.0}, {1.0, 1.0}}, cfg);
    CHECK(res.hard_negatives.size() == 2);
}

TEST_CASE("peo rejects empty pools and zero-norm vectors") {
    LossConfig cfg;
    std::vector<double> q = {1.0, 0.0};
    CHECK_THROWS_WITH_AS(peo_loss(q, q, {}, cfg), "peo_loss: candidate pool is empty", Error);
    CHECK_THROWS_AS(peo_loss(q, q, {{0.0, 0.0}}, cfg), Error);
    CHECK_THROWS_AS(peo_loss({0.0, 0.0}, q, {q}, cfg), Error);
}

TEST_CASE("heavier rank weights raise the loss") {
    LossConfig cfg;
    cfg.k_h = 3;
    std::vector<double> q = {1.0, 0.2};
    std::vector<double> p = {0.9, 0.1};
    std::vector<std::vector<double>> cands = {{0.8, 0.3}, {0.2, 1.0}, {-0.4, 0.8}};
    double prev = -1.0;
    for (double lh : {0.0, 0.5, 1.0, 2.0}) {
        cfg.lambda_h = lh;
        double v = peo_loss(q, p, cands, cfg).value;
        CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("losses are nonnegative and finite on random batches") {
    std::mt19937_64 rng(11);
    LossConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<EmbeddingRecord> batch;
        for (int f = 0; f < 3; ++f)
            for (int lvl : {-1, 0, 2, 3})
                batch.push_back({"f" + std::to_string(f), lvl, rand_vec(rng, 6)});
        for (auto variant : {PclVariant::AsWritten, PclVariant::LowerBound}) {
            cfg.pcl_variant = variant;
            double f = fcl_loss(batch, cfg).value;
            double p = pcl_loss(batch, cfg).value;
            CHECK(f >= 0.0);
            CHECK(p >= 0.0);
            CHECK(std::isfinite(f));
            CHECK(std::isfinite(p));
        }
        auto peo = peo_loss(batch[0].vec, batch[1].vec,
                            {batch[2].vec, batch[3].vec, batch[4].vec}, cfg);
        CHECK(peo.value > 0.0);
        CHECK(std::isfinite(peo.value));
    }
}

TEST_CASE("group_by_function keeps first-appearance order") {
    std::vector<EmbeddingRecord> batch = {
        {"b", 0, {}}, {"a", 0, {}}, {"b", 1, {}}, {"c", 0, {}}, {"a", 1, {}},
    };
    auto groups = group_by_function(batch);
    REQUIRE(groups.size() == 3);
    CHECK(groups[0] == std::vector<std::size_t>{0, 2});
    CHECK(groups[1] == std::vector<std::size_t>{1, 4});
    CHECK(groups[2] == std::vector<std::size_t>{3});
}

TEST_CASE("batch dimension mismatch is rejected") {
    LossConfig cfg;
    std::vector<EmbeddingRecord> batch = {{"f", 0, {1.0, 2.0}}, {"f", 1, {1.0}}};
    CHECK_THROWS_WITH_AS(fcl_loss(batch, cfg), "embedding dimension mismatch in batch", Error);
    CHECK_THROWS_AS(pcl_loss(batch, cfg), Error);
}

TEST_CASE("distance and cosine helpers") {
    CHECK(euclidean_distance({0.0, 0.0}, {3.0, 4.0}) == doctest::Approx(5.0));
    CHECK(cosine_similarity({1.0, 0.0}, {1.0, 1.0}) == doctest::Approx(0.707107).epsilon(1e-6));
    CHECK_THROWS_AS(euclidean_distance({1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS(cosine_similarity({1.0}, {1.0, 2.0}), Error);
    CHECK_THROWS_WITH_AS(cosine_similarity({0.0, 0.0}, {1.0, 0.0}),
                         "cosine undefined for a zero-norm vector", Error);
}

// ---------------------------------------------------------------
// Gradients against finite differences
// ---------------------------------------------------------------

TEST_CASE("fcl gradient matches finite differences") {
    std::mt19937_64 rng(21);
    LossConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<EmbeddingRecord> batch;
        bool ok = false;
        while (!ok) {
            batch.clear();
            for (int f = 0; f < 2; ++f)
                for (int lvl : {0, 1, 3})
                    batch.push_back({"f" + std::to_string(f), lvl, rand_vec(rng, 5)});
            ok = true; // keep distances away from the kink at zero
            for (std::size_t a = 0; a < batch.size() && ok; ++a)
                for (std::size_t b = a + 1; b < batch.size(); ++b)
                    if (batch[a].function_id == batch[b].function_id &&
                        euclidean_distance(batch[a].vec, batch[b].vec) < 0.05)
                        ok = false;
        }
        auto res = fcl_loss(batch, cfg);
        auto value = [&] { return fcl_loss(batch, cfg).value; };
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (std::size_t j = 0; j < batch[i].vec.size(); ++j)
                CHECK(grad_close(res.grads[i][j], fd_slope(value, batch[i].vec, j)));
    }
}

TEST_CASE("pcl gradient matches finite differences in both variants") {
    std::mt19937_64 rng(22);
    LossConfig cfg;
    for (auto variant : {PclVariant::AsWritten, PclVariant::LowerBound}) {
        cfg.pcl_variant = variant;
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<EmbeddingRecord> batch;
            bool ok = false;
            while (!ok) {
                batch.clear();
                for (int f = 0; f < 2; ++f)
                    for (int lvl : {0, 1, 3})
                        batch.push_back({"f" + std::to_string(f), lvl, rand_vec(rng, 5)});
                ok = true; // keep every pair clear of both hinge kinks
                for (std::size_t a = 0; a < batch.size() && ok; ++a)
                    for (std::size_t b = 0; b < batch.size() && ok; ++b) {
                        if (batch[a].function_id != batch[b].function_id) continue;
                        if (batch[a].level >= batch[b].level) continue;
                        double d = euclidean_distance(batch[a].vec, batch[b].vec);
                        double line = cfg.beta * (batch[b].level - batch[a].level);
                        if (std::abs(d - (line - cfg.margin_m)) < 1e-3 ||
                            std::abs(d - (line + cfg.margin_m)) < 1e-3 || d < 0.05)
                            ok = false;
                    }
            }
            auto res = pcl_loss(batch, cfg);
            auto value = [&] { return pcl_loss(batch, cfg).value; };
            for (std::size_t i = 0; i < batch.size(); ++i)
                for (std::size_t j = 0; j < batch[i].vec.size(); ++j)
                    CHECK(grad_close(res.grads[i][j], fd_slope(value, batch[i].vec, j)));
        }
    }
}

TEST_CASE("peo gradients match finite differences") {
    std::mt19937_64 rng(23);
    LossConfig cfg;
    cfg.k_h = 3;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> q, p;
        std::vector<std::vector<double>> cands;
        bool ok = false;
        while (!ok) {
            auto healthy = [&](const std::vector<double>& v) {
                return euclidean_distance(v, std::vector<double>(v.size(), 0.0)) > 0.3;
            };
            q = rand_vec(rng, 4);
            p = rand_vec(rng, 4);
            cands.clear();
            for (int c = 0; c < 6; ++c) cands.push_back(rand_vec(rng, 4));
            ok = healthy(q) && healthy(p);
            for (const auto& c : cands) ok = ok && healthy(c);
            if (!ok) continue;
            // well-separated similarities keep the ranking stable under perturbation
            std::vector<double> sims;
            for (const auto& c : cands) sims.push_back(cosine_similarity(q, c));
            for (std::size_t a = 0; a < sims.size() && ok; ++a)
                for (std::size_t b = a + 1; b < sims.size(); ++b)
                    if (std::abs(sims[a] - sims[b]) < 1e-3) ok = false;
        }
        auto res = peo_loss(q, p, cands, cfg);
        auto value = [&] { return peo_loss(q, p, cands, cfg).value; };
        for (std::size_t j = 0; j < q.size(); ++j) {
            CHECK(grad_close(res.grad_query[j], fd_slope(value, q, j)));
            CHECK(grad_close(res.grad_positive[j], fd_slope(value, p, j)));
        }
        for (std::size_t c = 0; c < cands.size(); ++c)
            for (std::size_t j = 0; j < cands[c].size(); ++j)
                CHECK(grad_close(res.grad_candidates[c][j], fd_slope(value, cands[c], j)));
    }
}

TEST_CASE("a small step against the gradient lowers each loss") {
    std::mt19937_64 rng(24);
    LossConfig cfg;
    std::vector<EmbeddingRecord> batch;
    for (int f = 0; f < 2; ++f)
        for (int lvl : {0, 2})
            batch.push_back({"f" + std::to_string(f), lvl, rand_vec(rng, 4)});
    auto res = fcl_loss(batch, cfg);
    auto stepped = batch;
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (std::size_t j = 0; j < batch[i].vec.size(); ++j)
            stepped[i].vec[j] -= 1e-3 * res.grads[i][j];
    CHECK(fcl_loss(stepped, cfg).value < res.value);

    std::vector<double> q = rand_vec(rng, 4), p = rand_vec(rng, 4);
    std::vector<std::vector<double>> cands = {rand_vec(rng, 4), rand_vec(rng, 4)};
    auto peo = peo_loss(q, p, cands, cfg);
    std::vector<double> q2 = q, p2 = p;
    auto c2 = cands;
    for (std::size_t j = 0; j < q.size(); ++j) {
        q2[j] -= 1e-3 * peo.grad_query[j];
        p2[j] -= 1e-3 * peo.grad_positive[j];
    }
    for (std::size_t c = 0; c < cands.size(); ++c)
        for (std::size_t j = 0; j < q.size(); ++j)
            c2[c][j] -= 1e-3 * peo.grad_candidates[c][j];
    CHECK(peo_loss(q2, p2, c2, cfg).value < peo.value);
}

// ---------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------

TEST_CASE("empty config text yields the defaults") {
    LossConfig cfg = parse_loss_config("");
    CHECK(cfg.tau_fcl == 1.0);
    CHECK(cfg.beta == 0.45);
    CHECK(cfg.margin_m == 0.05);
    CHECK(cfg.lambda == 0.3);
    CHECK(cfg.tau == 0.07);
    CHECK(cfg.lambda_h == 0.5);
    CHECK(cfg.k_h == 16);
    CHECK(cfg.alpha == 50.0);
    CHECK(cfg.pcl_variant == PclVariant::LowerBound);
}

TEST_CASE("config keys parse with comments and whitespace") {
    LossConfig cfg = parse_loss_config(
        "# contrastive settings\n"
        "tau_fcl = 2.0\n"
        "beta=0.5  ; slope\n"
        "margin_m = 0.1\n"
        "\n"
        "lambda = 0.2\n"
        "tau = 0.1\n"
        "lambda_h = 1.0\n"
        "k_h = 4\n"
        "alpha = 0.5\n"
        "pcl_variant = as-written\n");
    CHECK(cfg.tau_fcl == 2.0);
    CHECK(cfg.beta == 0.5);
    CHECK(cfg.margin_m == 0.1);
    CHECK(cfg.lambda == 0.2);
    CHECK(cfg.tau == 0.1);
    CHECK(cfg.lambda_h == 1.0);
    CHECK(cfg.k_h == 4);
    CHECK(cfg.alpha == 0.5);
    CHECK(cfg.pcl_variant == PclVariant::AsWritten);
    CHECK(parse_loss_config("pcl_variant = lower-bound\n").pcl_variant ==
          PclVariant::LowerBound);
}

TEST_CASE("config errors carry the offending key or line") {
    CHECK_THROWS_WITH_AS(parse_loss_config("bogus = 1\n"), "unknown config key 'bogus'", Error);
    CHECK_THROWS_WITH_AS(parse_loss_config("tau = abc\n"),
                         "config key 'tau': bad numeric value 'abc'", Error);
    CHECK_THROWS_WITH_AS(parse_loss_config("just words\n"),
                         "config line 1: expected key=value", Error);
    CHECK_THROWS_AS(parse_loss_config("tau = 0\n"), Error);
    CHECK_THROWS_AS(parse_loss_config("tau_fcl = -1\n"), Error);
    CHECK_THROWS_AS(parse_loss_config("k_h = 0\n"), Error);
    CHECK_THROWS_AS(parse_loss_config("pcl_variant = upper\n"), Error);
}

TEST_CASE("config loads from a file") {
    std::string path = "loss_config_test.tmp";
    {
        std::ofstream f(path);
        f << "beta = 0.9\n";
    }
    LossConfig cfg = load_loss_config(path);
    CHECK(cfg.beta == 0.9);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_loss_config("does_not_exist.cfg"), Error);
}
