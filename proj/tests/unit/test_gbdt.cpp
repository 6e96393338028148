#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "afen/error.hpp"
#include "afen/gbdt.hpp"
#include "afen/nn/layers.hpp"
#include "afen/rng.hpp"

using namespace afen;
using namespace afen::gbdt;

namespace {

struct BruteSplit {
    std::size_t feature;
    float threshold;
    double gain;
};

// Every (feature, midpoint) scored from scratch, summing over the node's
// samples in index order.
std::optional<BruteSplit> brute_force_split(const FeatureTable& x, const std::vector<std::uint32_t>& node,
                                            const std::vector<double>& g, const std::vector<double>& h,
                                            const BoostConfig& c) {
    double gt = 0, ht = 0;
    for (auto s : node) {
        gt += g[s];
        ht += h[s];
    }
    std::optional<BruteSplit> best;
    double best_gain = 0.0;
    for (std::size_t f = 0; f < x.cols; ++f) {
        std::vector<float> vals;
        for (auto s : node) vals.push_back(x(s, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            float thr = static_cast<float>((static_cast<double>(vals[i]) + vals[i + 1]) / 2.0);
            if (!(thr > vals[i])) thr = vals[i + 1];
            double gl = 0, hl = 0, gr = 0, hr = 0;
            for (auto s : node) {
                if (x(s, f) < thr) {
                    gl += g[s];
                    hl += h[s];
                } else {
                    gr += g[s];
                    hr += h[s];
                }
            }
            if (hl < c.min_child_weight || hr < c.min_child_weight) continue;
            const double gain =
                0.5 * (gl * gl / (hl + c.lambda) + gr * gr / (hr + c.lambda) - gt * gt / (ht + c.lambda)) - c.gamma;
            if (gain > best_gain) {
                best_gain = gain;
                best = BruteSplit{f, thr, gain};
            }
        }
    }
    return best;
}

std::vector<std::span<const std::uint32_t>> node_views(const std::vector<std::vector<std::uint32_t>>& lists) {
    std::vector<std::span<const std::uint32_t>> v;
    for (const auto& l : lists) v.emplace_back(l);
    return v;
}

// Sorted per-feature lists restricted to `node` (a subset of rows).
std::vector<std::vector<std::uint32_t>> restrict_sorted(const FeatureTable& x, const std::vector<std::uint32_t>& node) {
    std::vector<std::uint8_t> in(x.rows, 0);
    for (auto s : node) in[s] = 1;
    auto all = presort(x);
    for (auto& l : all) l.erase(std::remove_if(l.begin(), l.end(), [&](std::uint32_t s) { return !in[s]; }), l.end());
    return all;
}

double accuracy(const Matrix& p, std::span<const int> labels) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < p.cols; ++k)
            if (p(i, k) > p(i, best)) best = k;
        ok += best == static_cast<std::size_t>(labels[i]);
    }
    return static_cast<double>(ok) / static_cast<double>(p.rows);
}

// 8 Gaussian clusters on a circle, far enough apart to be separable by axis cuts.
void clusters(std::size_t n, std::uint64_t seed, FeatureTable& x, std::vector<int>& labels) {
    Rng rng(seed);
    x = FeatureTable(n, 2);
    labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int k = static_cast<int>(i % 8);
        const double a = 2.0 * std::numbers::pi * k / 8.0;
        x(i, 0) = static_cast<float>(10.0 * std::cos(a) + 0.3 * rng.normal());
        x(i, 1) = static_cast<float>(10.0 * std::sin(a) + 0.3 * rng.normal());
        labels[i] = k;
    }
}

}  // namespace

TEST_CASE("softmax_rows reference values") {
    Matrix zero(2, 8);
    const auto p = softmax_rows(zero);
    for (double v : p.data) CHECK(v == doctest::Approx(0.125).epsilon(1e-15));

    Matrix m(1, 8);
    m(0, 0) = std::log(2.0);
    CHECK(std::abs(softmax_rows(m)(0, 0) - 2.0 / 9.0) <= 1e-12);

    Rng rng(1);
    Matrix r(5, 8);
    for (auto& v : r.data) v = 4.0 * rng.normal();
    const auto pr = softmax_rows(r);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto row = pr.row(i);
        CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-9);
    }
    auto shifted = r;
    for (std::size_t k = 0; k < 8; ++k) shifted(2, k) += 37.5;
    const auto ps = softmax_rows(shifted);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(ps(2, k) - pr(2, k)) <= 1e-12);
}

TEST_CASE("grad_hess reference values") {
    Matrix uniform(3, 8, 0.125);
    const std::vector<int> labels{0, 5, 7};
    const auto gh = grad_hess(uniform, labels);
    CHECK(gh.g(1, 5) == doctest::Approx(-7.0 / 8.0).epsilon(1e-15));
    CHECK(gh.g(1, 4) == doctest::Approx(1.0 / 8.0).epsilon(1e-15));
    CHECK(gh.h(2, 3) == doctest::Approx(7.0 / 64.0).epsilon(1e-15));

    Matrix perfect(2, 8);
    perfect(0, 2) = 1.0;
    perfect(1, 6) = 1.0;
    const std::vector<int> pl{2, 6};
    const auto gp = grad_hess(perfect, pl);
    CHECK(gp.g(0, 2) == 0.0);
    CHECK(gp.h(0, 2) == 0.0);
    CHECK(gp.g(1, 6) == 0.0);

    Rng rng(3);
    Matrix m(10, 8);
    for (auto& v : m.data) v = rng.normal();
    std::vector<int> rl(10);
    for (auto& l : rl) l = static_cast<int>(rng.below(8));
    const auto gr = grad_hess(softmax_rows(m), rl);
    for (std::size_t i = 0; i < 10; ++i) {
        const auto row = gr.g.row(i);
        CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0)) <= 1e-12);
    }
    const std::vector<int> bad{0, 9, 1};
    CHECK_THROWS_AS(grad_hess(uniform, bad), Error);
}

TEST_CASE("mlogloss reference values and agreement with the network loss") {
    Matrix uniform(4, 8, 0.125);
    const std::vector<int> l{0, 1, 2, 7};
    CHECK(std::abs(mlogloss(uniform, l) - std::log(8.0)) <= 1e-9);

    Matrix perfect(2, 3);
    perfect(0, 1) = 1.0;
    perfect(1, 2) = 1.0;
    CHECK(mlogloss(perfect, std::vector<int>{1, 2}) == 0.0);

    Matrix two(2, 2);
    two.data = {0.9, 0.1, 0.4, 0.6};
    const double want = -(std::log(0.9) + std::log(0.6)) / 2.0;
    CHECK(std::abs(mlogloss(two, std::vector<int>{0, 1}) - want) <= 1e-9);
    CHECK(std::abs(want - 0.3081) < 1e-4);  // 0.308093...

    Rng rng(5);
    Matrix m(6, 8);
    for (auto& v : m.data) v = rng.normal();
    const auto p = softmax_rows(m);
    const std::vector<int> labels{3, 1, 4, 1, 5, 7};
    nn::Tensor<double> t(6, 1, 1, 8);
    t.data = p.data;
    CHECK(std::abs(mlogloss(p, labels) - nn::sparse_xent_loss(t, std::span<const int>(labels))) <= 1e-9);

    CHECK_THROWS_AS(mlogloss(uniform, std::vector<int>{0, 1, 8, 0}), Error);
}

TEST_CASE("best_split finds nothing when every value and gradient is identical") {
    FeatureTable x(5, 2);
    std::fill(x.values.begin(), x.values.end(), 1.5f);
    const std::vector<double> g(5, 0.4), h(5, 1.0);
    const auto sorted = presort(x);
    CHECK_FALSE(best_split(x, node_views(sorted), g, h, BoostConfig{}).has_value());
}

TEST_CASE("best_split on the four-point toy splits at 2.5 with gain 4/3") {
    FeatureTable x(4, 1);
    x.values = {1, 2, 3, 4};
    const std::vector<double> g{-1, -1, 1, 1}, h{1, 1, 1, 1};
    const auto sorted = presort(x);
    BoostConfig c;
    c.lambda = 1.0;
    c.gamma = 0.0;
    const auto s = best_split(x, node_views(sorted), g, h, c);
    REQUIRE(s.has_value());
    CHECK(s->feature == 0);
    CHECK(s->threshold == 2.5f);
    CHECK(std::abs(s->gain - 4.0 / 3.0) <= 1e-12);

    c.gamma = 2.0;  // penalty above the gain
    CHECK_FALSE(best_split(x, node_views(sorted), g, h, c).has_value());
    c.gamma = 0.0;
    c.min_child_weight = 2.5;  // no child can hold 2.5 of hessian
    CHECK_FALSE(best_split(x, node_views(sorted), g, h, c).has_value());
}

TEST_CASE("best_split breaks ties by lowest feature, then lowest threshold") {
    FeatureTable x(4, 2);
    x.values = {1, 1, 2, 2, 3, 3, 4, 4};  // two identical columns
    const std::vector<double> g{-1, 1, -1, 1}, h{1, 1, 1, 1};  // symmetric gains at 1.5 and 3.5
    const auto s = best_split(x, node_views(presort(x)), g, h, BoostConfig{});
    REQUIRE(s.has_value());
    CHECK(s->feature == 0);
    CHECK(s->threshold == 1.5f);
}

TEST_CASE("best_split equals the brute-force scorer on 50 seeded instances") {
    std::size_t with_split = 0;
    for (std::uint64_t inst = 0; inst < 50; ++inst) {
        Rng rng(1000 + inst);
        const std::size_t n = 2 + rng.below(199);  // up to 200
        const std::size_t d = 1 + rng.below(10);   // up to 10
        FeatureTable x(n, d);
        const double grid = 1.0 + static_cast<double>(rng.below(20));  // coarse grids create ties
        for (auto& v : x.values) v = static_cast<float>(std::round(rng.normal() * grid) / grid);
        std::vector<double> g(n), h(n);
        for (auto& v : g) v = rng.normal();
        for (auto& v : h) v = rng.uniform(0.01, 0.3);
        BoostConfig c;
        c.lambda = rng.uniform(0.0, 2.0);
        c.gamma = rng.uniform(0.0, 0.5);
        c.min_child_weight = rng.uniform(0.0, 2.0);
        std::vector<std::uint32_t> node;
        for (std::uint32_t i = 0; i < n; ++i)
            if (inst % 2 == 0 || rng.uniform() < 0.6) node.push_back(i);
        if (node.size() < 2) node = {0, static_cast<std::uint32_t>(n - 1)};

        const auto sorted = restrict_sorted(x, node);
        const auto got = best_split(x, node_views(sorted), g, h, c);
        const auto want = brute_force_split(x, node, g, h, c);
        INFO("instance " << inst << " n=" << n << " d=" << d);
        REQUIRE(got.has_value() == want.has_value());
        if (!got) continue;
        ++with_split;
        CHECK(got->feature == want->feature);
        CHECK(got->threshold == want->threshold);
        CHECK(std::abs(got->gain - want->gain) <= 1e-9 * std::max(1.0, std::abs(want->gain)));
    }
    CHECK(with_split >= 25);
}

TEST_CASE("depth-1 single-round model reproduces the hand-computed leaf weights") {
    FeatureTable x(4, 1);
    x.values = {1, 2, 3, 4};
    const std::vector<int> labels{0, 0, 1, 1};
    BoostConfig c;
    c.n_rounds = 1;
    c.max_depth = 1;
    c.class_count = 2;
    c.min_child_weight = 0.5;  // each child holds 2 x 0.25 of hessian
    const auto m = fit_gbdt(x, labels, c);
    REQUIRE(m.trees.size() == 2);
    // base = log(1/2) for both classes, p = 1/2: class 0 g = -1/2 (label 0) or +1/2, h = 1/4.
    // left child {1, 2}: G = -1, H = 0.5 -> w = -0.3 * -1 / 1.5 = 0.2; right -0.2.
    const auto& t0 = m.trees[0];
    REQUIRE_FALSE(t0.nodes[0].leaf);
    CHECK(t0.nodes[0].threshold == 2.5f);
    CHECK(t0.nodes[static_cast<std::size_t>(t0.nodes[0].left)].value == static_cast<float>(0.3 / 1.5));
    CHECK(t0.nodes[static_cast<std::size_t>(t0.nodes[0].right)].value == static_cast<float>(-0.3 / 1.5));
    const auto& t1 = m.trees[1];
    CHECK(t1.nodes[static_cast<std::size_t>(t1.nodes[0].left)].value == static_cast<float>(-0.3 / 1.5));
    // and the toy is classified correctly
    CHECK(accuracy(predict_gbdt(m, x), labels) == 1.0);
}

TEST_CASE("separable clusters reach training accuracy 1.0 within 50 rounds") {
    FeatureTable x;
    std::vector<int> labels;
    clusters(200, 7, x, labels);
    BoostConfig c;
    c.n_rounds = 50;
    FitHistory hist;
    const auto m = fit_gbdt(x, labels, c, &hist);
    CHECK(m.trees.size() == 50 * 8);
    CHECK(m.rounds() == 50);
    CHECK(accuracy(predict_gbdt(m, x), labels) == 1.0);
    REQUIRE(hist.train_mlogloss.size() == 50);
    for (std::size_t r = 1; r < 50; ++r) CHECK(hist.train_mlogloss[r] <= hist.train_mlogloss[r - 1]);
    for (const auto& t : m.trees) {
        CHECK(t.depth() <= c.max_depth);
        for (const auto& n : t.nodes)
            if (!n.leaf) CHECK(n.feature < 2);
    }
    const auto csv = history_csv(hist);
    CHECK(csv.rfind("round,train_mlogloss\n1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);
}

TEST_CASE("eight samples of two classes are fit perfectly within 50 rounds") {
    Rng rng(11);
    FeatureTable x(8, 6);
    std::vector<int> labels(8);
    for (std::size_t i = 0; i < 8; ++i) {
        labels[i] = static_cast<int>(i % 2);
        for (std::size_t f = 0; f < 6; ++f) x(i, f) = static_cast<float>(rng.normal() + (f == 2 ? 3.0 * labels[i] : 0));
    }
    BoostConfig c;
    c.n_rounds = 50;
    c.class_count = 2;
    const auto m = fit_gbdt(x, labels, c);
    CHECK(accuracy(predict_gbdt(m, x), labels) == 1.0);
}

TEST_CASE("fit_gbdt is deterministic and validates its input") {
    FeatureTable x;
    std::vector<int> labels;
    clusters(64, 9, x, labels);
    BoostConfig c;
    c.n_rounds = 5;
    CHECK(fit_gbdt(x, labels, c) == fit_gbdt(x, labels, c));

    auto missing = labels;
    std::replace(missing.begin(), missing.end(), 3, 4);
    try {
        fit_gbdt(x, missing, c);
        FAIL("expected DegenerateData");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::DegenerateData);
    }
    auto bad = labels;
    bad[0] = 8;
    CHECK_THROWS_AS(fit_gbdt(x, bad, c), Error);
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(fit_gbdt(x, labels, c), Error);
}

TEST_CASE("an empty forest predicts the class priors") {
    GbdtModel m;
    m.config.class_count = 3;
    m.feature_count = 2;
    const double priors[] = {0.5, 0.3, 0.2};
    for (double p : priors) m.base_score.push_back(std::log(p));
    FeatureTable x(2, 2);
    const auto p = predict_gbdt(m, x);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p(i, k) - priors[k]) <= 1e-12);
    FeatureTable wrong(1, 3);
    CHECK_THROWS_AS(predict_gbdt(m, wrong), Error);
}

TEST_CASE("prediction rows are stochastic and the tree sum order does not matter") {
    FeatureTable x;
    std::vector<int> labels;
    clusters(80, 13, x, labels);
    BoostConfig c;
    c.n_rounds = 6;
    const auto m = fit_gbdt(x, labels, c);
    const auto margins = predict_margins(m, x);
    const auto p = predict_gbdt(m, x);
    for (std::size_t i = 0; i < p.rows; ++i) {
        const auto row = p.row(i);
        CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) <= 1e-9);
        for (std::size_t k = 0; k < 8; ++k) {
            double rev = m.base_score[k];
            for (std::size_t t = m.trees.size(); t-- > 0;)
                if (t % 8 == k) rev += m.trees[t].predict(x.row(i));
            CHECK(std::abs(rev - margins(i, k)) <= 1e-12);
        }
    }
    CHECK(predict_gbdt(m, x) == p);
}

TEST_CASE("missing values follow the default direction") {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0] = TreeNode{false, 0, 1.0f, 0.0f, false, 1, 2};
    t.nodes[1].value = -1.0f;
    t.nodes[2].value = 2.0f;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    CHECK(t.predict(std::vector<float>{nan}) == 2.0f);
    CHECK(t.predict(std::vector<float>{0.5f}) == -1.0f);
    CHECK(t.predict(std::vector<float>{1.0f}) == 2.0f);
}

TEST_CASE("forest files round-trip and reject corruption") {
    FeatureTable x;
    std::vector<int> labels;
    clusters(64, 17, x, labels);
    BoostConfig c;
    c.n_rounds = 4;
    c.seed = 99;
    const auto m = fit_gbdt(x, labels, c);
    const auto bytes = encode_forest(m);
    CHECK(bytes.size() > 8);
    const auto back = decode_forest(bytes);
    CHECK(back == m);
    CHECK(predict_gbdt(back, x) == predict_gbdt(m, x));

    auto broken = bytes;
    broken[3] = '?';
    try {
        decode_forest(broken);
        FAIL("expected CacheFormatError");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CacheFormatError);
    }
    auto cut = bytes;
    cut.resize(bytes.size() - 1);
    CHECK_THROWS_AS(decode_forest(cut), Error);
}
