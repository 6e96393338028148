#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "afen/error.hpp"
#include "afen/nn/gemm.hpp"
#include "afen/nn/layers.hpp"
#include "afen/nn/model.hpp"
#include "afen/nn/optimizer.hpp"
#include "afen/nn/serialize.hpp"
#include "afen/nn/train.hpp"
#include "support/nn_oracles.hpp"

using namespace afen;
using namespace afen::nn;

namespace {

template <typename T>
Tensor<T> random_tensor(std::size_t b, std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed,
                        double scale = 1.0) {
    Tensor<T> t(b, h, w, c);
    Rng rng(seed);
    oracle::fill_normal(t.data, rng, scale);
    return t;
}

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
    std::vector<double> v(n);
    Rng rng(seed);
    oracle::fill_normal(v, rng);
    return v;
}

Tensor<double> as_tensor(const std::array<std::size_t, 4>& dims, const std::vector<double>& v) {
    Tensor<double> t(dims[0], dims[1], dims[2], dims[3]);
    t.data = v;
    return t;
}

void require_no_mismatch(const std::vector<oracle::GradMismatch>& bad, const std::string& what) {
    INFO(what << ": " << bad.size() << " mismatches");
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 5); ++i)
        INFO("  index " << bad[i].index << " analytic " << bad[i].analytic << " numeric " << bad[i].numeric);
    if (!bad.empty())
        FAIL_CHECK(what << " first mismatch at " << bad[0].index << ": analytic " << bad[0].analytic << " numeric "
                        << bad[0].numeric);
}

// Tiny model inputs: one (b, rows, frames, 1) tensor per branch.
std::vector<Tensor<double>> tiny_inputs(const ArchSpec& a, std::size_t batch, std::uint64_t seed) {
    std::vector<Tensor<double>> in;
    for (std::size_t i = 0; i < a.branch_rows.size(); ++i)
        in.push_back(random_tensor<double>(batch, a.branch_rows[i], a.frames, 1, seed + i));
    return in;
}

}  // namespace

// ---------------------------------------------------------------- gemm

TEST_CASE_TEMPLATE("gemm kernels match triple loops on every tile shape", T, float, double) {
    const double tol = sizeof(T) == 4 ? 1e-4 : 1e-12;
    for (std::size_t m : {1, 3, 4, 7, 33}) {
        for (std::size_t n : {1, 8, 16, 17, 32, 40, 64, 100}) {
            for (std::size_t k : {1, 5, 130}) {
                std::vector<T> a(m * k), b(k * n), at(k * m), c(m * n, T(0.5)), c2(m * n, T(0.5));
                Rng rng(m * 10000 + n * 100 + k);
                oracle::fill_normal(a, rng);
                oracle::fill_normal(b, rng);
                transpose(m, k, a.data(), at.data());
                gemm_nn(m, n, k, a.data(), b.data(), c.data(), true);
                gemm_tn_acc(m, n, k, at.data(), b.data(), c2.data());
                double worst = 0.0;
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double ref = 0.5;
                        for (std::size_t p = 0; p < k; ++p)
                            ref += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
                        worst = std::max({worst, std::abs(c[i * n + j] - ref), std::abs(c2[i * n + j] - ref)});
                    }
                CHECK(worst <= tol * std::sqrt(static_cast<double>(k)) * 4);
                gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
                CHECK(std::abs(c[0] - c2[0] + T(0.5)) <= tol * 4 * std::sqrt(static_cast<double>(k)));
            }
        }
    }
}

// ---------------------------------------------------------------- conv

TEST_CASE("1x1 conv with an identity filter returns its input") {
    Conv2d<float> conv("c", 1, 1, 1, 1, 1, 1);
    conv.weight.value = {1.0f};
    Tensor<float> x(1, 1, 1, 1, 0.625f);
    CHECK(conv.forward(x).data == std::vector<float>{0.625f});
}

TEST_CASE("conv output size is ceil(in / stride) under same padding") {
    Conv2d<float> conv("c", 1, 32, 5, 5, 2, 3);
    Tensor<float> x(1, 40, 259, 1);
    const auto y = conv.forward(x);
    CHECK(y.dims == std::array<std::size_t, 4>{1, 20, 87, 32});
}

TEST_CASE("conv matches the six-loop reference") {
    struct Case {
        std::size_t kh, kw, sh, sw, cout;
    };
    const Case cases[] = {{3, 3, 1, 1, 4}, {5, 5, 2, 3, 3}, {2, 2, 1, 1, 2}, {2, 2, 2, 2, 5}, {1, 3, 1, 2, 1}};
    std::uint64_t seed = 10;
    for (const auto& c : cases) {
        const auto x = random_tensor<double>(1, 6, 6, 2, seed++);
        Conv2d<double> conv("c", 2, c.cout, c.kh, c.kw, c.sh, c.sw);
        Rng rng(seed++);
        oracle::fill_normal(conv.weight.value, rng);
        oracle::fill_normal(conv.bias.value, rng);
        const auto got = conv.forward(x);
        const auto want = oracle::naive_conv(x, conv.weight.value, conv.bias.value, c.kh, c.kw, c.sh, c.sw, c.cout);
        REQUIRE(got.dims == want.dims);
        double worst = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got.data[i] - want.data[i]));
        CHECK(worst <= 1e-6);

        // float path against the same reference
        Conv2d<float> cf("c", 2, c.cout, c.kh, c.kw, c.sh, c.sw);
        cf.weight.value.assign(conv.weight.value.begin(), conv.weight.value.end());
        cf.bias.value.assign(conv.bias.value.begin(), conv.bias.value.end());
        Tensor<float> xf(1, 6, 6, 2);
        xf.data.assign(x.data.begin(), x.data.end());
        const auto gf = cf.forward(xf);
        double worst_f = 0.0;
        for (std::size_t i = 0; i < gf.size(); ++i) worst_f = std::max(worst_f, std::abs(gf.data[i] - want.data[i]));
        CHECK(worst_f <= 1e-5);
    }
}

TEST_CASE("conv rejects a channel mismatch") {
    Conv2d<float> conv("c", 3, 4, 2, 2, 1, 1);
    Tensor<float> x(1, 4, 4, 2);
    CHECK_THROWS_AS(conv.forward(x), Error);
}

// ----------------------------------------------------------- batch norm

TEST_CASE("train-mode batch norm output has mean beta and std |gamma| per channel") {
    BatchNorm<double> bn("bn", 3);
    bn.gamma.value = {2.0, -0.5, 1.0};
    bn.beta.value = {0.3, -1.0, 4.0};
    const auto x = random_tensor<double>(8, 2, 3, 3, 5, 3.0);
    const auto y = bn.forward(x, Mode::Train);
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 0, sq = 0;
        const std::size_t n = y.size() / 3;
        for (std::size_t i = 0; i < n; ++i) s += y.data[i * 3 + c];
        const double mean = s / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) sq += (y.data[i * 3 + c] - mean) * (y.data[i * 3 + c] - mean);
        CHECK(std::abs(mean - bn.beta.value[c]) <= 1e-4);
        CHECK(std::abs(std::sqrt(sq / static_cast<double>(n)) - std::abs(bn.gamma.value[c])) <= 1e-4);
    }
    for (double v : bn.running_var.value) CHECK(v >= 0.0);
}

TEST_CASE("infer-mode batch norm of a constant equal to the running mean is zero") {
    BatchNorm<double> bn("bn", 2);
    bn.running_mean.value = {1.5, 1.5};
    bn.running_var.value = {0.7, 2.0};
    Tensor<double> x(2, 3, 3, 2, 1.5);
    const auto y = bn.forward(x, Mode::Infer);
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("batch norm running statistics follow momentum 0.9") {
    BatchNorm<double> bn("bn", 1);
    Tensor<double> x(4, 1, 1, 1);
    x.data = {1, 2, 3, 6};  // mean 3, biased variance 3.5
    bn.forward(x, Mode::Train);
    CHECK(bn.running_mean.value[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(bn.running_var.value[0] == doctest::Approx(0.9 + 0.35).epsilon(1e-12));
}

TEST_CASE("batch norm input gradient matches finite differences") {
    for (Mode mode : {Mode::Train, Mode::Infer}) {
        BatchNorm<double> bn("bn", 2);
        bn.gamma.value = {1.3, -0.6};
        bn.beta.value = {0.2, 0.1};
        bn.running_mean.value = {0.1, -0.2};
        bn.running_var.value = {1.5, 0.8};
        auto x = random_tensor<double>(2, 3, 3, 2, 17);
        const auto r = random_vector(x.size(), 18);
        bn.forward(x, mode);
        const auto dx = bn.backward(as_tensor(x.dims, r));
        auto loss = [&] {
            BatchNorm<double> probe = bn;
            return oracle::probe(probe.forward(x, mode), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, 1e-3, 1e-3, 1e-7), "bn input");
        require_no_mismatch(oracle::check_gradient(bn.gamma.value, bn.gamma.grad, loss, 1e-3, 1e-3, 1e-7), "bn gamma");
        require_no_mismatch(oracle::check_gradient(bn.beta.value, bn.beta.grad, loss, 1e-3, 1e-3, 1e-7), "bn beta");
    }
}

// ------------------------------------------------------------- pooling

TEST_CASE("2x2 max pool of [[1,2],[3,4]] is 4") {
    MaxPool<float> pool(2, 2);
    Tensor<float> x(1, 2, 2, 1);
    x.data = {1, 2, 3, 4};
    const auto y = pool.forward(x);
    CHECK(y.dims == std::array<std::size_t, 4>{1, 1, 1, 1});
    CHECK(y.data[0] == 4.0f);
}

TEST_CASE("a 2x2 pool on a single-row input acts as 1x2 with ceil division") {
    MaxPool<float> pool(2, 2);
    Tensor<float> x(1, 1, 259, 3);
    const auto y = pool.forward(x);
    CHECK(y.dims == std::array<std::size_t, 4>{1, 1, 130, 3});
}

TEST_CASE("max pool routes the gradient to the first maximum in row-major order") {
    MaxPool<double> pool(2, 2);
    Tensor<double> x(1, 3, 3, 1);
    x.data = {5, 1, 2,  //
              5, 0, 7,  //
              3, 3, 7};
    const auto y = pool.forward(x);
    REQUIRE(y.dims == std::array<std::size_t, 4>{1, 2, 2, 1});
    CHECK(y.data == std::vector<double>{5, 7, 3, 7});
    Tensor<double> dy(1, 2, 2, 1, 1.0);
    const auto dx = pool.backward(dy);
    CHECK(dx.data == std::vector<double>{1, 0, 0,  //
                                         0, 0, 1,  //
                                         1, 0, 1});
}

TEST_CASE("global max pool picks the channel maximum and ignores spatial order") {
    GlobalMaxPool<double> gmp;
    Tensor<double> x(1, 1, 3, 2);
    x.data = {-5, 1, 3, 2, 0, 9};
    auto y = gmp.forward(x);
    CHECK(y.dims == std::array<std::size_t, 4>{1, 1, 1, 2});
    CHECK(y.data == std::vector<double>{3, 9});

    Tensor<double> single(2, 1, 1, 3);
    single.data = {1, -2, 3, 4, 5, -6};
    CHECK(gmp.forward(single).data == single.data);

    auto big = random_tensor<double>(2, 4, 5, 3, 3);
    const auto ref = gmp.forward(big).data;
    Rng rng(4);
    std::vector<std::size_t> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Tensor<double> permuted = big;
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < 20; ++p)
            for (std::size_t c = 0; c < 3; ++c)
                permuted.data[(b * 20 + perm[p]) * 3 + c] = big.data[(b * 20 + p) * 3 + c];
    CHECK(gmp.forward(permuted).data == ref);
}

// ------------------------------------------------------------ attention

TEST_CASE("self-attention with gamma 0 is the identity") {
    SelfAttention<float> att("a", 4);
    Rng rng(1);
    att.init_glorot_uniform(rng);
    CHECK(att.gamma.value[0] == 0.0f);
    const auto x = random_tensor<float>(2, 3, 5, 4, 2);
    CHECK(att.forward(x) == x);
}

TEST_CASE("attention rows sum to one") {
    SelfAttention<double> att("a", 3);
    Rng rng(2);
    att.init_glorot_uniform(rng);
    const auto x = random_tensor<double>(2, 3, 4, 3, 3, 2.0);
    att.forward(x);
    for (std::size_t b = 0; b < 2; ++b) {
        const auto a = att.attention(b);
        for (std::size_t i = 0; i < 12; ++i) {
            const double s = std::accumulate(a.begin() + static_cast<long>(i * 12),
                                             a.begin() + static_cast<long>(i * 12 + 12), 0.0);
            CHECK(std::abs(s - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("attention output matches a direct evaluation") {
    SelfAttention<double> att("a", 2);
    att.wq.value = {1, 0, 0, 1};
    att.wk.value = {1, 0, 0, 1};
    att.wv.value = {0, 1, 1, 0};
    att.gamma.value = {0.5};
    Tensor<double> x(1, 1, 2, 2);
    x.data = {1, 0, 0, 1};
    // S = X X^T / sqrt2 = [[1,0],[0,1]]/sqrt2; V swaps the two features.
    const double e = std::exp(1.0 / std::sqrt(2.0));
    const double p = e / (e + 1.0), q = 1.0 / (e + 1.0);
    const auto y = att.forward(x);
    // row 0: A = [p, q]; V rows [0,1], [1,0] -> O = [q, p]
    CHECK(y.data[0] == doctest::Approx(1 + 0.5 * q).epsilon(1e-12));
    CHECK(y.data[1] == doctest::Approx(0.5 * p).epsilon(1e-12));
    CHECK(y.data[2] == doctest::Approx(0.5 * p).epsilon(1e-12));
    CHECK(y.data[3] == doctest::Approx(1 + 0.5 * q).epsilon(1e-12));
}

TEST_CASE("attention query-projection gradient matches finite differences") {
    SelfAttention<double> att("a", 3);
    Rng rng(7);
    att.init_glorot_uniform(rng);
    att.gamma.value = {0.8};
    auto x = random_tensor<double>(1, 2, 2, 3, 8);
    const auto r = random_vector(x.size(), 9);
    att.forward(x);
    att.backward(as_tensor(x.dims, r));
    auto loss = [&] {
        SelfAttention<double> probe = att;
        return oracle::probe(probe.forward(x), r);
    };
    require_no_mismatch(oracle::check_gradient(att.wq.value, att.wq.grad, loss, 1e-3, 1e-3, 1e-9), "wq");
}

// ------------------------------------------- gradient checks, every layer

TEST_CASE("every layer type passes central finite differences") {
    const double h = 1e-3, rel = 2e-2, abs_tol = 1e-5;

    SUBCASE("conv") {
        for (auto [kh, kw, sh, sw] : {std::array<std::size_t, 4>{3, 3, 1, 1}, {5, 5, 2, 3}, {2, 2, 2, 2}}) {
            Conv2d<double> conv("c", 2, 3, kh, kw, sh, sw);
            Rng rng(11);
            conv.init_he_uniform(rng);
            oracle::fill_normal(conv.bias.value, rng, 0.1);
            auto x = random_tensor<double>(2, 5, 7, 2, 12);
            const auto y = conv.forward(x);
            const auto r = random_vector(y.size(), 13);
            const auto dx = conv.backward(as_tensor(y.dims, r));
            auto loss = [&] {
                Conv2d<double> probe = conv;
                return oracle::probe(probe.forward(x), r);
            };
            require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "conv input");
            require_no_mismatch(oracle::check_gradient(conv.weight.value, conv.weight.grad, loss, h, rel, abs_tol),
                                "conv weight");
            require_no_mismatch(oracle::check_gradient(conv.bias.value, conv.bias.grad, loss, h, rel, abs_tol),
                                "conv bias");
        }
    }
    SUBCASE("batch norm") {
        BatchNorm<double> bn("bn", 3);
        bn.gamma.value = {0.5, 1.5, -1.0};
        auto x = random_tensor<double>(3, 2, 4, 3, 21);
        const auto r = random_vector(x.size(), 22);
        bn.forward(x, Mode::Train);
        const auto dx = bn.backward(as_tensor(x.dims, r));
        auto loss = [&] {
            BatchNorm<double> probe = bn;
            return oracle::probe(probe.forward(x, Mode::Train), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "bn input");
        require_no_mismatch(oracle::check_gradient(bn.gamma.value, bn.gamma.grad, loss, h, rel, abs_tol), "bn gamma");
        require_no_mismatch(oracle::check_gradient(bn.beta.value, bn.beta.grad, loss, h, rel, abs_tol), "bn beta");
    }
    SUBCASE("relu") {
        Relu<double> relu;
        auto x = random_tensor<double>(2, 3, 3, 2, 31);
        for (auto& v : x.data)
            if (std::abs(v) < 0.01) v = 0.5;  // keep clear of the kink
        const auto r = random_vector(x.size(), 32);
        relu.forward(x);
        const auto dx = relu.backward(as_tensor(x.dims, r));
        auto loss = [&] {
            Relu<double> probe;
            return oracle::probe(probe.forward(x), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "relu input");
    }
    SUBCASE("max pool") {
        MaxPool<double> pool(2, 2);
        auto x = random_tensor<double>(2, 5, 3, 2, 41);
        const auto y = pool.forward(x);
        const auto r = random_vector(y.size(), 42);
        const auto dx = pool.backward(as_tensor(y.dims, r));
        auto loss = [&] {
            MaxPool<double> probe(2, 2);
            return oracle::probe(probe.forward(x), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "pool input");
    }
    SUBCASE("self-attention") {
        SelfAttention<double> att("a", 4);
        Rng rng(51);
        att.init_glorot_uniform(rng);
        att.gamma.value = {0.6};
        auto x = random_tensor<double>(2, 2, 3, 4, 52);
        const auto r = random_vector(x.size(), 53);
        att.forward(x);
        const auto dx = att.backward(as_tensor(x.dims, r));
        auto loss = [&] {
            SelfAttention<double> probe = att;
            return oracle::probe(probe.forward(x), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "attention input");
        for (auto* p : {&att.wq, &att.wk, &att.wv, &att.gamma})
            require_no_mismatch(oracle::check_gradient(p->value, p->grad, loss, h, rel, abs_tol), p->name);
    }
    SUBCASE("global max pool") {
        GlobalMaxPool<double> gmp;
        auto x = random_tensor<double>(2, 3, 4, 3, 61);
        const auto y = gmp.forward(x);
        const auto r = random_vector(y.size(), 62);
        const auto dx = gmp.backward(as_tensor(y.dims, r));
        auto loss = [&] {
            GlobalMaxPool<double> probe;
            return oracle::probe(probe.forward(x), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "gmp input");
    }
    SUBCASE("dense") {
        Dense<double> dense("d", 6, 4);
        Rng rng(71);
        dense.init_he_uniform(rng);
        oracle::fill_normal(dense.bias.value, rng, 0.1);
        auto x = random_tensor<double>(3, 1, 1, 6, 72);
        const auto y = dense.forward(x);
        const auto r = random_vector(y.size(), 73);
        const auto dx = dense.backward(as_tensor(y.dims, r));
        auto loss = [&] {
            Dense<double> probe = dense;
            return oracle::probe(probe.forward(x), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "dense input");
        require_no_mismatch(oracle::check_gradient(dense.weight.value, dense.weight.grad, loss, h, rel, abs_tol),
                            "dense weight");
        require_no_mismatch(oracle::check_gradient(dense.bias.value, dense.bias.grad, loss, h, rel, abs_tol),
                            "dense bias");
    }
    SUBCASE("dropout with a fixed mask") {
        Dropout<double> drop(0.4);
        auto x = random_tensor<double>(2, 1, 1, 10, 81);
        const auto r = random_vector(x.size(), 82);
        Rng rng(83);
        drop.forward(x, Mode::Train, rng);
        const auto dx = drop.backward(as_tensor(x.dims, r));
        auto loss = [&] {
            Dropout<double> probe(0.4);
            Rng same(83);
            return oracle::probe(probe.forward(x, Mode::Train, same), r);
        };
        require_no_mismatch(oracle::check_gradient(x.data, dx.data, loss, h, rel, abs_tol), "dropout input");
    }
    SUBCASE("softmax + cross-entropy") {
        auto logits = random_tensor<double>(3, 1, 1, 5, 91);
        const std::vector<int> labels{4, 0, 2};
        const auto p = softmax(logits);
        std::vector<double> analytic = p.data;
        for (std::size_t b = 0; b < 3; ++b) analytic[b * 5 + static_cast<std::size_t>(labels[b])] -= 1.0;
        for (auto& v : analytic) v /= 3.0;
        auto loss = [&] { return sparse_xent_loss(softmax(logits), std::span<const int>(labels)); };
        require_no_mismatch(oracle::check_gradient(logits.data, analytic, loss, h, rel, abs_tol), "xent logits");
    }
}

TEST_CASE("full tiny model passes central finite differences on every parameter") {
    auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 9);
    arch.dropout = 0.25;
    CnnModel<double> model(arch);
    model.init(5);
    Rng rng(6);
    for (auto& br : model.branches) {
        br.attention.gamma.value = {0.7};  // make the projections matter
        for (auto& bn : br.norms) {
            oracle::fill_normal(bn.gamma.value, rng, 0.3);
            for (auto& g : bn.gamma.value) g += 1.0;
            oracle::fill_normal(bn.beta.value, rng, 0.1);
        }
    }
    const auto inputs = tiny_inputs(arch, 4, 100);
    const std::vector<int> labels{0, 3, 7, 5};

    model.zero_grad();
    {
        Rng drop(77);
        const auto p = model.forward(inputs, Mode::Train, drop);
        model.backward(p, labels);
    }
    auto loss = [&] {
        Rng drop(77);
        return sparse_xent_loss(model.forward(inputs, Mode::Train, drop), std::span<const int>(labels));
    };
    std::size_t checked = 0;
    for (auto* p : model.parameters()) {
        const auto analytic = p->grad;
        require_no_mismatch(oracle::check_gradient(p->value, analytic, loss, 1e-3, 2e-2, 1e-5), p->name);
        checked += p->value.size();
    }
    CHECK(checked > 1000);
}

TEST_CASE("value-projection gradient is exactly zero while gamma_att is zero") {
    const auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 9);
    CnnModel<double> model(arch);
    model.init(3);
    const auto inputs = tiny_inputs(arch, 3, 30);
    const std::vector<int> labels{1, 2, 6};
    model.zero_grad();
    Rng drop(1);
    model.backward(model.forward(inputs, Mode::Train, drop), labels);
    for (auto& br : model.branches) {
        for (double g : br.attention.wv.grad) CHECK(g == 0.0);
        for (double g : br.attention.wq.grad) CHECK(g == 0.0);
    }
}

TEST_CASE("duplicating a sample leaves the mean-loss gradient unchanged") {
    auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 9);
    arch.dropout = 0.0;
    CnnModel<double> one(arch), two(arch);
    one.init(8);
    two.init(8);
    const auto single = tiny_inputs(arch, 1, 40);
    std::vector<Tensor<double>> doubled;
    for (const auto& t : single) {
        Tensor<double> d(2, t.height(), t.width(), 1);
        std::copy(t.data.begin(), t.data.end(), d.data.begin());
        std::copy(t.data.begin(), t.data.end(), d.data.begin() + static_cast<long>(t.size()));
        doubled.push_back(d);
    }
    Rng r1(0), r2(0);
    const std::vector<int> l1{3}, l2{3, 3};
    one.zero_grad();
    two.zero_grad();
    one.backward(one.forward(single, Mode::Train, r1), l1);
    two.backward(two.forward(doubled, Mode::Train, r2), l2);
    const auto pa = one.parameters(), pb = two.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pa[i]->grad.size(); ++j)
            CHECK(std::abs(pa[i]->grad[j] - pb[i]->grad[j]) <=
                  1e-9 * std::max(std::abs(pa[i]->grad[j]), std::abs(pb[i]->grad[j])) + 1e-12);
}

// --------------------------------------------------------- model / loss

TEST_CASE("MFCC branch shapes follow the block table") {
    const auto arch = ArchSpec::standard();
    const auto shapes = branch_shapes(arch, 40);
    const std::vector<std::array<std::size_t, 3>> want{
        {10, 44, 32}, {3, 11, 64}, {3, 11, 96}, {3, 11, 128}, {3, 11, 128}};
    CHECK(shapes == want);
    CHECK(branch_shapes(arch, 1).back() == std::array<std::size_t, 3>{1, 11, 128});

    Branch<float> br("b", arch, 40);
    Rng rng(1);
    br.init(rng);
    const auto y = br.forward(random_tensor<float>(1, 40, 259, 1, 2), Mode::Infer);
    CHECK(y.dims == std::array<std::size_t, 4>{1, 1, 1, 128});
}

TEST_CASE("standard model produces normalised probabilities, deterministically in infer mode") {
    CnnModel<float> model(ArchSpec::standard());
    model.init(42);
    std::vector<Tensor<float>> in;
    for (std::size_t i = 0; i < 5; ++i)
        in.push_back(random_tensor<float>(2, model.arch().branch_rows[i], 259, 1, 200 + i));
    const auto p = model.forward(in);
    REQUIRE(p.dims == std::array<std::size_t, 4>{2, 1, 1, 8});
    for (std::size_t b = 0; b < 2; ++b) {
        double s = 0;
        for (float v : p.sample(b)) {
            CHECK(v > 0.0f);
            CHECK(v < 1.0f);
            s += v;
        }
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    CHECK(model.forward(in) == p);
    CHECK(model.branch_output(0).dims == std::array<std::size_t, 4>{2, 1, 1, 128});

    in.pop_back();
    CHECK_THROWS_AS(model.forward(in), Error);
}

TEST_CASE("changing one branch input moves the output only through that branch") {
    const auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 9);
    CnnModel<double> model(arch);
    model.init(12);
    auto inputs = tiny_inputs(arch, 2, 50);
    const auto base = model.forward(inputs);
    std::vector<Tensor<double>> base_branch;
    for (std::size_t i = 0; i < 5; ++i) base_branch.push_back(model.branch_output(i));

    for (std::size_t k = 0; k < 5; ++k) {
        auto changed = inputs;
        std::fill(changed[k].data.begin(), changed[k].data.end(), 0.0);
        const auto out = model.forward(changed);
        for (std::size_t i = 0; i < 5; ++i)
            if (i != k) CHECK(model.branch_output(i) == base_branch[i]);
        const bool branch_moved = !(model.branch_output(k) == base_branch[k]);
        CHECK(branch_moved == !(out == base));
    }

    // an input change invisible after pooling leaves the output untouched
    auto same = inputs;
    const auto out = model.forward(same);
    CHECK(out == base);
}

TEST_CASE("cross-entropy reference values") {
    Tensor<double> onehot(2, 1, 1, 8);
    onehot.at(0, 0, 0, 3) = 1.0;
    onehot.at(1, 0, 0, 0) = 1.0;
    const std::vector<int> l{3, 0};
    CHECK(sparse_xent_loss(onehot, std::span<const int>(l)) == 0.0);

    Tensor<double> uniform(3, 1, 1, 8, 0.125);
    const std::vector<int> u{0, 5, 7};
    CHECK(std::abs(sparse_xent_loss(uniform, std::span<const int>(u)) - std::log(8.0)) <= 1e-9);
    CHECK(std::abs(std::log(8.0) - 2.0794) < 1e-4);

    Tensor<double> two(2, 1, 1, 2);
    two.data = {0.5, 0.5, 0.75, 0.25};
    const std::vector<int> t{0, 1};
    CHECK(std::abs(sparse_xent_loss(two, std::span<const int>(t)) - (std::log(2.0) + std::log(4.0)) / 2.0) <= 1e-9);

    Tensor<double> zero(1, 1, 1, 2);
    zero.data = {1.0, 0.0};
    const std::vector<int> z{1};
    CHECK(sparse_xent_loss(zero, std::span<const int>(z)) == doctest::Approx(-std::log(1e-12)));

    const std::vector<int> bad{8, 0, 0};
    CHECK_THROWS_AS(sparse_xent_loss(uniform, std::span<const int>(bad)), Error);
}

TEST_CASE("softmax is invariant to a constant shift of the logits") {
    auto logits = random_tensor<double>(4, 1, 1, 8, 300, 3.0);
    const auto p = softmax(logits);
    for (double shift : {-50.0, 0.5, 120.0}) {
        auto shifted = logits;
        for (auto& v : shifted.data) v += shift;
        const auto q = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p.data[i] - q.data[i]) <= 1e-12);
    }
}

// ------------------------------------------------------------ optimizer

TEST_CASE("Adam leaves parameters alone under a zero gradient but counts the step") {
    Param<float> p("p", {3});
    p.value = {1.0f, -2.0f, 0.5f};
    Optimizer<float> opt;
    opt.step({&p});
    CHECK(p.value == std::vector<float>{1.0f, -2.0f, 0.5f});
    CHECK(opt.steps() == 1);
}

TEST_CASE("Adam's first step moves each parameter by lr against the gradient sign") {
    Param<double> p("p", {4});
    p.value = {0.0, 1.0, -1.0, 3.0};
    p.grad = {0.5, -2.0, 1e-3, -7.0};
    const auto before = p.value;
    Optimizer<double> opt;
    opt.step({&p});
    for (std::size_t i = 0; i < 4; ++i) {
        const double sign = p.grad[i] > 0 ? 1.0 : -1.0;
        CHECK(std::abs((before[i] - p.value[i]) - 1e-3 * sign) <= 1e-3 * 1e-4);
    }
}

TEST_CASE("optimizer steps are deterministic") {
    auto run = [](OptimizerKind kind) {
        Param<float> p("p", {5});
        Rng rng(9);
        oracle::fill_normal(p.value, rng);
        OptimizerConfig cfg;
        cfg.kind = kind;
        Optimizer<float> opt(cfg);
        for (int s = 0; s < 4; ++s) {
            oracle::fill_normal(p.grad, rng);
            opt.step({&p});
        }
        return p.value;
    };
    CHECK(run(OptimizerKind::Adam) == run(OptimizerKind::Adam));
    CHECK(run(OptimizerKind::SgdMomentum) == run(OptimizerKind::SgdMomentum));
    CHECK(run(OptimizerKind::Adam) != run(OptimizerKind::SgdMomentum));
}

// ------------------------------------------------------------- training

namespace {

// Two classes told apart by which half of every branch row carries a bump.
CnnData toy_data(const ArchSpec& arch, std::size_t per_class, std::uint64_t seed) {
    CnnData d = CnnData::for_arch(arch);
    Rng rng(seed);
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const int label = static_cast<int>(i % 2);
        std::vector<float> v(d.sample_width());
        std::size_t off = 0;
        for (std::size_t rows : arch.branch_rows) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t t = 0; t < arch.frames; ++t) {
                    const bool bump = (t < arch.frames / 2) == (label == 0);
                    v[off + r * arch.frames + t] = static_cast<float>((bump ? 1.0 : 0.0) + 0.3 * rng.normal());
                }
            off += rows * arch.frames;
        }
        d.add(std::move(v), label);
    }
    return d;
}

}  // namespace

TEST_CASE("fit_cnn overfits eight samples within thirty epochs") {
    auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 16);
    arch.classes = 2;
    CnnModel<float> model(arch);
    model.init(1);
    const auto train = toy_data(arch, 4, 2);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.dropout = 0.3;
    cfg.seed = 3;
    cfg.optimizer.learning_rate = 1e-2;
    const auto fit = fit_cnn(model, train, CnnData::for_arch(arch), cfg);
    CHECK(fit.history.size() == 30);
    CHECK(evaluate_cnn(model, train).accuracy == 1.0);
}

TEST_CASE("history CSV has one row per epoch and fixed seeds reproduce training") {
    auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 16);
    arch.classes = 2;
    const auto train = toy_data(arch, 6, 5);
    const auto val = toy_data(arch, 2, 6);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 5;
    cfg.seed = 11;
    auto run = [&] {
        CnnModel<float> model(arch);
        model.init(4);
        const auto fit = fit_cnn(model, train, val, cfg);
        return std::make_pair(history_csv(fit.history), encode_model(model));
    };
    const auto a = run(), b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    const auto lines = std::count(a.first.begin(), a.first.end(), '\n');
    CHECK(lines == 5);
    CHECK(a.first.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);
}

TEST_CASE("fit_cnn rejects an empty training set and bad configs") {
    const auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 16);
    CnnModel<float> model(arch);
    model.init(1);
    TrainConfig cfg;
    try {
        fit_cnn(model, CnnData::for_arch(arch), CnnData::for_arch(arch), cfg);
        FAIL("expected EmptyDataset");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::EmptyDataset);
    }
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("loss on a fixed batch falls over the first five Adam steps") {
    auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 16);
    arch.classes = 2;
    const auto data = toy_data(arch, 4, 21);
    CnnModel<float> model(arch);
    model.init(22);
    fit_input_normalization(model, data);
    Optimizer<float> opt;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto batch = make_batch(data, idx);
    double prev = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 5; ++step) {
        Rng drop(5);
        model.zero_grad();
        const auto p = model.forward(batch, Mode::Train, drop);
        const double loss = sparse_xent_loss(p, std::span<const int>(data.labels));
        CHECK(loss < prev);
        prev = loss;
        model.backward(p, data.labels);
        opt.step(model.parameters());
    }
}

// ---------------------------------------------------------- persistence

TEST_CASE("model files round-trip bit for bit") {
    auto arch = ArchSpec::tiny({4, 6, 3, 1, 1}, 16);
    CnnModel<float> model(arch);
    model.init(13);
    model.branches[2].norms[0].running_var.value[1] = 2.5f;
    model.branches[0].input_mean.value[3] = -1.25f;
    const auto bytes = encode_model(model);
    auto back = decode_model(bytes);
    CHECK(back.arch() == arch);
    CHECK(encode_model(back) == bytes);
    const auto data = toy_data(arch, 2, 14);
    CHECK(predict_proba(back, data) == predict_proba(model, data));

    auto broken = bytes;
    broken[0] = 'X';
    try {
        decode_model(broken);
        FAIL("expected CacheFormatError");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::CacheFormatError);
    }
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(decode_model(cut), Error);
}
