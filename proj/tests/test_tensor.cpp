#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gridfill/errors.hpp"
#include "gridfill/gradcheck.hpp"
#include "gridfill/tensor.hpp"

using namespace gridfill;

namespace {

// Independent oracle: naive i/j/k triple loop, no shared code with the op.
std::vector<double> naive_matmul(const std::vector<double> &a, const std::vector<double> &b, int m,
                                 int k, int n) {
    std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; i++)
        for (int j = 0; j < n; j++) {
            double s = 0.0;
            for (int kk = 0; kk < k; kk++)
                s += a[static_cast<size_t>(i) * k + kk] * b[static_cast<size_t>(kk) * n + j];
            c[static_cast<size_t>(i) * n + j] = s;
        }
    return c;
}

}  // namespace

TEST_CASE("matmul identity and hand-multiplied values") {
    PrecisionGuard f64(Precision::f64);
    Tensor eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    Tensor r = matmul(eye, a);
    for (size_t i = 0; i < 4; i++) CHECK(r.get(i) == doctest::Approx(a.get(i)).epsilon(1e-12));

    Tensor b = Tensor::from_vector({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    // frozen from the hand-multiplication oracle
    const double expected[] = {19, 22, 43, 50};
    for (size_t i = 0; i < 4; i++) CHECK(c.get(i) == doctest::Approx(expected[i]).epsilon(1e-12));
    auto oracle = naive_matmul(a.to_vector(), b.to_vector(), 2, 2, 2);
    for (size_t i = 0; i < 4; i++) CHECK(c.get(i) == doctest::Approx(oracle[i]).epsilon(1e-12));
}

TEST_CASE("matmul agrees with naive oracle on random shapes") {
    PrecisionGuard f64(Precision::f64);
    Rng rng(42);
    for (int trial = 0; trial < 20; trial++) {
        int m = rng.uniform_int(1, 6), k = rng.uniform_int(1, 6), n = rng.uniform_int(1, 6);
        Tensor a = Tensor::randn({m, k}, rng, 1.0);
        Tensor b = Tensor::randn({k, n}, rng, 1.0);
        Tensor c = matmul(a, b);
        auto oracle = naive_matmul(a.to_vector(), b.to_vector(), m, k, n);
        for (size_t i = 0; i < oracle.size(); i++)
            CHECK(c.get(i) == doctest::Approx(oracle[i]).epsilon(1e-10));
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), dimension_error);
    try {
        matmul(a, b);
    } catch (const dimension_error &e) {
        CHECK(std::string(e.what()).find("[4x5]") != std::string::npos);
    }
}

TEST_CASE("matmul backward matches central differences at 1e-6") {
    PrecisionGuard f64(Precision::f64);
    for (uint64_t seed = 1; seed <= 10; seed++) {
        Rng rng(seed);
        Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
        Tensor b = Tensor::randn({4, 2}, rng, 1.0, true);
        double err = max_grad_rel_error([&]() { return sum_all(matmul(a, b)); }, {a, b});
        CHECK(err < 1e-6);
    }
}

TEST_CASE("softmax basics") {
    PrecisionGuard f64(Precision::f64);
    Tensor x = Tensor::from_vector({2}, {0.0, 0.0});
    Tensor s = softmax(x, 0);
    CHECK(s.get(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.get(1) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor y = Tensor::from_vector({2}, {std::log(1.0), std::log(3.0)});
    Tensor sy = softmax(y, 0);
    CHECK(sy.get(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(sy.get(1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax shift invariance") {
    PrecisionGuard f64(Precision::f64);
    Rng rng(7);
    for (int trial = 0; trial < 10; trial++) {
        Tensor x = Tensor::randn({3, 5}, rng, 2.0);
        double c = rng.uniform(-50.0, 50.0);
        std::vector<double> shifted = x.to_vector();
        for (auto &v : shifted) v += c;
        Tensor xs = Tensor::from_vector({3, 5}, shifted);
        Tensor s0 = softmax(x, 1), s1 = softmax(xs, 1);
        for (size_t i = 0; i < s0.numel(); i++)
            CHECK(s0.get(i) == doctest::Approx(s1.get(i)).epsilon(1e-9));
    }
}

TEST_CASE("softmax rows sum to 1 under large magnitudes, both precisions") {
    for (Precision p : {Precision::f32, Precision::f64}) {
        PrecisionGuard guard(p);
        Rng rng(11);
        for (int trial = 0; trial < 20; trial++) {
            Tensor x = Tensor::randn({4, 9}, rng, 1e4);
            Tensor s = softmax(x, 1);
            for (int i = 0; i < 4; i++) {
                double sum = 0.0;
                for (int j = 0; j < 9; j++) {
                    double v = s.get(static_cast<size_t>(i) * 9 + j);
                    CHECK(v >= 0.0);  // entries 1e4 below the max underflow to exactly 0
                    sum += v;
                }
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
        }
    }
}

TEST_CASE("softmax outputs strictly positive at moderate magnitudes") {
    Rng rng(12);
    Tensor x = Tensor::randn({4, 9}, rng, 10.0);
    Tensor s = softmax(x, 1);
    for (size_t i = 0; i < s.numel(); i++) CHECK(s.get(i) > 0.0);
}

TEST_CASE("softmax along axis 0 normalizes columns") {
    PrecisionGuard f64(Precision::f64);
    Tensor x = Tensor::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor s = softmax(x, 0);
    for (int j = 0; j < 3; j++) {
        double sum = s.get(static_cast<size_t>(j)) + s.get(static_cast<size_t>(3 + j));
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("cross entropy on uniform logits equals ln V") {
    PrecisionGuard f64(Precision::f64);
    const int v = 216;
    Tensor logits = Tensor::zeros({2, v});
    Tensor loss = cross_entropy_logits(logits, {3, 77});
    CHECK(loss.get(0) == doctest::Approx(std::log(216.0)).epsilon(1e-10));
    CHECK(loss.get(0) == doctest::Approx(5.3753).epsilon(1e-4));
}

TEST_CASE("cross entropy saturates with a +50 margin") {
    PrecisionGuard f64(Precision::f64);
    Tensor logits = Tensor::zeros({1, 10});
    logits.set(4, 50.0);
    Tensor loss = cross_entropy_logits(logits, {4});
    CHECK(loss.get(0) < 1e-6);
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot over batch") {
    PrecisionGuard f64(Precision::f64);
    Rng rng(13);
    const int b = 4, v = 9;
    Tensor logits = Tensor::randn({b, v}, rng, 2.0, true);
    std::vector<int> targets;
    for (int i = 0; i < b; i++) targets.push_back(static_cast<int>(rng.uniform_int(v)));
    Tensor loss = cross_entropy_logits(logits, targets);
    backward(loss);
    // closed-form reference computed independently
    for (int i = 0; i < b; i++) {
        double mx = -1e300;
        for (int j = 0; j < v; j++) mx = std::max(mx, logits.get(static_cast<size_t>(i) * v + j));
        double z = 0.0;
        for (int j = 0; j < v; j++) z += std::exp(logits.get(static_cast<size_t>(i) * v + j) - mx);
        for (int j = 0; j < v; j++) {
            double p = std::exp(logits.get(static_cast<size_t>(i) * v + j) - mx) / z;
            double expect = (p - (j == targets[i] ? 1.0 : 0.0)) / b;
            double got = logits.grad_at(static_cast<size_t>(i) * v + j);
            double denom = std::max({std::abs(expect), std::abs(got), 1e-8});
            CHECK(std::abs(expect - got) / denom < 1e-6);
        }
    }
}

TEST_CASE("cross entropy rejects out-of-range targets") {
    Tensor logits = Tensor::zeros({2, 5});
    CHECK_THROWS_AS(cross_entropy_logits(logits, {0, 5}), index_error);
    CHECK_THROWS_AS(cross_entropy_logits(logits, {-1, 0}), index_error);
}

TEST_CASE("backward of sum of squares is 2x") {
    PrecisionGuard f64(Precision::f64);
    Rng rng(3);
    Tensor x = Tensor::randn({4, 3}, rng, 1.0, true);
    backward(sum_all(mul(x, x)));
    for (size_t i = 0; i < x.numel(); i++)
        CHECK(x.grad_at(i) == doctest::Approx(2.0 * x.get(i)).epsilon(1e-12));
}

TEST_CASE("disconnected parameter keeps a zero gradient") {
    Tensor x = Tensor::full({3}, 2.0, true);
    Tensor unused = Tensor::full({3}, 5.0, true);
    backward(sum_all(mul(x, x)));
    for (size_t i = 0; i < unused.numel(); i++) CHECK(unused.grad_at(i) == 0.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::full({3}, 1.0, true);
    CHECK_THROWS_AS(backward(mul(x, x)), contract_error);
}

TEST_CASE("backward twice accumulates leaf gradients") {
    PrecisionGuard f64(Precision::f64);
    Tensor x = Tensor::from_vector({2}, {3.0, -1.0}, true);
    Tensor loss = sum_all(mul(x, x));
    backward(loss);
    backward(loss);
    CHECK(x.grad_at(0) == doctest::Approx(2.0 * 2.0 * 3.0).epsilon(1e-12));
    CHECK(x.grad_at(1) == doctest::Approx(2.0 * 2.0 * -1.0).epsilon(1e-12));
}

TEST_CASE("fan-out accumulates rather than overwrites") {
    PrecisionGuard f64(Precision::f64);
    Tensor x = Tensor::from_vector({2}, {1.5, -0.5}, true);
    // x used twice: d/dx sum(x + x) = 2
    backward(sum_all(add(x, x)));
    CHECK(x.grad_at(0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad_at(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("layer norm of a constant vector is zero before affine") {
    PrecisionGuard f64(Precision::f64);
    Tensor x = Tensor::full({1, 8}, 3.7);
    Tensor g = Tensor::full({8}, 1.0);
    Tensor b = Tensor::zeros({8});
    Tensor y = layer_norm(x, g, b);
    for (size_t i = 0; i < y.numel(); i++) CHECK(std::abs(y.get(i)) < 1e-9);
}

TEST_CASE("layer norm normalizes rows to zero mean unit variance") {
    PrecisionGuard f64(Precision::f64);
    Rng rng(5);
    Tensor x = Tensor::randn({4, 16}, rng, 3.0);
    Tensor g = Tensor::full({16}, 1.0);
    Tensor b = Tensor::zeros({16});
    Tensor y = layer_norm(x, g, b);
    for (int i = 0; i < 4; i++) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 16; j++) mean += y.get(static_cast<size_t>(i) * 16 + j);
        mean /= 16;
        for (int j = 0; j < 16; j++) {
            double d = y.get(static_cast<size_t>(i) * 16 + j) - mean;
            var += d * d;
        }
        var /= 16;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("gelu at zero is zero") {
    Tensor x = Tensor::zeros({3});
    Tensor y = gelu(x);
    for (size_t i = 0; i < y.numel(); i++) CHECK(y.get(i) == 0.0);
}

TEST_CASE("embedding lookup repeats accumulate into the table gradient") {
    PrecisionGuard f64(Precision::f64);
    Tensor table = Tensor::from_vector({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    backward(sum_all(embedding_lookup(table, {1, 1, 2})));
    CHECK(table.grad_at(0) == 0.0);
    CHECK(table.grad_at(2) == doctest::Approx(2.0));  // row 1 used twice
    CHECK(table.grad_at(4) == doctest::Approx(1.0));
}

TEST_CASE("gather rejects out-of-range row ids") {
    Tensor t = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(gather_rows(t, {0, 3}), index_error);
}

TEST_CASE("elementwise ops reject shape mismatches") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({3, 2});
    CHECK_THROWS_AS(add(a, b), dimension_error);
    CHECK_THROWS_AS(mul(a, b), dimension_error);
}

TEST_CASE("finite-difference suite passes for every op at 10 seeds") {
    auto checks = run_gradcheck_suite(10);
    for (const auto &c : checks) {
        INFO(c.name, " max rel err ", c.max_rel_err);
        CHECK(c.pass);
    }
    CHECK(gradcheck_ok(checks));
}

TEST_CASE("backward is deterministic bit for bit") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor a = Tensor::randn({6, 6}, rng, 1.0, true);
        Tensor b = Tensor::randn({6, 6}, rng, 1.0, true);
        Tensor h = gelu(matmul(a, b));
        backward(sum_all(mul(h, h)));
        std::vector<double> grads;
        for (size_t i = 0; i < a.numel(); i++) grads.push_back(a.grad_at(i));
        for (size_t i = 0; i < b.numel(); i++) grads.push_back(b.grad_at(i));
        return grads;
    };
    for (Precision p : {Precision::f32, Precision::f64}) {
        PrecisionGuard guard(p);
        auto g1 = run(99), g2 = run(99);
        REQUIRE(g1.size() == g2.size());
        for (size_t i = 0; i < g1.size(); i++) CHECK(g1[i] == g2[i]);
    }
}

TEST_CASE("no-grad scope records nothing") {
    Tensor x = Tensor::full({2}, 1.0, true);
    Tensor y;
    {
        NoGradGuard ng;
        y = mul(x, x);
    }
    CHECK_FALSE(y.requires_grad());
}
