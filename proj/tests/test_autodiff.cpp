#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "tsf/autodiff.hpp"

using namespace tsf;

namespace {

Tensor random_tensor(int rows, int cols, std::mt19937_64& rng, bool requires_grad = true) {
    Tensor t(rows, cols, requires_grad);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : t.data()) x = u(rng);
    return t;
}

} // namespace

TEST_CASE("matmul values") {
    Graph g(false);
    Tensor id2 = Tensor::from_rows({{1, 0}, {0, 1}});
    Tensor a = Tensor::from_rows({{3, 4}, {5, 6}});
    Tensor prod = matmul(g, id2, a);
    CHECK(prod.data() == a.data());

    Tensor row = Tensor::from_rows({{1, 2}});
    Tensor col = Tensor::from_rows({{3}, {4}});
    CHECK(matmul(g, row, col).at(0, 0) == doctest::Approx(11.0).epsilon(1e-15));

    CHECK_THROWS_AS(matmul(g, row, row), DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
    std::mt19937_64 rng(7);
    Tensor a = random_tensor(3, 3, rng);
    Tensor b = random_tensor(3, 3, rng);
    auto loss = [&](Graph& g) { return sum_all(g, matmul(g, a, b)); };
    auto report = grad_check(loss, {{"a", a}, {"b", b}}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("elementwise ops") {
    Graph g(false);
    std::mt19937_64 rng(3);
    Tensor x = random_tensor(2, 3, rng);
    Tensor zero = sub(g, x, x);
    for (double v : zero.data()) CHECK(v == 0.0);

    Tensor p = mul(g, Tensor::from_rows({{2, 3}}), Tensor::from_rows({{4, 5}}));
    CHECK(p.at(0, 0) == 8.0);
    CHECK(p.at(0, 1) == 15.0);

    CHECK_THROWS_AS(add(g, x, Tensor::zeros(3, 2)), DimensionError);
}

TEST_CASE("add gradient is all-ones") {
    Graph g(true);
    Tensor a(2, 2, true);
    Tensor b(2, 2, true);
    Tensor loss = sum_all(g, add(g, a, b));
    g.backward(loss);
    for (double v : a.grad()) CHECK(v == 1.0);
    for (double v : b.grad()) CHECK(v == 1.0);
}

TEST_CASE("activations at fixed points") {
    Graph g(false);
    Tensor zero = Tensor::zeros(1, 1);
    CHECK(sigmoid(g, zero).at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(tanh_act(g, zero).at(0, 0) == 0.0);
    CHECK(relu(g, Tensor::from_rows({{-2.0}})).at(0, 0) == 0.0);
    CHECK(relu(g, Tensor::from_rows({{2.5}})).at(0, 0) == 2.5);
}

TEST_CASE("sigmoid gradient matches finite differences") {
    std::mt19937_64 rng(11);
    Tensor w = random_tensor(2, 3, rng);
    auto loss = [&](Graph& g) { return sum_all(g, sigmoid(g, w)); };
    auto report = grad_check(loss, {{"w", w}}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax rows") {
    Graph g(false);
    Tensor same = Tensor::full(1, 4, 2.7);
    Tensor u = softmax_rows(g, same);
    for (int c = 0; c < 4; ++c) CHECK(u.at(0, c) == doctest::Approx(0.25).epsilon(1e-12));

    CHECK(softmax_rows(g, Tensor::from_rows({{42.0}})).at(0, 0) == 1.0);

    Tensor r = softmax_rows(g, Tensor::from_rows({{0.0, std::log(3.0)}}));
    CHECK(r.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.at(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to 1 and lie in (0,1)") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> dim(1, 9);
        Graph g(false);
        Tensor x = random_tensor(dim(rng), dim(rng), rng, false);
        for (auto& v : x.data()) v *= 50.0; // exercise the max-subtraction path
        Tensor y = softmax_rows(g, x);
        for (int r = 0; r < y.rows(); ++r) {
            double sum = 0.0;
            for (int c = 0; c < y.cols(); ++c) {
                CHECK(y.at(r, c) > 0.0);
                CHECK(y.at(r, c) <= 1.0);
                sum += y.at(r, c);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("concat/slice/transpose") {
    std::mt19937_64 rng(5);
    Graph g(false);
    Tensor a = random_tensor(3, 4, rng, false);
    Tensor b = random_tensor(2, 4, rng, false);

    Tensor one = concat_rows(g, {a});
    CHECK(one.data() == a.data());

    Tensor joined = concat_rows(g, {a, b});
    Tensor back = slice_rows(g, joined, a.rows(), b.rows());
    CHECK(back.data() == b.data()); // bitwise

    Tensor t = random_tensor(4, 7, rng, false);
    Tensor tt = transpose(g, transpose(g, t));
    CHECK(tt.data() == t.data());

    CHECK_THROWS_AS(slice_rows(g, a, 2, 5), DimensionError);
    CHECK_THROWS_AS(concat_rows(g, {a, Tensor::zeros(1, 5)}), DimensionError);
}

TEST_CASE("concat and slice gradients route to sources") {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor(2, 3, rng);
    Tensor b = random_tensor(4, 3, rng);
    auto loss = [&](Graph& g) {
        Tensor j = concat_rows(g, {a, b});
        return sum_all(g, mul(g, j, j));
    };
    auto report = grad_check(loss, {{"a", a}, {"b", b}}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("conv1d_time shapes and values") {
    Graph g(false);
    std::mt19937_64 rng(13);
    Tensor input = random_tensor(9, 4, rng, false);
    std::vector<Tensor> kernels;
    for (int j = 0; j < 16; ++j) kernels.push_back(random_tensor(3, 4, rng, false));
    Tensor bias = Tensor::zeros(1, 16);
    Tensor out = conv1d_time(g, input, kernels, bias, 3);
    CHECK(out.rows() == 3);
    CHECK(out.cols() == 16);

    // all-zero kernels annihilate
    std::vector<Tensor> zeros(4, Tensor::zeros(3, 4));
    Tensor z = conv1d_time(g, input, zeros, Tensor::zeros(1, 4), 3);
    for (double v : z.data()) CHECK(v == 0.0);

    // kernel equal to a block picks up the squared Frobenius norm
    Tensor block = random_tensor(3, 2, rng, false);
    Tensor fro = conv1d_time(g, block, {block}, Tensor::zeros(1, 1), 3);
    double expect = 0.0;
    for (double v : block.data()) expect += v * v;
    CHECK(fro.at(0, 0) == doctest::Approx(expect).epsilon(1e-12));

    CHECK_THROWS_AS(conv1d_time(g, random_tensor(8, 4, rng, false), kernels, bias, 3),
                    DimensionError);
}

TEST_CASE("conv1d_time gradients") {
    std::mt19937_64 rng(17);
    Tensor input = random_tensor(6, 3, rng);
    Tensor k0 = random_tensor(3, 3, rng);
    Tensor k1 = random_tensor(3, 3, rng);
    Tensor bias = random_tensor(1, 2, rng);
    auto loss = [&](Graph& g) {
        Tensor out = conv1d_time(g, input, {k0, k1}, bias, 3);
        return sum_all(g, mul(g, out, out));
    };
    auto report = grad_check(loss, {{"in", input}, {"k0", k0}, {"k1", k1}, {"bias", bias}}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("dropout") {
    std::mt19937_64 rng(19);
    Graph g(false);
    Tensor x = random_tensor(3, 3, rng, false);

    Tensor eval = dropout(g, x, 0.5, false, rng);
    CHECK(eval.data() == x.data());

    Tensor zero_rate = dropout(g, x, 0.0, true, rng);
    CHECK(zero_rate.data() == x.data());

    CHECK_THROWS_AS(dropout(g, x, 1.0, true, rng), ConfigError);

    // inverted dropout keeps the expectation: mean over 1e4 draws within 5%
    Tensor one = Tensor::ones(1, 1);
    double acc = 0.0;
    int draws = 10000;
    for (int i = 0; i < draws; ++i) acc += dropout(g, one, 0.5, true, rng).at(0, 0);
    CHECK(acc / draws == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("backward basics") {
    {
        Graph g(true);
        Tensor w(2, 2, true);
        Tensor loss = sum_all(g, w);
        g.backward(loss);
        for (double v : w.grad()) CHECK(v == 1.0);
    }
    {
        // fan-out accumulates
        Graph g(true);
        Tensor w = Tensor::full(2, 2, 0.5);
        w.set_requires_grad(true);
        Tensor y = add(g, w, w);
        Tensor loss = sum_all(g, y);
        g.backward(loss);
        for (double v : w.grad()) CHECK(v == 2.0);
    }
    {
        // loss = sum(W x): grad(W) columns proportional to x
        Graph g(true);
        Tensor w(2, 3, true);
        Tensor x = Tensor::from_rows({{2.0}, {-1.0}, {0.5}});
        Tensor loss = sum_all(g, matmul(g, w, x));
        g.backward(loss);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) CHECK(w.grad_at(r, c) == x.at(c, 0));
    }
    {
        Graph g(true);
        Tensor w(2, 2, true);
        Tensor not_scalar = add(g, w, w);
        CHECK_THROWS_AS(g.backward(not_scalar), DimensionError);
    }
}

TEST_CASE("grad_check basics") {
    std::mt19937_64 rng(29);
    Tensor w = random_tensor(3, 2, rng);
    auto loss = [&](Graph& g) { return sum_all(g, sigmoid(g, w)); };
    CHECK(grad_check(loss, {{"w", w}}, 1e-5).max_rel_error < 1e-6);

    // constant function: both gradients zero
    Tensor unused = random_tensor(2, 2, rng);
    auto const_loss = [&](Graph& g) {
        (void)g;
        return Tensor::full(1, 1, 3.0);
    };
    CHECK(grad_check(const_loss, {{"unused", unused}}, 1e-5).max_rel_error == 0.0);
}

TEST_CASE("layer_norm values and gradients") {
    std::mt19937_64 rng(31);
    Tensor x = random_tensor(4, 6, rng);
    Tensor gain = random_tensor(1, 6, rng);
    Tensor bias = random_tensor(1, 6, rng);
    {
        // unit gain, zero bias: each row has mean ~0
        Graph g(false);
        Tensor y = layer_norm(g, x, Tensor::ones(1, 6), Tensor::zeros(1, 6));
        for (int r = 0; r < y.rows(); ++r) {
            double mean = 0.0;
            for (int c = 0; c < 6; ++c) mean += y.at(r, c);
            CHECK(mean / 6 == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
    auto loss = [&](Graph& g) {
        Tensor y = layer_norm(g, x, gain, bias);
        return sum_all(g, mul(g, y, y));
    };
    auto report = grad_check(loss, {{"x", x}, {"gain", gain}, {"bias", bias}}, 1e-5);
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("every differentiable op passes randomized finite-difference checks") {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> dim(1, 5);
    for (int trial = 0; trial < 10; ++trial) {
        int m = dim(rng), k = dim(rng), n = dim(rng);
        Tensor a = random_tensor(m, k, rng);
        Tensor b = random_tensor(k, n, rng);
        Tensor c = random_tensor(m, k, rng);
        Tensor row = random_tensor(1, k, rng);
        auto loss = [&](Graph& g) {
            Tensor t1 = matmul(g, a, b);                   // m x n
            Tensor t2 = tanh_act(g, add(g, a, c));         // m x k
            Tensor t3 = softmax_rows(g, add_rowvec(g, t2, row));
            Tensor t4 = matmul(g, t3, b);                  // m x n
            Tensor t5 = mul(g, sigmoid(g, t1), t4);
            Tensor t6 = transpose(g, relu(g, sub(g, t5, t4)));
            Tensor t7 = concat_rows(g, {t6, scale(g, t6, -0.5)});
            return sum_all(g, mul(g, t7, t7));
        };
        auto report = grad_check(loss, {{"a", a}, {"b", b}, {"c", c}, {"row", row}}, 1e-5);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("forward evaluation is deterministic") {
    std::mt19937_64 rng(41);
    Tensor a = random_tensor(4, 4, rng, false);
    Tensor b = random_tensor(4, 4, rng, false);
    auto run = [&] {
        Graph g(false);
        return softmax_rows(g, matmul(g, sigmoid(g, a), b)).data();
    };
    CHECK(run() == run());
}
