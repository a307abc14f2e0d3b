#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "sft/grad_check.hpp"
#include "sft/graph.hpp"

using namespace sft;
using sfttest::random_tensor;

namespace {

// grad_check driver for a single primitive: runs f through a fixed random
// projection and tanh so output gradients are non-trivial everywhere.
double check_primitive(const std::function<NodeId(Graph&, const std::vector<NodeId>&)>& op,
                       const std::vector<std::vector<int64_t>>& shapes, uint64_t seed) {
    PrecisionGuard wide(Precision::f64);
    ParamTree point;
    for (size_t i = 0; i < shapes.size(); ++i) {
        Tensor t = random_tensor(shapes[i], rng::derive(seed, i));
        t.requires_grad = true;
        point.add("p" + std::to_string(i), std::move(t));
    }
    auto eval = [&](const ParamTree& tree, ParamTree* grads) {
        Graph g;
        std::vector<NodeId> leaves;
        for (size_t i = 0; i < tree.size(); ++i)
            leaves.push_back(g.leaf_ref(tree.entry(i).tensor, grads != nullptr));
        NodeId out = op(g, leaves);
        Tensor w = random_tensor(g.value(out).shape, rng::derive(seed, 999), 0.7);
        NodeId loss = g.sum(g.mul(g.tanh(out), g.constant(std::move(w))));
        if (grads) {
            g.backward(loss);
            for (size_t i = 0; i < tree.size(); ++i)
                grads->entry(i).tensor = g.grad(leaves[i]);
        }
        return g.value(loss).data[0];
    };
    ParamTree analytic = point.zeros_like();
    eval(point, &analytic);
    return grad_check([&](const ParamTree& t) { return eval(t, nullptr); }, point, analytic);
}

}  // namespace

TEST_CASE("matmul forward examples") {
    Graph g;
    NodeId i2 = g.leaf(Tensor::from({2, 2}, {1, 0, 0, 1}));
    NodeId m = g.leaf(Tensor::from({2, 2}, {1, 2, 3, 4}));
    const Tensor& r = g.value(g.matmul(i2, m));
    CHECK(r.data == std::vector<double>{1, 2, 3, 4});

    NodeId sel = g.leaf(Tensor::from({1, 2}, {1, 0}));
    NodeId col = g.leaf(Tensor::from({2, 1}, {2, 5}));
    CHECK(g.value(g.matmul(sel, col)).data[0] == 2.0);

    NodeId bad = g.leaf(Tensor::zeros({3, 3}));
    CHECK_THROWS_WITH_AS(g.matmul(sel, bad), doctest::Contains("[1x2]"), ShapeError);
}

TEST_CASE("matmul gradient of sum equals column-sums of b") {
    PrecisionGuard wide(Precision::f64);
    Graph g;
    Tensor a = random_tensor({3, 4}, 11);
    a.requires_grad = true;
    Tensor b = random_tensor({4, 2}, 12);
    NodeId an = g.leaf_ref(a, true);
    NodeId bn = g.leaf(b);
    g.backward(g.sum(g.matmul(an, bn)));
    // d sum(AB) / dA[i,p] = sum_j B[p,j], independent of the row i.
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t p = 0; p < 4; ++p) {
            double want = b.at2(p, 0) + b.at2(p, 1);
            CHECK(g.grad(an).at2(i, p) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("layer_norm forward examples") {
    Graph g;
    // Column with mean 0, variance 1 is a fixed point under gamma=1, beta=0.
    NodeId x = g.leaf(Tensor::from({2, 1}, {1, -1}));
    NodeId gamma = g.leaf(Tensor::from({2}, {1, 1}));
    NodeId beta = g.leaf(Tensor::zeros({2}));
    const Tensor& y = g.value(g.layer_norm(x, gamma, beta, 1e-12));
    CHECK(y.at2(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(y.at2(1, 0) == doctest::Approx(-1.0).epsilon(1e-6));

    // gamma=0, beta=c collapses any column to the constant c.
    NodeId x2 = g.leaf(Tensor::from({3, 2}, {5, -2, 0.5, 9, 1, 3}));
    NodeId g0 = g.leaf(Tensor::zeros({3}));
    NodeId bc = g.leaf(Tensor::full({3}, 2.5));
    for (double v : g.value(g.layer_norm(x2, g0, bc)).data) CHECK(v == doctest::Approx(2.5));

    // [1,3] normalizes to [-1,1] under population variance.
    NodeId x3 = g.leaf(Tensor::from({2, 1}, {1, 3}));
    const Tensor& y3 = g.value(g.layer_norm(x3, gamma, beta, 1e-12));
    CHECK(y3.at2(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y3.at2(1, 0) == doctest::Approx(1.0).epsilon(1e-5));

    CHECK_THROWS_AS(g.layer_norm(x3, g0, beta), ShapeError);   // gamma length mismatch
    CHECK_THROWS_AS(g.layer_norm(x3, gamma, beta, 0.0), ContractError);
    CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);        // empty axis is unrepresentable
}

TEST_CASE("log_softmax forward examples") {
    Graph g;
    const Tensor& a = g.value(g.log_softmax(g.leaf(Tensor::from({2, 1}, {0, 0}))));
    CHECK(a.at2(0, 0) == doctest::Approx(std::log(0.5)));
    CHECK(a.at2(1, 0) == doctest::Approx(std::log(0.5)));

    const Tensor& b = g.value(g.log_softmax(g.leaf(Tensor::from({2, 1}, {1000, 0}))));
    CHECK(b.at2(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(b.at2(1, 0) == doctest::Approx(-1000.0));
    CHECK(b.all_finite());

    const Tensor& c = g.value(g.log_softmax(g.leaf(Tensor::from({3, 1}, {1, 2, 3}))));
    CHECK(std::exp(c.at2(0, 0)) == doctest::Approx(0.0900).epsilon(1e-3));
    CHECK(std::exp(c.at2(1, 0)) == doctest::Approx(0.2447).epsilon(1e-3));
    CHECK(std::exp(c.at2(2, 0)) == doctest::Approx(0.6652).epsilon(1e-3));
}

TEST_CASE("log_softmax columns exponentiate to 1") {
    for (uint64_t trial = 0; trial < 20; ++trial) {
        Graph g;
        Tensor x = random_tensor({5, 4}, rng::derive(404, trial), 25.0);
        const Tensor& y = g.value(g.log_softmax(g.leaf(std::move(x))));
        for (int64_t t = 0; t < 4; ++t) {
            double s = 0.0;
            for (int64_t v = 0; v < 5; ++v) s += std::exp(y.at2(v, t));
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("conv2d forward examples") {
    Graph g;
    NodeId ones = g.leaf(Tensor::full({1, 3, 3}, 1.0));
    NodeId kones = g.leaf(Tensor::full({1, 1, 3, 3}, 1.0));
    const Tensor& y = g.value(g.conv2d(ones, kones, 1, 0));
    CHECK(y.shape == std::vector<int64_t>{1, 1, 1});
    CHECK(y.data[0] == doctest::Approx(9.0));

    NodeId x = g.leaf(random_tensor({2, 5, 5}, 7));
    NodeId kzero = g.leaf(Tensor::zeros({3, 2, 3, 3}));
    const Tensor& z = g.value(g.conv2d(x, kzero, 1, 1));
    CHECK(z.shape == std::vector<int64_t>{3, 5, 5});
    for (double v : z.data) CHECK(v == 0.0);

    NodeId tiny = g.leaf(Tensor::full({1, 2, 2}, 1.0));
    CHECK_THROWS_AS(g.conv2d(tiny, kones, 1, 0), ShapeError);
}

TEST_CASE("conv2d matches direct-summation oracle") {
    Graph g;
    Tensor x = random_tensor({1, 6, 6}, 21);
    Tensor k = random_tensor({1, 1, 3, 3}, 22);
    const Tensor& y = g.value(g.conv2d(g.leaf(x), g.leaf(k), 2, 1));
    CHECK(y.shape == std::vector<int64_t>{1, 3, 3});
    for (int64_t ho = 0; ho < 3; ++ho)
        for (int64_t wo = 0; wo < 3; ++wo) {
            double acc = 0.0;
            for (int64_t i = 0; i < 3; ++i)
                for (int64_t j = 0; j < 3; ++j) {
                    int64_t h = ho * 2 + i - 1, w = wo * 2 + j - 1;
                    if (h < 0 || h >= 6 || w < 0 || w >= 6) continue;
                    acc += x.data[static_cast<size_t>(h * 6 + w)] *
                           k.data[static_cast<size_t>(i * 3 + j)];
                }
            CHECK(y.data[static_cast<size_t>(ho * 3 + wo)] == doctest::Approx(acc).epsilon(1e-6));
        }
}

TEST_CASE("backward basics") {
    Graph g;
    Tensor x = Tensor::scalar(3.0);
    x.requires_grad = true;
    NodeId xn = g.leaf_ref(x, true);
    NodeId y = g.mul(xn, xn);
    g.backward(y);
    CHECK(g.grad(xn).data[0] == doctest::Approx(6.0));

    // Non-scalar root is rejected.
    Graph g2;
    NodeId m = g2.leaf(random_tensor({2, 2}, 1));
    CHECK_THROWS_AS(g2.backward(m), ContractError);
}

TEST_CASE("backward of sum(layer_norm) gives T on beta") {
    Graph g;
    const int64_t T = 5;
    Tensor x = random_tensor({4, T}, 31);
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta = Tensor::zeros({4});
    NodeId bn = g.leaf_ref(beta, true);
    g.backward(g.sum(g.layer_norm(g.leaf(x), g.leaf_ref(gamma, true), bn)));
    // Each column contributes exactly 1 to every beta element.
    for (double v : g.grad(bn).data) CHECK(v == doctest::Approx(static_cast<double>(T)));
}

TEST_CASE("unreachable leaf gets zero gradient and tape is visited once") {
    Graph g;
    Tensor a = Tensor::scalar(2.0);
    Tensor b = Tensor::scalar(5.0);
    NodeId an = g.leaf_ref(a, true);
    NodeId bn = g.leaf_ref(b, true);
    NodeId y = g.mul(an, an);
    g.mul(bn, bn);  // disconnected from the root
    g.backward(y);
    CHECK(g.grad(bn).data[0] == 0.0);
    CHECK(g.backward_visits() == g.tape_length());
}

TEST_CASE("forward evaluation is deterministic") {
    auto run = [] {
        Graph g;
        NodeId x = g.leaf(random_tensor({6, 6}, 77));
        NodeId w = g.leaf(random_tensor({6, 6}, 78));
        return g.value(g.log_softmax(g.matmul(w, g.tanh(g.matmul(w, x))))).data;
    };
    CHECK(run() == run());
}

TEST_CASE("dropout is seeded and p=0 is identity") {
    Graph g;
    Tensor x = random_tensor({8, 8}, 51);
    NodeId xn = g.leaf(x);
    CHECK(g.dropout(xn, 0.0, 1) == xn);
    const Tensor& a = g.value(g.dropout(xn, 0.5, 99));
    const Tensor& b = g.value(g.dropout(xn, 0.5, 99));
    const Tensor& c = g.value(g.dropout(xn, 0.5, 100));
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
    size_t zeros = 0;
    for (double v : a.data) zeros += v == 0.0;
    CHECK(zeros > 8);
    CHECK(zeros < 56);
}

TEST_CASE("grad_check: exact for linear maps") {
    double err = check_primitive(
        [](Graph& g, const std::vector<NodeId>& in) { return g.scale(in[0], 1.0); }, {{4, 3}}, 1);
    CHECK(err <= 1e-9);
}

TEST_CASE("grad_check: every primitive passes at 1e-4 over random points") {
    struct Case {
        const char* name;
        std::function<NodeId(Graph&, const std::vector<NodeId>&)> op;
        std::vector<std::vector<int64_t>> shapes;
    };
    std::vector<Case> cases = {
        {"matmul", [](Graph& g, const std::vector<NodeId>& in) { return g.matmul(in[0], in[1]); },
         {{3, 4}, {4, 2}}},
        {"add", [](Graph& g, const std::vector<NodeId>& in) { return g.add(in[0], in[1]); },
         {{3, 3}, {3, 3}}},
        {"mul", [](Graph& g, const std::vector<NodeId>& in) { return g.mul(in[0], in[1]); },
         {{3, 3}, {3, 3}}},
        {"scale", [](Graph& g, const std::vector<NodeId>& in) { return g.scale(in[0], -1.7); },
         {{2, 5}}},
        {"add_col_broadcast",
         [](Graph& g, const std::vector<NodeId>& in) { return g.add_col_broadcast(in[0], in[1]); },
         {{3, 4}, {3}}},
        {"add_chan_broadcast",
         [](Graph& g, const std::vector<NodeId>& in) { return g.add_chan_broadcast(in[0], in[1]); },
         {{2, 3, 3}, {2}}},
        {"relu", [](Graph& g, const std::vector<NodeId>& in) { return g.relu(in[0]); }, {{4, 4}}},
        {"tanh", [](Graph& g, const std::vector<NodeId>& in) { return g.tanh(in[0]); }, {{4, 4}}},
        {"sigmoid", [](Graph& g, const std::vector<NodeId>& in) { return g.sigmoid(in[0]); },
         {{4, 4}}},
        {"layer_norm",
         [](Graph& g, const std::vector<NodeId>& in) { return g.layer_norm(in[0], in[1], in[2]); },
         {{5, 3}, {5}, {5}}},
        {"log_softmax",
         [](Graph& g, const std::vector<NodeId>& in) { return g.log_softmax(in[0]); }, {{5, 3}}},
        {"softmax_rows",
         [](Graph& g, const std::vector<NodeId>& in) { return g.softmax_rows(in[0]); }, {{3, 5}}},
        {"conv2d",
         [](Graph& g, const std::vector<NodeId>& in) { return g.conv2d(in[0], in[1], 2, 1); },
         {{2, 5, 5}, {3, 2, 3, 3}}},
        {"depthwise_conv1d",
         [](Graph& g, const std::vector<NodeId>& in) { return g.depthwise_conv1d(in[0], in[1]); },
         {{4, 6}, {4, 3}}},
        {"reshape", [](Graph& g, const std::vector<NodeId>& in) { return g.reshape(in[0], {6, 2}); },
         {{3, 4}}},
        {"transpose", [](Graph& g, const std::vector<NodeId>& in) { return g.transpose(in[0]); },
         {{3, 4}}},
        {"slice_rows",
         [](Graph& g, const std::vector<NodeId>& in) { return g.slice_rows(in[0], 1, 3); },
         {{4, 3}}},
        {"slice_cols",
         [](Graph& g, const std::vector<NodeId>& in) { return g.slice_cols(in[0], 0, 2); },
         {{3, 4}}},
        {"concat_rows",
         [](Graph& g, const std::vector<NodeId>& in) { return g.concat_rows({in[0], in[1]}); },
         {{2, 3}, {3, 3}}},
        {"concat_cols",
         [](Graph& g, const std::vector<NodeId>& in) { return g.concat_cols({in[0], in[1]}); },
         {{3, 2}, {3, 3}}},
        {"gather_cols",
         [](Graph& g, const std::vector<NodeId>& in) { return g.gather_cols(in[0], {0, 2, 2, 1}); },
         {{3, 4}}},
        {"dropout",
         [](Graph& g, const std::vector<NodeId>& in) { return g.dropout(in[0], 0.3, 42); },
         {{5, 5}}},
    };
    for (const auto& c : cases) {
        CAPTURE(c.name);
        for (uint64_t point = 0; point < 10; ++point) {
            double err = check_primitive(c.op, c.shapes, rng::derive(1000, point));
            CHECK_MESSAGE(err <= 1e-4, c.name, " point ", point, " rel err ", err);
        }
    }
}

TEST_CASE("grad_check flags a corrupted backward rule") {
    PrecisionGuard wide(Precision::f64);
    ParamTree point;
    Tensor t = random_tensor({4, 4}, 3);
    t.requires_grad = true;
    point.add("x", std::move(t));
    auto f = [](const ParamTree& tree) {
        Graph g;
        NodeId x = g.leaf_ref(tree.at("x"), false);
        return g.value(g.sum(g.tanh(x))).data[0];
    };
    ParamTree analytic = point.zeros_like();
    {
        Graph g;
        NodeId x = g.leaf_ref(point.at("x"), true);
        g.backward(g.sum(g.tanh(x)));
        analytic.at("x") = g.grad(x);
    }
    CHECK(grad_check(f, point, analytic) <= 1e-6);
    // +10% on one term of the analytic gradient must trip the checker.
    analytic.at("x").data[5] *= 1.10;
    CHECK(grad_check(f, point, analytic) > 1e-2);
}

TEST_CASE("grad_check rejects narrow precision and bad h") {
    ParamTree point;
    point.add("x", Tensor::scalar(1.0));
    ParamTree analytic = point.zeros_like();
    auto f = [](const ParamTree& t) { return t.at("x").data[0]; };
    {
        PrecisionGuard narrow(Precision::f32);
        CHECK_THROWS_AS(grad_check(f, point, analytic), ContractError);
    }
    PrecisionGuard wide(Precision::f64);
    GradCheckOptions opts;
    opts.h = 1e-2;
    CHECK_THROWS_AS(grad_check(f, point, analytic, opts), ContractError);
}
