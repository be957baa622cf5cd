#include <doctest.h>

#include <cmath>
#include <string>

#include "stylectrl/grad_check.hpp"
#include "stylectrl/rng.hpp"
#include "stylectrl/tensor.hpp"

using namespace stylectrl;

namespace {

Tensor random_tensor(Rng& rng, int rows, int cols, double lo = -2.0, double hi = 2.0) {
    Tensor t = Tensor::zeros(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("matmul basics") {
    Tensor eye = Tensor::from(2, 2, {1, 0, 0, 1});
    Tensor x = Tensor::from(2, 2, {3, -1, 2, 5});
    Tensor y = matmul(eye, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);

    Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
    Tensor b = Tensor::from(2, 1, {1, 1});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == doctest::Approx(3.0));
    CHECK(c.at(1, 0) == doctest::Approx(7.0));

    CHECK_THROWS_AS(matmul(a, Tensor::from(3, 1, {1, 1, 1})), DimensionError);
}

TEST_CASE("matmul gradient of sum") {
    Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
    a.set_requires_grad(true);
    Tensor b = Tensor::from(2, 1, {1, 1});
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = sum_all(matmul(a, b));
        tape.backward(loss);
    }
    REQUIRE(a.has_grad());
    for (float g : a.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("matmul_nt equals matmul with transposed operand") {
    Rng rng(7);
    Tensor a = random_tensor(rng, 3, 4);
    Tensor b = random_tensor(rng, 5, 4);
    Tensor bt = Tensor::zeros(4, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 4; ++j) bt.at(j, i) = b.at(i, j);
    Tensor lhs = matmul_nt(a, b);
    Tensor rhs = matmul(a, bt);
    for (std::size_t i = 0; i < lhs.size(); ++i)
        CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-5));
}

TEST_CASE("softmax values and invariances") {
    Tensor s = softmax(Tensor::row({0, 0}));
    CHECK(s.at(0, 0) == doctest::Approx(0.5));
    CHECK(s.at(0, 1) == doctest::Approx(0.5));

    // independent exp-normalize evaluation
    Tensor p = softmax(Tensor::row({1, 2, 3}));
    double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    CHECK(p.at(0, 0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-5));
    CHECK(p.at(0, 1) == doctest::Approx(std::exp(2.0) / z).epsilon(1e-5));
    CHECK(p.at(0, 2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-5));
    CHECK(p.at(0, 0) == doctest::Approx(0.0900).epsilon(1e-3));
    CHECK(p.at(0, 1) == doctest::Approx(0.2447).epsilon(1e-3));
    CHECK(p.at(0, 2) == doctest::Approx(0.6652).epsilon(1e-3));

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, 3, 6, -5.0, 5.0);
        const float c = static_cast<float>(rng.uniform(-3.0, 3.0));
        Tensor shifted = Tensor::zeros(3, 6);
        for (std::size_t i = 0; i < x.size(); ++i) shifted.data()[i] = x.data()[i] + c;
        Tensor p1 = softmax(x);
        Tensor p2 = softmax(shifted);
        for (std::size_t i = 0; i < p1.size(); ++i)
            CHECK(p1.data()[i] == doctest::Approx(p2.data()[i]).epsilon(1e-5));
        for (int r = 0; r < 3; ++r) {
            double rowsum = 0.0;
            for (int j = 0; j < 6; ++j) rowsum += p1.at(r, j);
            CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-6));
        }
        Tensor lp = log_softmax(x);
        for (std::size_t i = 0; i < lp.size(); ++i)
            CHECK(lp.data()[i] == doctest::Approx(std::log(p1.data()[i])).epsilon(1e-5));
    }
}

TEST_CASE("activation values") {
    CHECK(sigmoid(Tensor::scalar(0)).item() == doctest::Approx(0.5));
    CHECK(relu(Tensor::scalar(-3)).item() == 0.0f);
    CHECK(relu(Tensor::scalar(2)).item() == 2.0f);
    CHECK(sigmoid(Tensor::scalar(std::log(3.0f))).item() == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("layer_norm values") {
    Tensor gain = Tensor::row({1, 1, 1});
    Tensor bias = Tensor::row({0, 0, 0});
    Tensor flat = layer_norm(Tensor::row({2, 2, 2}), gain, bias);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(flat.at(0, j)) < 1e-3);

    Tensor g2 = Tensor::row({1, 1});
    Tensor b2 = Tensor::row({0, 0});
    Tensor y = layer_norm(Tensor::row({1, 3}), g2, b2);
    CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("embedding gather and soft variant") {
    Tensor table = Tensor::from(2, 2, {0, 2, 2, 0});
    Tensor soft = soft_embedding(Tensor::row({0.5f, 0.5f}), table);
    CHECK(soft.at(0, 0) == doctest::Approx(1.0));
    CHECK(soft.at(0, 1) == doctest::Approx(1.0));

    // one-hot soft equals the hard gather bitwise
    Rng rng(11);
    Tensor big = random_tensor(rng, 5, 3);
    for (int k = 0; k < 5; ++k) {
        Tensor onehot = Tensor::zeros(1, 5);
        onehot.at(0, k) = 1.0f;
        Tensor s = soft_embedding(onehot, big);
        Tensor h = embedding({k}, big);
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(s.data()[i] == h.data()[i]);
    }

    CHECK_THROWS_AS(embedding({7}, table), IndexError);
    CHECK_THROWS_AS(embedding({-1}, table), IndexError);
}

TEST_CASE("backward mechanics") {
    SUBCASE("root is a leaf") {
        Tensor x = Tensor::scalar(4.0f);
        x.set_requires_grad(true);
        Tape tape;
        tape.backward(x);
        CHECK(x.grad()[0] == 1.0f);
    }
    SUBCASE("sum of squares") {
        Tensor x = Tensor::row({1, 2});
        x.set_requires_grad(true);
        Tape tape;
        {
            TapeScope scope(tape);
            tape.backward(sum_all(mul(x, x)));
        }
        CHECK(x.grad()[0] == doctest::Approx(2.0));
        CHECK(x.grad()[1] == doctest::Approx(4.0));
    }
    SUBCASE("fan-out accumulates") {
        Tensor a = Tensor::scalar(3.0f);
        a.set_requires_grad(true);
        Tape tape;
        {
            TapeScope scope(tape);
            tape.backward(add(a, a));
        }
        CHECK(a.grad()[0] == doctest::Approx(2.0));
    }
    SUBCASE("non-scalar root rejected") {
        Tensor x = Tensor::row({1, 2});
        Tape tape;
        CHECK_THROWS_AS(tape.backward(x), ContractError);
    }
    SUBCASE("backward twice doubles leaf gradients") {
        Tensor x = Tensor::row({0.5f, -1.5f, 2.0f});
        x.set_requires_grad(true);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = sum_all(mul(x, x));
        }
        tape.backward(loss);
        std::vector<float> once = x.grad();
        tape.backward(loss);
        for (std::size_t i = 0; i < once.size(); ++i)
            CHECK(x.grad()[i] == doctest::Approx(2.0f * once[i]));
    }
}

TEST_CASE("grad_check accepts each primitive on random instances") {
    Rng rng(2024);
    auto run = [&](const std::string& name, int instances,
                   const std::function<Tensor(Rng&)>& make_input,
                   const std::function<Tensor(const Tensor&)>& f) {
        CAPTURE(name);
        for (int i = 0; i < instances; ++i) {
            CAPTURE(i);
            Tensor x = make_input(rng);
            const double err = grad_check(f, x);
            CHECK_MESSAGE(err <= 1e-3, name, " instance ", i, " err=", err);
        }
    };
    auto small = [&](Rng& r) {
        return random_tensor(r, 1 + r.uniform_int(8), 2 + r.uniform_int(7));
    };

    Rng wr(99);
    Tensor w = random_tensor(wr, 8, 8);
    auto norm_sum = [](const Tensor& t) {
        return scale(sum_all(t), 1.0f / static_cast<float>(t.size()));
    };
    run("matmul", 100, small, [&](const Tensor& x) {
        Tensor bb = Tensor::zeros(x.cols(), 3);
        for (int i = 0; i < x.cols(); ++i)
            for (int j = 0; j < 3; ++j) bb.at(i, j) = w.at(i % 8, j);
        return norm_sum(matmul(x, bb));
    });
    run("matmul_nt", 100, small, [&](const Tensor& x) {
        Tensor bb = Tensor::zeros(4, x.cols());
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < x.cols(); ++j) bb.at(i, j) = w.at(i, j % 8);
        Tensor y = scale(matmul_nt(x, bb), 0.25f);
        return norm_sum(mul(y, y));
    });
    run("softmax", 100, small, [](const Tensor& x) {
        Tensor p = softmax(x);
        return sum_all(mul(p, p));
    });
    run("log_softmax", 100, small, [&](const Tensor& x) {
        Tensor lp = log_softmax(x);
        std::vector<int> ids(static_cast<std::size_t>(x.rows()), 0);
        return norm_sum(gather_rows(lp, ids));
    });
    run("sigmoid", 100, small, [&](const Tensor& x) { return norm_sum(mul(sigmoid(x), sigmoid(x))); });
    run("tanh", 100, small, [&](const Tensor& x) { return norm_sum(mul(tanh_act(x), tanh_act(x))); });
    run("relu", 100,
        [&](Rng& r) {
            // keep inputs away from the kink
            Tensor x = small(r);
            for (std::size_t i = 0; i < x.size(); ++i)
                if (std::abs(x.data()[i]) < 0.1f) x.data()[i] += x.data()[i] >= 0 ? 0.2f : -0.2f;
            return x;
        },
        [](const Tensor& x) {
            return scale(sum_all(mul(relu(x), relu(x))), 1.0f / static_cast<float>(x.size()));
        });
    run("layer_norm", 100,
        [&](Rng& r) {
            // a ramp keeps row variance bounded away from zero so the
            // finite-difference probe stays well conditioned in float32
            Tensor x = random_tensor(r, 1 + r.uniform_int(4), 3 + r.uniform_int(6));
            for (int i = 0; i < x.rows(); ++i)
                for (int j = 0; j < x.cols(); ++j) x.at(i, j) += 0.8f * static_cast<float>(j);
            return x;
        },
        [&](const Tensor& x) {
            Tensor gain = Tensor::zeros(1, x.cols());
            Tensor bias = Tensor::zeros(1, x.cols());
            for (int j = 0; j < x.cols(); ++j) {
                gain.at(0, j) = 0.5f + 0.1f * static_cast<float>(j);
                bias.at(0, j) = -0.2f + 0.05f * static_cast<float>(j);
            }
            Tensor y = layer_norm(x, gain, bias);
            return scale(sum_all(mul(y, y)), 1.0f / static_cast<float>(y.size()));
        });
    run("soft_embedding", 100,
        [&](Rng& r) {
            Tensor x = random_tensor(r, 1, 4 + r.uniform_int(5), 0.05, 1.0);
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
            for (std::size_t i = 0; i < x.size(); ++i)
                x.data()[i] = static_cast<float>(x.data()[i] / s);
            return x;
        },
        [&](const Tensor& dist) {
            Tensor table = Tensor::zeros(dist.cols(), 5);
            for (int i = 0; i < table.rows(); ++i)
                for (int j = 0; j < 5; ++j) table.at(i, j) = w.at(i % 8, j);
            Tensor e = soft_embedding(dist, table);
            return scale(sum_all(mul(e, e)), 0.2f);
        });
    run("bce_with_logits", 100, small, [&](const Tensor& x) {
        std::vector<float> targets(x.size());
        for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = (i % 3 == 0) ? 1.0f : 0.0f;
        return bce_with_logits_mean(x, targets);
    });
    run("mean_rows+slice+concat", 100, small, [&](const Tensor& x) {
        Tensor top = row_slice(x, 0, 1);
        Tensor joined = concat_rows({top, x});
        return norm_sum(mul(mean_rows(joined), mean_rows(joined)));
    });
}

TEST_CASE("grad_check on softmax cross-entropy") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        Tensor logits = random_tensor(rng, 3, 7, -3.0, 3.0);
        std::vector<int> targets = {rng.uniform_int(7), rng.uniform_int(7), rng.uniform_int(7)};
        auto f = [&targets](const Tensor& x) {
            return scale(sum_all(gather_rows(log_softmax(x), targets)), -1.0f / 3.0f);
        };
        CHECK(grad_check(f, logits) <= 1e-3);
    }
}

TEST_CASE("grad_check on embedded-table path") {
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
        Tensor table = random_tensor(rng, 6, 4);
        std::vector<int> ids = {rng.uniform_int(6), rng.uniform_int(6)};
        auto f = [&ids](const Tensor& tab) {
            Tensor e = embedding(ids, tab);
            return sum_all(mul(e, e));
        };
        CHECK(grad_check(f, table) <= 1e-3);
    }
}

TEST_CASE("forward and backward stay finite on bounded random inputs") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor(rng, 4, 6, -5.0, 5.0);
        x.set_requires_grad(true);
        Tensor gain = random_tensor(rng, 1, 6, -5.0, 5.0);
        gain.set_requires_grad(true);
        Tensor bias = random_tensor(rng, 1, 6, -5.0, 5.0);
        Tensor w2 = random_tensor(rng, 3, 6, -5.0, 5.0);
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            Tensor h = layer_norm(tanh_act(x), gain, bias);
            Tensor s = softmax(matmul_nt(h, w2));
            loss = sum_all(mul(s, s));
            tape.backward(loss);
        }
        CHECK(all_finite(x));
        CHECK(all_finite(gain));
        CHECK(all_finite(loss));
    }
}
