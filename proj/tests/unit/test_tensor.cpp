#include <cmath>

#include <doctest.h>

#include "rhnmt/errors.hpp"
#include "rhnmt/rng.hpp"
#include "rhnmt/tensor.hpp"
#include "support/fd_check.hpp"

using namespace rhnmt;
using rhnmt::testing::fd_check;

namespace {

TensorPtr random_tensor(std::size_t r, std::size_t c, Rng& rng, bool req_grad = true) {
    auto t = tensor(r, c, 0.0, req_grad);
    for (auto& v : t->data) v = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("matmul identity, hand-multiplied and zero cases") {
    auto eye = tensor(2, 2, {1, 0, 0, 1});
    auto v = tensor(2, 1, {3, 4});
    auto out = matmul(eye, v);
    CHECK(out->data == std::vector<double>{3, 4});

    auto a = tensor(1, 2, {1, 2});
    auto b = tensor(2, 1, {3, 4});
    CHECK(matmul(a, b)->data[0] == doctest::Approx(11.0).epsilon(1e-12));

    auto z = tensor(2, 3, 0.0);
    Rng rng(7);
    auto any = random_tensor(3, 2, rng, false);
    auto zz = matmul(z, any);
    for (double x : zz->data) CHECK(x == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    auto a = tensor(2, 3, 1.0);
    auto b = tensor(2, 2, 1.0);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("elementwise values") {
    auto x = tensor(1, 1, {0.0});
    CHECK(sigmoid(x)->data[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rhnmt::tanh(x)->data[0] == 0.0);
    auto a = tensor(1, 2, {1, 2});
    auto b = tensor(1, 2, {3, 4});
    CHECK(add(a, b)->data == std::vector<double>{4, 6});
    CHECK(sub(b, a)->data == std::vector<double>{2, 2});
    CHECK(mul(a, b)->data == std::vector<double>{3, 8});
    CHECK(scale(a, 2.5)->data == std::vector<double>{2.5, 5.0});
    CHECK_THROWS_AS(add(a, tensor(2, 1, 0.0)), ShapeError);
}

TEST_CASE("softmax cross entropy: uniform, masked and hand case") {
    auto logits = tensor(1, 4, 0.0);
    auto ce = softmax_cross_entropy(logits, {2}, {1});
    CHECK(ce->data[0] == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    auto masked = softmax_cross_entropy(logits, {2}, {0});
    CHECK(masked->data[0] == 0.0);

    auto two = tensor(1, 2, {2.0, 0.0});
    double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    CHECK(softmax_cross_entropy(two, {0}, {1})->data[0] ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.1269).epsilon(1e-3));

    CHECK_THROWS_AS(softmax_cross_entropy(two, {5}, {1}), IndexError);
    CHECK_THROWS_AS(softmax_cross_entropy(two, {-1}, {1}), IndexError);
}

TEST_CASE("backward: linear and tanh leaf gradients") {
    auto w = tensor(1, 3, {0.5, -1.0, 2.0}, true);
    auto x = tensor(1, 3, {1.0, 2.0, 3.0});
    {
        GraphScope graph;
        auto loss = sum_all(mul(w, x));
        backward(loss);
    }
    CHECK(w->grad == x->data);

    auto v = tensor(1, 1, {0.0}, true);
    {
        GraphScope graph;
        auto loss = rhnmt::tanh(v);
        backward(loss);
    }
    CHECK(v->grad[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar") {
    auto w = tensor(2, 2, 1.0, true);
    GraphScope graph;
    auto y = scale(w, 2.0);
    CHECK_THROWS_AS(backward(y), ContractError);
}

TEST_CASE("backward accumulates linearly") {
    Rng rng(11);
    auto w = random_tensor(2, 3, rng);
    auto x = random_tensor(3, 2, rng, false);

    auto run = [&](bool both) {
        w->ensure_grad();
        w->zero_grad();
        GraphScope graph;
        auto a = sum_all(matmul(w, x));
        auto b = sum_all(rhnmt::tanh(w));
        if (both) {
            backward(add(a, b));
        } else {
            backward(a);
            backward(b);
        }
        return w->grad;
    };
    auto separate = run(false);
    auto joint = run(true);
    for (std::size_t i = 0; i < separate.size(); ++i) {
        CHECK(separate[i] == doctest::Approx(joint[i]).epsilon(1e-12));
    }
}

TEST_CASE("repeated backward doubles leaf gradients") {
    auto w = tensor(1, 1, {0.3}, true);
    GraphScope graph;
    auto loss = rhnmt::tanh(rhnmt::tanh(w));
    backward(loss);
    double once = w->grad[0];
    backward(loss);
    CHECK(w->grad[0] == doctest::Approx(2.0 * once).epsilon(1e-12));
}

TEST_CASE("forward is deterministic for a fixed seed") {
    auto run = [] {
        Rng rng(123);
        auto a = random_tensor(3, 3, rng);
        auto b = random_tensor(3, 3, rng);
        auto out = matmul(sigmoid(a), rhnmt::tanh(b));
        return out->data;
    };
    CHECK(run() == run());
}

TEST_CASE("masked softmax: zeros on mask, sums to one, rejects empty rows") {
    auto scores = tensor(2, 3, {1.0, 2.0, 3.0, -1.0, 0.5, 0.25});
    std::vector<int> mask{1, 1, 0, 1, 1, 1};
    auto w = masked_softmax(scores, mask);
    CHECK(w->at(0, 2) == 0.0);
    CHECK(w->at(0, 0) + w->at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w->at(1, 0) + w->at(1, 1) + w->at(1, 2) == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : w->data) CHECK(v >= 0.0);

    std::vector<int> dead{0, 0, 0, 1, 1, 1};
    CHECK_THROWS_AS(masked_softmax(scores, dead), ContractError);
}

TEST_CASE("embedding rows and bounds") {
    auto table = tensor(3, 2, {1, 2, 3, 4, 5, 6});
    auto out = embedding_rows(table, {2, 0});
    CHECK(out->data == std::vector<double>{5, 6, 1, 2});
    CHECK_THROWS_AS(embedding_rows(table, {3}), IndexError);
}

TEST_CASE("gather_steps picks per-row time steps") {
    auto s0 = tensor(2, 2, {1, 1, 2, 2});
    auto s1 = tensor(2, 2, {3, 3, 4, 4});
    auto out = gather_steps({s0, s1}, {1, 0});
    CHECK(out->data == std::vector<double>{3, 3, 2, 2});
    CHECK_THROWS_AS(gather_steps({s0, s1}, {2, 0}), IndexError);
}

TEST_CASE("gradient check: every op") {
    Rng rng(2024);

    SUBCASE("add/sub/mul/scale/tanh/sigmoid") {
        auto a = random_tensor(3, 4, rng);
        auto b = random_tensor(3, 4, rng);
        auto weights = random_tensor(3, 4, rng, false);
        auto forward = [&] {
            auto mix = mul(add(a, b), sigmoid(sub(a, scale(b, 0.7))));
            return sum_all(mul(rhnmt::tanh(mix), weights));
        };
        CHECK(fd_check({a, b}, forward).ok);
    }
    SUBCASE("matmul") {
        auto a = random_tensor(2, 3, rng);
        auto b = random_tensor(3, 4, rng);
        auto weights = random_tensor(2, 4, rng, false);
        auto forward = [&] { return sum_all(mul(matmul(a, b), weights)); };
        CHECK(fd_check({a, b}, forward).ok);
    }
    SUBCASE("add_rowvec") {
        auto x = random_tensor(3, 4, rng);
        auto b = random_tensor(1, 4, rng);
        auto weights = random_tensor(3, 4, rng, false);
        auto forward = [&] { return sum_all(mul(add_rowvec(x, b), weights)); };
        CHECK(fd_check({x, b}, forward).ok);
    }
    SUBCASE("concat_cols and col") {
        auto a = random_tensor(3, 2, rng);
        auto b = random_tensor(3, 3, rng);
        auto weights = random_tensor(3, 1, rng, false);
        auto forward = [&] {
            auto cat = concat_cols({a, b});
            return sum_all(mul(col(cat, 3), weights));
        };
        CHECK(fd_check({a, b}, forward).ok);
    }
    SUBCASE("embedding_rows") {
        auto table = random_tensor(5, 3, rng);
        auto weights = random_tensor(4, 3, rng, false);
        auto forward = [&] {
            return sum_all(mul(embedding_rows(table, {1, 4, 1, 0}), weights));
        };
        CHECK(fd_check({table}, forward).ok);
    }
    SUBCASE("row_sum and colwise_scale") {
        auto x = random_tensor(3, 4, rng);
        auto s = random_tensor(3, 1, rng);
        auto weights = random_tensor(3, 4, rng, false);
        auto forward = [&] {
            auto scaled = colwise_scale(x, add(s, row_sum(x)));
            return sum_all(mul(scaled, weights));
        };
        CHECK(fd_check({x, s}, forward).ok);
    }
    SUBCASE("masked_softmax") {
        auto scores = random_tensor(3, 4, rng);
        std::vector<int> mask{1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 0};
        auto weights = random_tensor(3, 4, rng, false);
        auto forward = [&] { return sum_all(mul(masked_softmax(scores, mask), weights)); };
        CHECK(fd_check({scores}, forward).ok);
    }
    SUBCASE("softmax_cross_entropy") {
        auto logits = random_tensor(4, 5, rng);
        std::vector<int> targets{1, 4, 0, 2};
        std::vector<int> mask{1, 1, 0, 1};
        auto forward = [&] { return softmax_cross_entropy(logits, targets, mask); };
        CHECK(fd_check({logits}, forward).ok);
    }
    SUBCASE("sum_all") {
        auto x = random_tensor(2, 5, rng);
        auto forward = [&] { return sum_all(mul(x, x)); };
        CHECK(fd_check({x}, forward).ok);
    }
    SUBCASE("gather_steps") {
        auto s0 = random_tensor(3, 2, rng);
        auto s1 = random_tensor(3, 2, rng);
        auto s2 = random_tensor(3, 2, rng);
        auto weights = random_tensor(3, 2, rng, false);
        auto forward = [&] {
            return sum_all(mul(gather_steps({s0, s1, s2}, {2, 0, 1}), weights));
        };
        CHECK(fd_check({s0, s1, s2}, forward).ok);
    }
}

TEST_CASE("forward ops keep finite inputs finite") {
    Rng rng(5);
    auto a = random_tensor(4, 4, rng);
    for (auto& v : a->data) v *= 50.0;  // push the nonlinearities hard
    auto big = scale(a, 100.0);
    CHECK(sigmoid(big)->all_finite());
    CHECK(rhnmt::tanh(big)->all_finite());
    CHECK(softmax_cross_entropy(big, {0, 1, 2, 3}, {1, 1, 1, 1})->all_finite());
    std::vector<int> mask(16, 1);
    CHECK(masked_softmax(big, mask)->all_finite());
}
