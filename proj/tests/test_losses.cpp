#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "reid/losses.hpp"

using namespace reid;
using reid::testing::center_update_oracle;
using reid::testing::random_tensor;

using D = Tensor<double>;

namespace {

SoftmaxHead<double> random_head(Rng& rng, std::size_t dim, std::size_t n, double scale = 0.5) {
    SoftmaxHead<double> head;
    head.weights = random_tensor<double>(rng, {dim, n}, -scale, scale, true);
    head.bias = random_tensor<double>(rng, {n}, -scale, scale, true);
    return head;
}

}  // namespace

TEST_CASE("identification loss with a single class is zero") {
    Rng rng(1);
    auto head = random_head(rng, 3, 1);
    auto x = random_tensor<double>(rng, {4, 3});
    CHECK(identification_loss(head, x, {0, 0, 0, 0}).item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("identification loss with uniform logits equals ln N") {
    SoftmaxHead<double> head;
    head.weights = D::zeros({3, 4}, true);
    head.bias = D::zeros({4}, true);
    Rng rng(2);
    auto x = random_tensor<double>(rng, {5, 3});
    CHECK(identification_loss(head, x, {0, 1, 2, 3, 1}).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(std::log(4.0) == doctest::Approx(1.38629).epsilon(1e-4));
}

TEST_CASE("identification loss scalar case: logits (2,0), true class 0") {
    SoftmaxHead<double> head;
    head.weights = D::from_vector({1, 2}, {2.0, 0.0}, true);
    head.bias = D::zeros({2}, true);
    auto x = D::from_vector({1, 1}, {1.0});
    const double expected = std::log(1.0 + std::exp(-2.0));
    CHECK(identification_loss(head, x, {0}).item() == doctest::Approx(expected).epsilon(1e-10));
    CHECK(expected == doctest::Approx(0.12693).epsilon(1e-4));
}

TEST_CASE("identification loss rejects labels out of range") {
    Rng rng(3);
    auto head = random_head(rng, 3, 4);
    auto x = random_tensor<double>(rng, {2, 3});
    CHECK_THROWS_AS(identification_loss(head, x, {0, 4}), ContractError);
    CHECK_THROWS_AS(identification_loss(head, x, {-1, 0}), ContractError);
}

TEST_CASE("identification loss is nonnegative and matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed + 40);
        auto head = random_head(rng, 4, 3);
        auto x = random_tensor<double>(rng, {6, 4});
        std::vector<int> y{0, 1, 2, 0, 1, 2};
        CHECK(identification_loss(head, x, y).item() >= 0.0);
        auto fx = [&](const D& t) { return identification_loss(head, t, y); };
        CHECK(finite_diff_check<double>(fx, x, 1e-5) < 1e-4);
        auto fw = [&](const D& t) {
            SoftmaxHead<double> h2{t, head.bias};
            return identification_loss(h2, x, y);
        };
        CHECK(finite_diff_check<double>(fw, head.weights, 1e-5) < 1e-4);
        auto fb = [&](const D& t) {
            SoftmaxHead<double> h2{head.weights, t};
            return identification_loss(h2, x, y);
        };
        CHECK(finite_diff_check<double>(fb, head.bias, 1e-5) < 1e-4);
    }
}

TEST_CASE("center loss is zero when embeddings sit on their centers") {
    Rng rng(4);
    auto table = make_centers<double>(3, 2, 0.5);
    table.centers.values_mut() = {1, 2, 3, 4, 5, 6};
    auto x = D::from_vector({2, 2}, {3, 4, 1, 2});
    CHECK(center_loss(table, x, {1, 0}).item() == 0.0);
}

TEST_CASE("center loss single point: x=(1,0), c=(0,0) gives 0.5") {
    auto table = make_centers<double>(1, 2, 0.5);
    auto x = D::from_vector({1, 2}, {1.0, 0.0});
    CHECK(center_loss(table, x, {0}).item() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("center loss gradient is (x_i - c_{y_i}) / M") {
    Rng rng(5);
    auto table = make_centers<double>(4, 3, 0.5);
    for (auto& c : table.centers.values_mut()) c = rng.uniform(-1, 1);
    auto x = random_tensor<double>(rng, {6, 3}, -1, 1, true);
    std::vector<int> y{0, 3, 1, 2, 0, 1};
    backward(center_loss(table, x, y));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t d = 0; d < 3; ++d) {
            const double expect =
                (x.values()[i * 3 + d] - table.centers.values()[y[i] * 3 + d]) / 6.0;
            CHECK(x.grad()[i * 3 + d] == doctest::Approx(expect).epsilon(1e-10));
        }
    auto f = [&](const D& t) { return center_loss(table, t, y); };
    CHECK(finite_diff_check<double>(f, x, 1e-5) < 1e-4);
}

TEST_CASE("center loss never sends gradient to the centers") {
    Rng rng(6);
    auto table = make_centers<double>(3, 2, 0.5);
    auto x = random_tensor<double>(rng, {4, 2}, -1, 1, true);
    backward(center_loss(table, x, {0, 1, 2, 0}));
    CHECK_FALSE(table.centers.has_grad());
    CHECK_FALSE(table.centers.requires_grad());
}

TEST_CASE("update_centers leaves absent classes bit-unchanged") {
    Rng rng(7);
    auto table = make_centers<double>(5, 3, 0.5);
    for (auto& c : table.centers.values_mut()) c = rng.uniform(-1, 1);
    const auto before = table.centers.values();
    std::vector<double> x = {0.1, 0.2, 0.3, -0.4, 0.5, -0.6};
    update_centers(table, x, 2, {1, 3});
    for (std::size_t j : {std::size_t(0), std::size_t(2), std::size_t(4)})
        for (std::size_t d = 0; d < 3; ++d)
            CHECK(table.centers.values()[j * 3 + d] == before[j * 3 + d]);
    for (std::size_t j : {std::size_t(1), std::size_t(3)})
        CHECK(table.centers.values()[j * 3] != before[j * 3]);
}

TEST_CASE("update_centers single sample: c' = c - alpha/2 (c - x)") {
    auto table = make_centers<double>(2, 2, 0.5);
    table.centers.values_mut() = {1.0, 2.0, 5.0, 6.0};
    std::vector<double> x = {3.0, 0.0};
    update_centers(table, x, 1, {0});
    // delta = (c - x) / 2; c' = c - 0.5 * delta = c - 0.25 (c - x)
    CHECK(table.centers.values()[0] == doctest::Approx(1.0 - 0.25 * (1.0 - 3.0)).epsilon(1e-12));
    CHECK(table.centers.values()[1] == doctest::Approx(2.0 - 0.25 * (2.0 - 0.0)).epsilon(1e-12));
    CHECK(table.centers.values()[2] == 5.0);
}

TEST_CASE("update_centers two samples: delta = (2c - x1 - x2) / 3") {
    auto table = make_centers<double>(1, 2, 1.0);
    table.centers.values_mut() = {3.0, -1.0};
    std::vector<double> x = {1.0, 1.0, 2.0, 0.0};
    update_centers(table, x, 2, {0, 0});
    const double d0 = (2 * 3.0 - 1.0 - 2.0) / 3.0;
    const double d1 = (2 * -1.0 - 1.0 - 0.0) / 3.0;
    CHECK(table.centers.values()[0] == doctest::Approx(3.0 - d0).epsilon(1e-12));
    CHECK(table.centers.values()[1] == doctest::Approx(-1.0 - d1).epsilon(1e-12));
}

TEST_CASE("update_centers matches the brute-force oracle exactly") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed * 131 + 7);
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 8));
        const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform_int(0, 31));
        auto table = make_centers<double>(n, d, 0.25 + 0.75 * rng.uniform());
        for (auto& c : table.centers.values_mut()) c = rng.uniform(-2, 2);
        const auto before = table.centers.values();
        std::vector<double> x(m * d);
        for (auto& v : x) v = rng.uniform(-2, 2);
        std::vector<int> y(m);
        for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, static_cast<int>(n) - 1));
        const auto expect = center_update_oracle(before, n, d, x, m, y, table.alpha);
        update_centers(table, x, m, y);
        CHECK(table.centers.values() == expect);  // bitwise
    }
}

TEST_CASE("update_centers contracts a single-class batch toward its mean") {
    Rng rng(8);
    for (double alpha : {0.1, 0.5, 1.0}) {
        auto table = make_centers<double>(1, 4, alpha);
        for (auto& c : table.centers.values_mut()) c = rng.uniform(-3, 3);
        const std::size_t m = 5;
        std::vector<double> x(m * 4);
        for (auto& v : x) v = rng.uniform(-1, 1);
        std::vector<double> mean(4, 0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t d = 0; d < 4; ++d) mean[d] += x[i * 4 + d] / m;
        auto dist = [&]() {
            double s = 0;
            for (std::size_t d = 0; d < 4; ++d) {
                const double dd = table.centers.values()[d] - mean[d];
                s += dd * dd;
            }
            return std::sqrt(s);
        };
        const double before = dist();
        update_centers(table, x, m, std::vector<int>(m, 0));
        CHECK(dist() <= before);
    }
}

TEST_CASE("iterating update_centers on a fixed batch converges geometrically") {
    Rng rng(9);
    auto table = make_centers<double>(1, 3, 0.5);
    table.centers.values_mut() = {4.0, -4.0, 2.0};
    const std::size_t m = 4;
    std::vector<double> x(m * 3);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const std::vector<int> y(m, 0);
    double prev_delta = -1;
    double ratio_max = 0;
    for (int it = 0; it < 25; ++it) {
        const auto before = table.centers.values();
        update_centers(table, x, m, y);
        double delta = 0;
        for (std::size_t d = 0; d < 3; ++d) {
            const double dd = table.centers.values()[d] - before[d];
            delta += dd * dd;
        }
        delta = std::sqrt(delta);
        if (prev_delta > 1e-15) ratio_max = std::max(ratio_max, delta / prev_delta);
        prev_delta = delta;
    }
    CHECK(prev_delta < 1e-3);
    CHECK(ratio_max < 1.0);  // geometric decay
}

TEST_CASE("frw constraint values") {
    LossConfig cfg;
    cfg.beta = 0.001;
    cfg.c_target = 200.0;
    auto frw = make_frw<double>(16, 200.0);
    CHECK(frw_constraint(frw.w, cfg).item() == doctest::Approx(0.0).epsilon(1e-9));
    auto w0 = D::zeros({16}, true);
    CHECK(frw_constraint(w0, cfg).item() == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("frw constraint gradient is 2 beta (||w||^2/2 - C) w") {
    Rng rng(10);
    LossConfig cfg;
    cfg.beta = 0.001;
    cfg.c_target = 3.0;
    auto w = random_tensor<double>(rng, {6}, -2, 2, true);
    backward(frw_constraint(w, cfg));
    double half_sq = 0;
    for (double v : w.values()) half_sq += 0.5 * v * v;
    for (std::size_t i = 0; i < 6; ++i) {
        const double expect = 2.0 * cfg.beta * (half_sq - cfg.c_target) * w.values()[i];
        CHECK(w.grad()[i] == doctest::Approx(expect).epsilon(1e-9));
    }
    auto f = [&](const D& t) { return frw_constraint(t, cfg); };
    CHECK(finite_diff_check<double>(f, w, 1e-5) < 1e-4);
}

TEST_CASE("total loss composition") {
    Rng rng(11);
    auto head = random_head(rng, 4, 3);
    auto table = make_centers<double>(3, 4, 0.5);
    for (auto& c : table.centers.values_mut()) c = rng.uniform(-1, 1);
    auto frw = make_frw<double>(4, 2.0);
    auto x = random_tensor<double>(rng, {5, 4}, -1, 1, true);
    std::vector<int> y{0, 1, 2, 1, 0};
    LossConfig cfg;
    cfg.lambda = 0.01;
    cfg.beta = 0.001;
    cfg.c_target = 2.0;

    auto parts = total_loss(head, table, &frw, x, y, cfg);
    const double expect = parts.identification.item() + cfg.lambda * parts.center.item() +
                          parts.frw.item();
    CHECK(parts.total.item() == doctest::Approx(expect).epsilon(1e-12));

    // arithmetic of the combination formula itself
    const double combined = 1.0 + 0.01 * 2.0 + 3.0;
    CHECK(combined == doctest::Approx(4.02));
}

TEST_CASE("total loss with lambda 0 and no frw equals identification loss exactly") {
    Rng rng(12);
    auto head = random_head(rng, 3, 4);
    auto table = make_centers<double>(4, 3, 0.5);
    auto x = random_tensor<double>(rng, {4, 3}, -1, 1, true);
    std::vector<int> y{3, 2, 1, 0};
    LossConfig cfg;
    cfg.lambda = 0.0;
    auto parts = total_loss(head, table, static_cast<FRWLayer<double>*>(nullptr), x, y, cfg);
    CHECK(parts.total.item() == identification_loss(head, x, y).item());
}

TEST_CASE("backward through total loss leaves centers without gradient") {
    Rng rng(13);
    auto head = random_head(rng, 4, 3);
    auto table = make_centers<double>(3, 4, 0.5);
    auto frw = make_frw<double>(4, 2.0);
    auto x = random_tensor<double>(rng, {4, 4}, -1, 1, true);
    auto parts = total_loss(head, table, &frw, x, {0, 1, 2, 0}, LossConfig{0.01, 0.001, 2.0});
    backward(parts.total);
    CHECK_FALSE(table.centers.has_grad());
    CHECK(head.weights.has_grad());
    CHECK(head.bias.has_grad());
    CHECK(frw.w.has_grad());
    CHECK(x.has_grad());
}

TEST_CASE("gradient of total loss matches finite differences for every trainable input") {
    Rng rng(14);
    auto head = random_head(rng, 3, 4);
    auto table = make_centers<double>(4, 3, 0.5);
    for (auto& c : table.centers.values_mut()) c = rng.uniform(-1, 1);
    auto frw = make_frw<double>(3, 1.5);
    std::vector<int> y{1, 0, 3, 2, 1};
    auto x = random_tensor<double>(rng, {5, 3});
    LossConfig cfg{0.05, 0.01, 1.5};

    auto fx = [&](const D& t) { return total_loss(head, table, &frw, t, y, cfg).total; };
    CHECK(finite_diff_check<double>(fx, x, 1e-5) < 1e-4);
    auto fw = [&](const D& t) {
        SoftmaxHead<double> h2{t, head.bias};
        return total_loss(h2, table, &frw, x, y, cfg).total;
    };
    CHECK(finite_diff_check<double>(fw, head.weights, 1e-5) < 1e-4);
    auto fb = [&](const D& t) {
        SoftmaxHead<double> h2{head.weights, t};
        return total_loss(h2, table, &frw, x, y, cfg).total;
    };
    CHECK(finite_diff_check<double>(fb, head.bias, 1e-5) < 1e-4);
    auto ff = [&](const D& t) {
        FRWLayer<double> f2{t};
        return total_loss(head, table, &f2, x, y, cfg).total;
    };
    CHECK(finite_diff_check<double>(ff, frw.w, 1e-5) < 1e-4);
}

TEST_CASE("verification loss with zero head is ln 2") {
    Rng rng(15);
    VerifHead<double> vh;
    vh.weights = D::zeros({4, 2}, true);
    vh.bias = D::zeros({2}, true);
    auto x1 = random_tensor<double>(rng, {3, 4});
    auto x2 = random_tensor<double>(rng, {3, 4});
    CHECK(binary_verification_loss(x1, x2, {1, 0, 1}, vh).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("verification loss on identical pairs shrinks as the same-bias grows") {
    Rng rng(16);
    auto x = random_tensor<double>(rng, {4, 3});
    double prev = 1e9;
    for (double bias : {0.0, 1.0, 3.0, 8.0}) {
        VerifHead<double> vh;
        vh.weights = D::zeros({3, 2}, true);
        vh.bias = D::from_vector({2}, {0.0, bias}, true);
        const double loss = binary_verification_loss(x, x, {1, 1, 1, 1}, vh).item();
        CHECK(loss < prev);
        prev = loss;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("verification loss gradients match finite differences") {
    Rng rng(17);
    auto x1 = random_tensor<double>(rng, {4, 3});
    auto x2 = random_tensor<double>(rng, {4, 3});
    VerifHead<double> vh;
    vh.weights = random_tensor<double>(rng, {3, 2}, -0.5, 0.5, true);
    vh.bias = random_tensor<double>(rng, {2}, -0.5, 0.5, true);
    std::vector<int> same{1, 0, 0, 1};
    auto f1 = [&](const D& t) { return binary_verification_loss(t, x2, same, vh); };
    CHECK(finite_diff_check<double>(f1, x1, 1e-5) < 1e-4);
    auto f2 = [&](const D& t) { return binary_verification_loss(x1, t, same, vh); };
    CHECK(finite_diff_check<double>(f2, x2, 1e-5) < 1e-4);
    auto fw = [&](const D& t) {
        VerifHead<double> v2{t, vh.bias};
        return binary_verification_loss(x1, x2, same, v2);
    };
    CHECK(finite_diff_check<double>(fw, vh.weights, 1e-5) < 1e-4);
}

TEST_CASE("folding all-ones weights leaves the head unchanged") {
    Rng rng(18);
    auto head = random_head(rng, 4, 3);
    auto folded = fold_frw_into_softmax(head, D::full({4}, 1.0));
    CHECK(folded.weights.values() == head.weights.values());
    CHECK(folded.bias.values() == head.bias.values());
}

TEST_CASE("folded head on raw input reproduces the reweight-then-classify logits") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 100);
        const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform_int(0, 14));
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 8));
        auto head = random_head(rng, d, n, 1.0);
        auto w = random_tensor<double>(rng, {d}, -1.5, 1.5);
        auto x = random_tensor<double>(rng, {3, d}, -2, 2);

        auto folded = fold_frw_into_softmax(head, w);
        auto via_fold = head_logits(folded, x);
        FRWLayer<double> frw{D::from_vector({d}, w.values(), false)};
        auto via_frw = head_logits(head, frw_forward(frw, x));

        for (std::size_t i = 0; i < via_fold.numel(); ++i)
            CHECK(std::abs(via_fold.values()[i] - via_frw.values()[i]) < 1e-10);
        // argmax preserved exactly, per row
        for (std::size_t r = 0; r < 3; ++r) {
            std::size_t a1 = 0, a2 = 0;
            for (std::size_t j = 1; j < n; ++j) {
                if (via_fold.values()[r * n + j] > via_fold.values()[r * n + a1]) a1 = j;
                if (via_frw.values()[r * n + j] > via_frw.values()[r * n + a2]) a2 = j;
            }
            CHECK(a1 == a2);
        }
    }
}

TEST_CASE("fold leaves biases untouched and validates dimensions") {
    Rng rng(19);
    auto head = random_head(rng, 5, 4);
    auto w = random_tensor<double>(rng, {5});
    auto folded = fold_frw_into_softmax(head, w);
    CHECK(folded.bias.values() == head.bias.values());
    CHECK_THROWS_AS(fold_frw_into_softmax(head, D::zeros({4})), DimensionError);
}
