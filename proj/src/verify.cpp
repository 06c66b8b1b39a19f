#include "reid/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "reid/evaluation.hpp"
#include "reid/layers.hpp"
#include "reid/losses.hpp"
#include "reid/rng.hpp"
#include "reid/tensor.hpp"
#include "reid/training.hpp"

namespace reid {

namespace {

using D = Tensor<double>;

D rand_t(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return D::from_vector(std::move(shape), std::move(v), false);
}

// Entries pairwise distinct and bounded away from zero, for pooling and
// kinked activations.
D separated_t(Rng& rng, Shape shape, double margin = 1e-2) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = (static_cast<double>(i) + 0.5) * 3.0 * margin + rng.uniform(0.0, margin);
        if (rng.uniform() < 0.5) v = -v;
        grid[i] = v;
    }
    rng.shuffle(grid.begin(), grid.end());
    return D::from_vector(std::move(shape), std::move(grid), false);
}

D readout(const D& t, const D& weights) { return reduce_sum(mul(t, weights)); }

struct ErrTracker {
    double worst = 0.0;
    void track(double e) { worst = std::max(worst, e); }
};

VerifySuite gradient_suite() {
    VerifySuite suite{"gradient-checks", 0.0, 1e-4, false, ""};
    ErrTracker err;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed * 7919 + 13);

        // primitives
        {
            auto a = rand_t(rng, {3, 4});
            auto b = rand_t(rng, {4, 2});
            auto w = rand_t(rng, {3, 2});
            err.track(finite_diff_check<double>(
                [&](const D& x) { return readout(matmul(x, b), w); }, a));
            err.track(finite_diff_check<double>(
                [&](const D& x) { return readout(matmul(a, x), w); }, b));
            auto u = rand_t(rng, {4, 3});
            auto v = rand_t(rng, {4, 3});
            auto row = rand_t(rng, {3});
            auto uw = rand_t(rng, {4, 3});
            for (EwOp op : {EwOp::add, EwOp::sub, EwOp::mul}) {
                err.track(finite_diff_check<double>(
                    [&](const D& x) { return readout(elementwise(op, x, v), uw); }, u));
                err.track(finite_diff_check<double>(
                    [&](const D& x) { return readout(elementwise(op, u, x), uw); }, row));
            }
            auto rw = rand_t(rng, {4});
            err.track(finite_diff_check<double>(
                [&](const D& x) { return readout(reduce_sum(x, 1), rw); }, u));
            auto cw = rand_t(rng, {3});
            err.track(finite_diff_check<double>(
                [&](const D& x) { return readout(reduce_mean(x, 0), cw); }, u));
            err.track(finite_diff_check<double>([&](const D& x) { return reduce_mean(x); }, u));
        }

        // layers
        {
            auto x = rand_t(rng, {2, 2, 3, 4});
            auto cw = rand_t(rng, {3, 2, 3, 3});
            auto cb = rand_t(rng, {3});
            auto up = rand_t(rng, {2, 3, 3, 4});
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(conv2d(t, cw, cb), up); }, x));
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(conv2d(x, t, cb), up); }, cw));
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(conv2d(x, cw, t), up); }, cb));

            auto px = separated_t(rng, {2, 2, 4, 4});
            auto pup = rand_t(rng, {2, 2, 2, 2});
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(maxpool_forward(t), pup); }, px));

            auto lx = separated_t(rng, {3, 5}, 1e-2);
            auto lup = rand_t(rng, {3, 5});
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(leaky_relu(t, 0.1), lup); }, lx));

            auto bn = make_batchnorm<double>(3);
            bn.gamma.values_mut() = {1.2, 0.8, 1.05};
            bn.beta.values_mut() = {0.3, -0.1, 0.2};
            auto bx = rand_t(rng, {4, 3, 2, 2});
            auto bup = rand_t(rng, {4, 3, 2, 2});
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(batchnorm_forward(bn, t), bup); }, bx));
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    BatchNormLayer<double> local = bn;
                    local.gamma = t;
                    return readout(batchnorm_forward(local, bx), bup);
                },
                bn.gamma));
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    BatchNormLayer<double> local = bn;
                    local.beta = t;
                    return readout(batchnorm_forward(local, bx), bup);
                },
                bn.beta));

            auto fw = rand_t(rng, {5, 3});
            auto fb = rand_t(rng, {3});
            auto fx = rand_t(rng, {4, 5});
            auto fup = rand_t(rng, {4, 3});
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(fc_forward(t, fb, fx), fup); }, fw));
            err.track(finite_diff_check<double>(
                [&](const D& t) { return readout(fc_forward(fw, fb, t), fup); }, fx));

            FRWLayer<double> frw{rand_t(rng, {5})};
            frw.w.set_requires_grad(true);
            auto fxx = rand_t(rng, {4, 5});
            auto fupp = rand_t(rng, {4, 5});
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    FRWLayer<double> local{t};
                    return readout(frw_forward(local, fxx), fupp);
                },
                frw.w));
        }

        // losses: identification, center, reweighting forward, norm
        // constraint, joint objective, verification baseline
        {
            SoftmaxHead<double> head{rand_t(rng, {4, 3}), rand_t(rng, {3})};
            auto x = rand_t(rng, {5, 4});
            std::vector<int> y{0, 1, 2, 1, 0};
            err.track(finite_diff_check<double>(
                [&](const D& t) { return identification_loss(head, t, y); }, x));
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    SoftmaxHead<double> h{t, head.bias};
                    return identification_loss(h, x, y);
                },
                head.weights));
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    SoftmaxHead<double> h{head.weights, t};
                    return identification_loss(h, x, y);
                },
                head.bias));

            auto table = make_centers<double>(3, 4, 0.5);
            for (auto& c : table.centers.values_mut()) c = rng.uniform(-1, 1);
            err.track(finite_diff_check<double>(
                [&](const D& t) { return center_loss(table, t, y); }, x));

            LossConfig cfg{0.02, 0.005, 1.7};
            auto w = rand_t(rng, {4});
            err.track(finite_diff_check<double>(
                [&](const D& t) { return frw_constraint(t, cfg); }, w));

            FRWLayer<double> frw{w};
            err.track(finite_diff_check<double>(
                [&](const D& t) { return total_loss(head, table, &frw, t, y, cfg).total; }, x));
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    FRWLayer<double> local{t};
                    return total_loss(head, table, &local, x, y, cfg).total;
                },
                w));

            VerifHead<double> vh{rand_t(rng, {4, 2}), rand_t(rng, {2})};
            auto x2 = rand_t(rng, {5, 4});
            std::vector<int> same{1, 0, 1, 0, 1};
            err.track(finite_diff_check<double>(
                [&](const D& t) { return binary_verification_loss(t, x2, same, vh); }, x));
            err.track(finite_diff_check<double>(
                [&](const D& t) {
                    VerifHead<double> local{t, vh.bias};
                    return binary_verification_loss(x, x2, same, local);
                },
                vh.weights));
        }
    }
    suite.max_error = err.worst;
    suite.pass = err.worst < suite.threshold;
    return suite;
}

VerifySuite fold_identity_suite() {
    VerifySuite suite{"fold-identity", 0.0, 1e-10, false, ""};
    double worst = 0.0;
    int argmax_mismatches = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(trial * 101 + 7);
        const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform_int(0, 30));
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 14));
        SoftmaxHead<double> head{rand_t(rng, {d, n}, -1.5, 1.5), rand_t(rng, {n}, -1.5, 1.5)};
        auto w = rand_t(rng, {d}, -2.0, 2.0);
        auto x = rand_t(rng, {4, d}, -2.0, 2.0);

        auto folded = fold_frw_into_softmax(head, w);
        auto via_fold = head_logits(folded, x);
        FRWLayer<double> frw{w};
        auto via_frw = head_logits(head, frw_forward(frw, x));
        for (std::size_t i = 0; i < via_fold.numel(); ++i)
            worst = std::max(worst, std::abs(via_fold.values()[i] - via_frw.values()[i]));
        for (std::size_t r = 0; r < 4; ++r) {
            std::size_t a1 = 0, a2 = 0;
            for (std::size_t j = 1; j < n; ++j) {
                if (via_fold.values()[r * n + j] > via_fold.values()[r * n + a1]) a1 = j;
                if (via_frw.values()[r * n + j] > via_frw.values()[r * n + a2]) a2 = j;
            }
            if (a1 != a2) ++argmax_mismatches;
        }
    }
    suite.max_error = worst;
    suite.pass = worst < suite.threshold && argmax_mismatches == 0;
    std::ostringstream os;
    os << "100 random (head, w, x) triples; argmax mismatches: " << argmax_mismatches;
    suite.detail = os.str();
    return suite;
}

VerifySuite center_update_suite() {
    VerifySuite suite{"center-update-oracle", 0.0, 0.0, false, ""};
    double worst = 0.0;
    bool absent_ok = true;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(trial * 131 + 11);
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 8));
        const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform_int(0, 7));
        const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform_int(0, 31));
        auto table = make_centers<double>(n, d, 0.25 + 0.75 * rng.uniform());
        for (auto& c : table.centers.values_mut()) c = rng.uniform(-2, 2);
        const auto before = table.centers.values();
        std::vector<double> x(m * d);
        for (auto& v : x) v = rng.uniform(-2, 2);
        std::vector<int> y(m);
        std::vector<bool> present(n, false);
        for (auto& v : y) {
            v = static_cast<int>(rng.uniform_int(0, static_cast<int>(n) - 1));
            present[static_cast<std::size_t>(v)] = true;
        }
        // direct per-class evaluation of the update rule
        std::vector<double> expect = before;
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> sum(d, 0.0);
            std::size_t count = 0;
            for (std::size_t i = 0; i < m; ++i) {
                if (static_cast<std::size_t>(y[i]) != j) continue;
                for (std::size_t k = 0; k < d; ++k) sum[k] += before[j * d + k] - x[i * d + k];
                ++count;
            }
            if (count == 0) continue;
            for (std::size_t k = 0; k < d; ++k)
                expect[j * d + k] = before[j * d + k] - table.alpha * (sum[k] / (1.0 + count));
        }
        update_centers(table, x, m, y);
        for (std::size_t i = 0; i < expect.size(); ++i)
            worst = std::max(worst, std::abs(table.centers.values()[i] - expect[i]));
        for (std::size_t j = 0; j < n; ++j) {
            if (present[j]) continue;
            for (std::size_t k = 0; k < d; ++k) {
                if (table.centers.values()[j * d + k] != before[j * d + k]) absent_ok = false;
            }
        }
    }
    suite.max_error = worst;
    suite.pass = worst == 0.0 && absent_ok;
    suite.detail = absent_ok ? "absent classes bit-unchanged"
                             : "absent classes were modified";
    return suite;
}

VerifySuite no_backprop_suite() {
    VerifySuite suite{"no-backprop-contract", 0.0, 0.0, false, ""};
    Rng rng(5);
    SoftmaxHead<double> head{rand_t(rng, {4, 3}), rand_t(rng, {3})};
    head.weights.set_requires_grad(true);
    head.bias.set_requires_grad(true);
    auto table = make_centers<double>(3, 4, 0.5);
    FRWLayer<double> frw{rand_t(rng, {4})};
    frw.w.set_requires_grad(true);
    auto x = rand_t(rng, {5, 4});
    x.set_requires_grad(true);
    std::vector<int> y{0, 1, 2, 1, 0};
    auto parts = total_loss(head, table, &frw, x, y, LossConfig{0.01, 0.001, 2.0});
    backward(parts.total);
    bool ok = !table.centers.has_grad() && head.weights.has_grad() && frw.w.has_grad();

    bool optimizer_rejects = false;
    auto cf = Tensor<float>::zeros({3, 4}, false);
    try {
        AdamOptimizer opt({{"centers", &cf, true, false}}, AdamConfig{});
    } catch (const ContractError&) {
        optimizer_rejects = true;
    }
    suite.pass = ok && optimizer_rejects;
    suite.max_error = suite.pass ? 0.0 : 1.0;
    suite.detail = "centers carry no gradient and are rejected by the optimizer";
    return suite;
}

VerifySuite cmc_oracle_suite() {
    VerifySuite suite{"cmc-oracle", 0.0, 0.0, false, ""};
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 1000; ++trial) {
        Rng rng(trial * 17 + 29);
        const auto g = static_cast<std::size_t>(rng.uniform_int(1, 8));
        const auto p = static_cast<std::size_t>(rng.uniform_int(1, 8));
        DistanceMatrix dm;
        dm.num_probe = p;
        dm.num_gallery = g;
        dm.values.resize(p * g);
        for (auto& v : dm.values) v = rng.uniform(0.0, 1.0);
        for (std::size_t j = 0; j < g; ++j) dm.gallery_ids.push_back(static_cast<int>(j));
        for (std::size_t i = 0; i < p; ++i)
            dm.probe_ids.push_back(static_cast<int>(rng.uniform_int(0, static_cast<int>(g) - 1)));
        if (g >= 2 && trial % 4 == 0) dm.values[0] = dm.values[1];  // exercise ties
        const auto curve = cmc_single_shot(dm, g);
        // rank by exhaustive counting, no sorting
        std::vector<std::size_t> hits(g, 0);
        for (std::size_t i = 0; i < p; ++i) {
            std::size_t match = 0;
            for (std::size_t j = 0; j < g; ++j)
                if (dm.gallery_ids[j] == dm.probe_ids[i]) match = j;
            const double dmatch = dm.at(i, match);
            std::size_t rank = 1;
            for (std::size_t j = 0; j < g; ++j) {
                if (j == match) continue;
                if (dm.at(i, j) < dmatch || (dm.at(i, j) == dmatch && j < match)) ++rank;
            }
            for (std::size_t k = rank - 1; k < g; ++k) ++hits[k];
        }
        for (std::size_t k = 0; k < g; ++k) {
            const double oracle = static_cast<double>(hits[k]) / static_cast<double>(p);
            worst = std::max(worst, std::abs(curve.mean_rates[k] - oracle));
        }
    }
    // hand-computed reference
    DistanceMatrix dm;
    dm.num_probe = dm.num_gallery = 3;
    dm.values = {0.1, 0.2, 0.3, 0.3, 0.4, 0.6, 0.9, 0.8, 0.7};
    dm.probe_ids = {0, 1, 2};
    dm.gallery_ids = {0, 1, 2};
    const auto hand = cmc_single_shot(dm, 2);
    const bool hand_ok = hand.rank(1) == 2.0 / 3.0 && hand.rank(2) == 1.0;
    suite.max_error = worst;
    suite.pass = worst == 0.0 && hand_ok;
    suite.detail = "1000 random galleries of size <= 8, exact equality";
    return suite;
}

}  // namespace

std::vector<VerifySuite> run_verification() {
    return {gradient_suite(), fold_identity_suite(), center_update_suite(), no_backprop_suite(),
            cmc_oracle_suite()};
}

bool all_passed(const std::vector<VerifySuite>& suites) {
    for (const auto& s : suites)
        if (!s.pass) return false;
    return true;
}

}  // namespace reid
