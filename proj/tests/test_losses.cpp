#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "soilspec/losses.hpp"
#include "soilspec/metrics.hpp"
#include "soilspec/rng.hpp"

using namespace soilspec;

// Plain-loop reference implementations, kept independent of the library path.
namespace reference {

double mae(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::fabs(x[i] - y[i]);
    return s / double(x.size());
}

double mse(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s / double(x.size());
}

double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double r2(const std::vector<double>& x, const std::vector<double>& y) {
    const double yb = mean(y);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (y[i] - x[i]) * (y[i] - x[i]);
        den += (y[i] - yb) * (y[i] - yb);
    }
    return 1.0 - num / den;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double xb = mean(x), yb = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - xb) * (y[i] - yb);
        sxx += (x[i] - xb) * (x[i] - xb);
        syy += (y[i] - yb) * (y[i] - yb);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace reference

TEST_CASE("metrics on trivial inputs") {
    std::vector<double> same = {1.0, 2.0, 3.0};
    CHECK(mae(same, same) == 0.0);
    CHECK(mse(same, same) == 0.0);
    CHECK(rmse(same, same) == 0.0);
    CHECK(r2(same, same) == doctest::Approx(1.0));
    CHECK(pearson(same, same) == doctest::Approx(1.0));
}

TEST_CASE("r2 of the target-mean predictor is zero") {
    std::vector<double> target = {1.0, 4.0, -2.0, 7.0};
    std::vector<double> pred(target.size(), 2.5);  // mean of target
    CHECK(std::fabs(r2(pred, target)) <= 1e-12);
}

TEST_CASE("metrics hand-computed example") {
    std::vector<double> pred = {1.0, 2.0, 3.0};
    std::vector<double> target = {2.0, 2.0, 2.0};
    CHECK(mae(pred, target) == doctest::Approx(2.0 / 3.0));
    CHECK(mse(pred, target) == doctest::Approx(2.0 / 3.0));
    CHECK(rmse(pred, target) == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK_THROWS_AS((void)pearson(pred, target), std::invalid_argument);  // zero target variance
}

TEST_CASE("metrics agree with brute-force references on random pairs") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + rng.bounded(64);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-10.0, 10.0);
            y[i] = rng.uniform(-10.0, 10.0);
        }
        CHECK(mae(x, y) == doctest::Approx(reference::mae(x, y)).epsilon(1e-12));
        CHECK(mse(x, y) == doctest::Approx(reference::mse(x, y)).epsilon(1e-12));
        CHECK(r2(x, y) == doctest::Approx(reference::r2(x, y)).epsilon(1e-12));
        CHECK(pearson(x, y) == doctest::Approx(reference::pearson(x, y)).epsilon(1e-12));
        const double rm = rmse(x, y);
        CHECK(rm * rm == doctest::Approx(mse(x, y)).epsilon(1e-12));
        CHECK(r2(x, y) <= 1.0);
    }
}

TEST_CASE("pearson is invariant to positive affine transforms") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 3 + rng.bounded(40);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-5.0, 5.0);
            y[i] = rng.uniform(-5.0, 5.0);
        }
        const double a = rng.uniform(0.1, 4.0), b = rng.uniform(-3.0, 3.0);
        std::vector<double> xt(n);
        for (std::size_t i = 0; i < n; ++i) xt[i] = a * x[i] + b;
        CHECK(pearson(xt, y) == doctest::Approx(pearson(x, y)).epsilon(1e-9));
    }
}

TEST_CASE("l1 and l2 losses with gradients") {
    Tensor pred({2});
    Tensor target({2});
    target[0] = 1.0;
    target[1] = -1.0;
    CHECK(l1_loss(pred, target).value == doctest::Approx(1.0));
    CHECK(l2_loss(pred, target).value == doctest::Approx(1.0));

    Tensor p1({1}), t1({1});
    p1[0] = 2.0;
    const auto l2 = l2_loss(p1, t1);
    CHECK(l2.grad[0] == doctest::Approx(4.0));  // 2*(2-0)/1

    CHECK(l1_loss(target, target).value == 0.0);
    CHECK_THROWS_AS((void)l1_loss(Tensor{}, Tensor{}), std::invalid_argument);
}

TEST_CASE("quantile codec on 1..100") {
    std::vector<double> values(100);
    for (int i = 0; i < 100; ++i) values[i] = i + 1.0;
    const auto codec = QuantileCodec::fit(values, 10);
    CHECK(codec.n_bins() == 10);
    const double edge3 = codec.edges()[3];
    const auto t = codec.encode(edge3);
    CHECK(t.bin == 3);
    CHECK(t.offset == doctest::Approx(0.0));
}

TEST_CASE("quantile codec worked example B=4") {
    std::vector<double> values(1001);
    for (int i = 0; i <= 1000; ++i) values[i] = i / 1000.0;
    const auto codec = QuantileCodec::fit(values, 4);
    REQUIRE(codec.edges() == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    const auto t = codec.encode(0.375);
    CHECK(t.bin == 1);
    CHECK(t.offset == doctest::Approx(0.5));
    CHECK(codec.decode(t) == doctest::Approx(0.375));
}

TEST_CASE("codec round trip on random training values") {
    Rng rng(3);
    std::vector<double> values(1000);
    for (double& v : values) v = rng.uniform(-50.0, 200.0);
    const auto codec = QuantileCodec::fit(values, 10);
    for (double v : values) {
        const double back = codec.decode(codec.encode(v));
        CHECK(std::fabs(back - v) <= 1e-9 * std::max(1.0, std::fabs(v)));
    }
}

TEST_CASE("codec clamps out-of-range values") {
    std::vector<double> values(101);
    for (int i = 0; i <= 100; ++i) values[i] = double(i);
    const auto codec = QuantileCodec::fit(values, 10);
    const auto below = codec.encode(-5.0);
    CHECK(below.bin == 0);
    CHECK(below.offset == 0.0);
    const auto above = codec.encode(500.0);
    CHECK(above.bin == 9);
    CHECK(above.offset < 1.0);
    CHECK(above.offset == doctest::Approx(1.0));
}

TEST_CASE("codec encode is monotone") {
    Rng rng(11);
    std::vector<double> values(500);
    for (double& v : values) v = rng.normal() * 10.0;
    const auto codec = QuantileCodec::fit(values, 8);
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    auto prev = codec.encode(sorted[0]);
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const auto cur = codec.encode(sorted[i]);
        const bool le = prev.bin < cur.bin || (prev.bin == cur.bin && prev.offset <= cur.offset);
        CHECK(le);
        prev = cur;
    }
}

TEST_CASE("codec fit rejects too few distinct values") {
    std::vector<double> values = {1.0, 1.0, 2.0, 2.0, 3.0};
    CHECK_THROWS_AS((void)QuantileCodec::fit(values, 10), std::invalid_argument);
}

TEST_CASE("duplicate-heavy data collapses edges instead of failing") {
    // Mirrors variables where most mass sits on one value.
    std::vector<double> values;
    for (int i = 0; i < 600; ++i) values.push_back(0.0);
    for (int i = 1; i <= 400; ++i) values.push_back(double(i));
    const auto edges = quantile_edges(values, 10);
    CHECK(edges.size() < 11);
    CHECK(edges.size() >= 2);
    for (std::size_t i = 1; i < edges.size(); ++i) CHECK(edges[i - 1] < edges[i]);
}

TEST_CASE("hybrid loss closed forms") {
    // Uniform logits over B=4: cross entropy is ln 4.
    std::vector<double> logits(4, 0.7);
    const auto hl = hybrid_loss(logits, 0.3, {2, 0.3}, 1.0);
    CHECK(hl.value == doctest::Approx(std::log(4.0)));
    CHECK(hl.grad_offset == 0.0);

    // Confident correct head with matching offset: loss ~ 0.
    std::vector<double> sharp = {-100.0, 100.0, -100.0};
    const auto hl2 = hybrid_loss(sharp, 0.25, {1, 0.25}, 1.0);
    CHECK(hl2.value == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("hybrid loss gradient matches finite differences") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int bins = 3 + int(rng.bounded(6));
        std::vector<double> logits(bins);
        for (double& v : logits) v = rng.uniform(-2.0, 2.0);
        const HybridTarget target{int(rng.bounded(std::uint64_t(bins))), rng.uniform(0.05, 0.95)};
        double r_pred = rng.uniform(0.0, 1.0);
        if (std::fabs(r_pred - target.offset) < 0.02) r_pred += 0.05;  // stay off the |.| kink

        const auto hl = hybrid_loss(logits, r_pred, target, 1.0);
        const double eps = 1e-6;
        for (int i = 0; i < bins; ++i) {
            auto lp = logits, lm = logits;
            lp[i] += eps;
            lm[i] -= eps;
            const double num = (hybrid_loss(lp, r_pred, target, 1.0).value -
                                hybrid_loss(lm, r_pred, target, 1.0).value) /
                               (2 * eps);
            CHECK(hl.grad_logits[i] == doctest::Approx(num).epsilon(1e-4));
        }
        const double num_r = (hybrid_loss(logits, r_pred + eps, target, 1.0).value -
                              hybrid_loss(logits, r_pred - eps, target, 1.0).value) /
                             (2 * eps);
        CHECK(hl.grad_offset == doctest::Approx(num_r).epsilon(1e-4));
    }
}

TEST_CASE("hybrid inference decodes the worked example") {
    std::vector<double> values(1001);
    for (int i = 0; i <= 1000; ++i) values[i] = i / 1000.0;
    const auto codec = QuantileCodec::fit(values, 4);
    std::vector<double> logits = {0.0, 10.0, 0.0, 0.0};  // bin 1
    CHECK(hybrid_decode(logits, 0.5, codec) == doctest::Approx(0.375));
    // Offsets clamp into [0, 1).
    CHECK(hybrid_decode(logits, 7.0, codec) == doctest::Approx(0.5));
    CHECK(hybrid_decode(logits, -3.0, codec) == doctest::Approx(0.25));
}
