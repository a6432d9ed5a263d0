#include <doctest.h>

#include <cmath>

#include "damo/metrics.hpp"
#include "damo/rng.hpp"

using namespace damo;

namespace {

MaskedDepthPair random_pair(Rng& rng, int h, int w) {
    MaskedDepthPair p;
    p.pred = Tensor2(h, w, 0.0);
    p.gt = Tensor2(h, w, 0.0);
    p.mask = Tensor2(h, w, 0.0);
    for (std::size_t i = 0; i < p.pred.size(); ++i) {
        p.gt[i] = rng.uniform(0.5, 6.0);
        p.pred[i] = p.gt[i] * rng.uniform(0.6, 1.6);
        p.mask[i] = rng.uniform01() < 0.8 ? 1.0 : 0.0;
    }
    p.mask[0] = 1.0;
    return p;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("median lower-middle convention") {
    Tensor2 v(1, 4, 0.0);
    v[0] = 4.0;
    v[1] = 1.0;
    v[2] = 3.0;
    v[3] = 2.0;
    Tensor2 m(1, 4, 1.0);
    CHECK(masked_median(v, m) == 2.0);  // sorted 1 2 3 4, lower middle

    m[3] = 0.0;  // odd count: 1 3 4
    CHECK(masked_median(v, m) == 3.0);
}

TEST_CASE("median_scale ratios") {
    MaskedDepthPair same;
    same.pred = Tensor2(2, 2, 2.0);
    same.gt = Tensor2(2, 2, 2.0);
    same.mask = Tensor2(2, 2, 1.0);
    MedianScaled s1 = median_scale(same);
    CHECK(s1.scale == 1.0);
    CHECK(s1.pair.pred[0] == 2.0);

    MaskedDepthPair doubled = same;
    for (std::size_t i = 0; i < doubled.pred.size(); ++i) doubled.pred[i] = 2.0 * doubled.gt[i];
    MedianScaled s2 = median_scale(doubled);
    CHECK(s2.scale == 0.5);
    for (std::size_t i = 0; i < s2.pair.pred.size(); ++i) {
        CHECK(s2.pair.pred[i] == doctest::Approx(doubled.gt[i]).epsilon(1e-15));
    }

    MaskedDepthPair thirds;
    thirds.pred = Tensor2(1, 3, 1.0);
    thirds.gt = Tensor2(1, 3, 3.0);
    thirds.mask = Tensor2(1, 3, 1.0);
    CHECK(median_scale(thirds).scale == 3.0);

    MaskedDepthPair bad;
    bad.pred = Tensor2(1, 2, -1.0);
    bad.gt = Tensor2(1, 2, 2.0);
    bad.mask = Tensor2(1, 2, 1.0);
    CHECK_THROWS_AS(median_scale(bad), DomainError);
}

TEST_CASE("perfect prediction scores perfectly") {
    Rng rng(31);
    MaskedDepthPair p = random_pair(rng, 4, 6);
    p.pred = p.gt;
    MetricReport r = compute_metrics(p, true);
    CHECK(r.rmse == 0.0);
    CHECK(r.abs_rel == 0.0);
    CHECK(r.rmse_log == 0.0);
    CHECK(r.delta1 == 1.0);
    CHECK(r.delta2 == 1.0);
    CHECK(r.delta3 == 1.0);
    CHECK(r.scale == 1.0);
}

TEST_CASE("single-pixel worked example") {
    MaskedDepthPair p;
    p.pred = Tensor2(1, 1, 1.2);
    p.gt = Tensor2(1, 1, 1.0);
    p.mask = Tensor2(1, 1, 1.0);
    MetricReport r = compute_metrics(p, false);
    CHECK(r.abs_rel == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(r.rmse == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.delta1 == 1.0);  // 1.2 < 1.25
}

TEST_CASE("median scaling removes any global prediction scale") {
    Rng rng(32);
    MaskedDepthPair p = random_pair(rng, 5, 9);
    MetricReport base = compute_metrics(p, true);
    for (double k : {0.1, 2.0, 7.5, 1234.0}) {
        MaskedDepthPair scaled = p;
        for (std::size_t i = 0; i < scaled.pred.size(); ++i) scaled.pred[i] = k * p.pred[i];
        MetricReport r = compute_metrics(scaled, true);
        CHECK(std::abs(r.rmse - base.rmse) < 1e-12);
        CHECK(std::abs(r.abs_rel - base.abs_rel) < 1e-12);
        CHECK(std::abs(r.rmse_log - base.rmse_log) < 1e-12);
        CHECK(r.delta1 == base.delta1);
        CHECK(r.delta2 == base.delta2);
        CHECK(r.delta3 == base.delta3);
        CHECK(r.scale == doctest::Approx(base.scale / k).epsilon(1e-12));
    }

    // pred = 2 * gt with scaling on reproduces the perfect report
    MaskedDepthPair twice = p;
    for (std::size_t i = 0; i < twice.pred.size(); ++i) twice.pred[i] = 2.0 * p.gt[i];
    MetricReport r = compute_metrics(twice, true);
    CHECK(r.rmse < 1e-12);
    CHECK(r.delta1 == 1.0);
    CHECK(r.scale == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("delta thresholds are monotone") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        MaskedDepthPair p = random_pair(rng, 4, 8);
        MetricReport r = compute_metrics(p, rng.uniform01() < 0.5);
        CHECK(r.delta1 <= r.delta2);
        CHECK(r.delta2 <= r.delta3);
        CHECK(r.delta3 <= 1.0);
        CHECK(r.delta1 >= 0.0);
        CHECK(r.rmse >= 0.0);
        CHECK(r.abs_rel >= 0.0);
        CHECK(r.rmse_log >= 0.0);
    }
}

TEST_CASE("rmse_log pins the natural-log convention") {
    MaskedDepthPair p;
    p.gt = Tensor2(2, 3, 0.0);
    p.pred = Tensor2(2, 3, 0.0);
    p.mask = Tensor2(2, 3, 1.0);
    Rng rng(34);
    for (std::size_t i = 0; i < p.gt.size(); ++i) {
        p.gt[i] = rng.uniform(0.5, 4.0);
        p.pred[i] = std::exp(1.0) * p.gt[i];
    }
    MetricReport r = compute_metrics(p, false);
    CHECK(std::abs(r.rmse_log - 1.0) < 1e-12);
}

TEST_CASE("nonpositive prediction under mask is a domain error") {
    MaskedDepthPair p;
    p.pred = Tensor2(1, 2, -0.5);
    p.gt = Tensor2(1, 2, 1.0);
    p.mask = Tensor2(1, 2, 1.0);
    CHECK_THROWS_AS(compute_metrics(p, false), DomainError);
}

TEST_CASE("report averaging") {
    MetricReport a;
    a.rmse = 1.0;
    a.delta1 = 0.5;
    a.scale = 1.0;
    MetricReport b;
    b.rmse = 3.0;
    b.delta1 = 1.0;
    b.scale = 2.0;
    MetricReport avg = average_reports({a, b});
    CHECK(avg.rmse == 2.0);
    CHECK(avg.delta1 == 0.75);
    CHECK(avg.scale == 1.5);
    CHECK_THROWS_AS(average_reports({}), DegenerateInputError);
}

}  // TEST_SUITE
