#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace gfts;
using namespace gfts::testing;

namespace {

const AgeGrid kGrid = AgeGrid::single_years(0, 100, true);

Vector ages_vector(const AgeGrid& g) { return Eigen::Map<const Vector>(g.ages.data(), static_cast<Eigen::Index>(g.size())); }

/// Isotonic regression by the max-min formula, O(n^3).
Vector isotonic_oracle(const Vector& y, const Vector& w) {
    const auto n = y.size();
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j <= i; ++j) {
            double inner = std::numeric_limits<double>::infinity();
            for (Eigen::Index k = i; k < n; ++k) {
                const double avg = w.segment(j, k - j + 1).dot(y.segment(j, k - j + 1)) / w.segment(j, k - j + 1).sum();
                inner = std::min(inner, avg);
            }
            best = std::max(best, inner);
        }
        out(i) = best;
    }
    return out;
}

SmoothingOptions unconstrained(double lambda) {
    SmoothingOptions o;
    o.monotone = false;
    o.lambda_grid = {lambda};
    return o;
}

}  // namespace

TEST(VarianceWeights, DirectFormula) {
    Vector m(1), e(1);
    m << 0.5;
    e << 100.0;
    EXPECT_DOUBLE_EQ(variance_weights(m, e)(0), 100.0);
}

TEST(VarianceWeights, VanishesForRareDeaths) {
    Vector e = Vector::Constant(4, 1000.0);
    Vector m(4);
    m << 1e-2, 1e-4, 1e-6, 1e-8;
    const Vector w = variance_weights(m, e);
    for (int i = 1; i < 4; ++i) EXPECT_LT(w(i), w(i - 1));
    EXPECT_LT(w(3), 1e-4);
}

TEST(VarianceWeights, MatchesScalarLoop) {
    Rng rng(4);
    Vector m(200), e(200);
    for (int i = 0; i < 200; ++i) {
        m(i) = rng.uniform(1e-5, 0.6);
        e(i) = rng.uniform(1.0, 1e5);
    }
    m(7) = std::numeric_limits<double>::quiet_NaN();
    e(9) = 0.0;
    const Vector w = variance_weights(m, e);
    for (int i = 0; i < 200; ++i) {
        if (i == 7 || i == 9) {
            EXPECT_EQ(w(i), 0.0);
            continue;
        }
        EXPECT_EQ(w(i), m(i) * e(i) / (1.0 - m(i)));
    }
}

TEST(VarianceWeights, ClampsRateAtOne) {
    int warnings = 0;
    ScopedWarningSink sink([&](std::string_view) { ++warnings; });
    Vector m(1), e(1);
    m << 1.2;
    e << 10.0;
    const double w = variance_weights(m, e)(0);
    EXPECT_TRUE(std::isfinite(w));
    EXPECT_NEAR(w / ((1.0 - 1e-10) * 10.0 / 1e-10), 1.0, 1e-6);
    EXPECT_EQ(warnings, 1);
}

TEST(Isotonic, MatchesMaxMinOracle) {
    Rng rng(12);
    for (int rep = 0; rep < 50; ++rep) {
        const Vector y = random_vector(15, rng);
        Vector w(15);
        for (int i = 0; i < 15; ++i) w(i) = rng.uniform(0.1, 3.0);
        EXPECT_LE((isotonic_increasing(y, w) - isotonic_oracle(y, w)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(SmoothCurve, SmoothInputReproduced) {
    const Vector x = ages_vector(kGrid);
    const Vector y = (-9.0 + 0.05 * x.array() + 0.0004 * x.array().square()).matrix();
    const auto c = smooth_curve(y, Vector::Ones(x.size()), kGrid);
    EXPECT_LE((c.values - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SmoothCurve, MaskedCellFilledOnLine) {
    const Vector x = ages_vector(kGrid);
    Vector y = (-8.0 + 0.07 * x.array()).matrix();
    Vector w = Vector::Ones(x.size());
    const double truth = y(37);
    y(37) = std::numeric_limits<double>::quiet_NaN();
    w(37) = 0.0;
    const auto c = smooth_curve(y, w, kGrid);
    EXPECT_NEAR(c.values(37), truth, 1e-4);
    EXPECT_TRUE(c.values.allFinite());
}

TEST(SmoothCurve, OldAgeDipMadeMonotone) {
    const Vector x = ages_vector(kGrid);
    Vector y = (-9.0 + 0.09 * x.array()).matrix();
    for (Eigen::Index i = 80; i <= 90; ++i) y(i) -= 0.8 * std::sin((x(i) - 80.0) / 10.0 * 3.14159265358979);
    const Vector w = Vector::Ones(x.size());

    SmoothingOptions free;
    free.monotone = false;
    const auto u = smooth_curve(y, w, kGrid, free);
    bool violates = false;
    for (Eigen::Index i = 66; i < x.size(); ++i) violates |= u.values(i) < u.values(i - 1) - 1e-9;
    ASSERT_TRUE(violates);

    const auto c = smooth_curve(y, w, kGrid);
    for (Eigen::Index i = 66; i < x.size(); ++i) EXPECT_GE(c.values(i), c.values(i - 1) - 1e-12) << i;
    EXPECT_EQ(c.lambda, u.lambda);
    const Vector oracle = isotonic_oracle(u.values.tail(36), w.tail(36));
    EXPECT_LE((c.values.tail(36) - oracle).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((c.values.head(65) - u.values.head(65)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SmoothCurve, PolynomialNullSpaceExactForAnyLambda) {
    const Vector x = ages_vector(kGrid);
    Rng rng(2);
    Vector w(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) w(i) = rng.uniform(0.5, 5.0);
    const Vector line = (-7.0 + 0.03 * x.array()).matrix();
    for (double lambda : {1e-4, 1.0, 1e4}) {
        const auto c = smooth_curve(line, w, kGrid, unconstrained(lambda));
        EXPECT_LE((c.values - line).cwiseAbs().maxCoeff(), 1e-8) << lambda;
    }
    SmoothingOptions third = unconstrained(1e4);
    third.penalty_order = 3;
    const Vector quad = (-7.0 + 0.03 * x.array() + 2e-4 * x.array().square()).matrix();
    const auto c = smooth_curve(quad, w, kGrid, third);
    EXPECT_LE((c.values - quad).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SmoothCurve, LambdaInvariantToWeightScale) {
    const Vector x = ages_vector(kGrid);
    Rng rng(8);
    for (int rep = 0; rep < 5; ++rep) {
        Vector y = (-9.0 + 0.09 * x.array()).matrix() + random_vector(x.size(), rng, 0.1);
        Vector w(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) w(i) = rng.uniform(1.0, 100.0);
        const auto a = smooth_curve(y, w, kGrid);
        const auto b = smooth_curve(y, (37.5 * w).eval(), kGrid);
        EXPECT_EQ(a.lambda, b.lambda);
    }
}

TEST(SmoothCurve, RssNonIncreasingAsLambdaDecreases) {
    const Vector x = ages_vector(kGrid);
    Rng rng(21);
    const Vector y = (-9.0 + 0.09 * x.array() + 0.3 * (x.array() / 9.0).sin()).matrix() + random_vector(x.size(), rng, 0.1);
    Vector w(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) w(i) = rng.uniform(1.0, 10.0);
    double prev = std::numeric_limits<double>::infinity();
    auto grid = default_lambda_grid();
    for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
        const auto c = smooth_curve(y, w, kGrid, unconstrained(*it));
        const double rss = (w.array() * (y - c.values).array().square()).sum();
        EXPECT_LE(rss, prev * (1.0 + 1e-9)) << *it;
        prev = rss;
    }
}

TEST(SmoothCurve, TooFewPointsOrAllMissing) {
    const Vector nan = Vector::Constant(101, std::numeric_limits<double>::quiet_NaN());
    EXPECT_THROW(smooth_curve(nan, Vector::Zero(101), kGrid), ComputationError);
    Vector y = Vector::Zero(101), w = Vector::Zero(101);
    w(3) = w(50) = w(70) = 1.0;
    EXPECT_THROW(smooth_curve(y, w, kGrid), ComputationError);
}

TEST(SmoothPanel, NoiselessSyntheticReproduced) {
    SyntheticSpec spec;
    spec.n_years = 6;
    spec.noise_level = 0.0;
    spec.layout = {"N", {2}, false};
    const auto syn = synthesize_panel(spec, 17);
    const auto sm = smooth_panel(syn.panel);
    for (const auto& id : syn.panel.order) {
        const Matrix raw = syn.panel.at(id).rate.array().log().matrix();
        EXPECT_LE((sm.at(id).values - raw).cwiseAbs().maxCoeff(), 1e-6) << id;
    }
}

TEST(SmoothPanel, ReducesOldAgeVariance) {
    const Vector x = ages_vector(kGrid);
    const Vector truth = (-9.5 + 0.085 * x.array()).exp().min(0.8).matrix();
    Vector expo(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) expo(i) = 2e4 * std::exp(-std::pow(x(i) / 85.0, 4.0)) + 50.0;
    const int reps = 50;
    Matrix raw(reps, x.size()), fit(reps, x.size());
    for (int r = 0; r < reps; ++r) {
        Rng rng(derive_seed(99, r));
        Vector rate(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) rate(i) = std::max(rng.poisson(truth(i) * expo(i)), 1.0) / expo(i);
        raw.row(r) = rate.array().log().matrix().transpose();
        fit.row(r) = smooth_curve(raw.row(r).transpose(), variance_weights(rate, expo), kGrid).values.transpose();
    }
    const auto var = [](const Matrix& m, Eigen::Index i) {
        return (m.col(i).array() - m.col(i).mean()).square().sum() / static_cast<double>(m.rows() - 1);
    };
    for (Eigen::Index i = 90; i < x.size(); ++i) EXPECT_LT(var(fit, i), var(raw, i)) << "age " << i;
}

TEST(SmoothPanel, YearsSmoothedIndependently) {
    SyntheticSpec spec;
    spec.n_years = 4;
    spec.single_series = true;
    const auto syn = synthesize_panel(spec, 3);
    const auto all = smooth_panel(syn.panel);
    const auto id = syn.panel.order.front();
    for (std::size_t t = 0; t < 4; ++t) {
        MortalityPanel one;
        one.grid = syn.panel.grid;
        one.years = {syn.panel.years[t]};
        const auto& s = syn.panel.at(id);
        const auto ti = static_cast<Eigen::Index>(t);
        one.add(id, {s.rate.middleRows(ti, 1), s.exposure.middleRows(ti, 1), s.deaths.middleRows(ti, 1),
                     s.observed.middleRows(ti, 1)});
        const auto single = smooth_panel(one);
        EXPECT_EQ(single.at(id).values.row(0), all.at(id).values.row(ti));
    }
}

TEST(SmoothPanel, DeterministicAcrossThreadCounts) {
    SyntheticSpec spec;
    spec.n_years = 5;
    const auto syn = synthesize_panel(spec, 3);
    const auto a = smooth_panel(syn.panel, {}, 1);
    const auto b = smooth_panel(syn.panel, {}, 3);
    for (const auto& id : syn.panel.order) EXPECT_EQ(a.at(id).values, b.at(id).values);
}

TEST(SmoothPanel, ErrorNamesSeriesAndYear) {
    SyntheticSpec spec;
    spec.n_years = 3;
    spec.single_series = true;
    auto syn = synthesize_panel(spec, 3);
    auto& s = syn.panel.series.begin()->second;
    s.observed.row(1).setConstant(false);
    try {
        smooth_panel(syn.panel);
        FAIL();
    } catch (const ComputationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(syn.panel.order.front().str()), std::string::npos) << msg;
        EXPECT_NE(msg.find(std::to_string(syn.panel.years[1])), std::string::npos) << msg;
    }
}
