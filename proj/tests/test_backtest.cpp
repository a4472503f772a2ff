#include "helpers.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace gfts;
using namespace gfts::testing;

namespace {

SyntheticPanel small_panel(std::uint64_t seed, bool by_sex = true, std::size_t years = 20) {
    SyntheticSpec spec;
    spec.layout = {"N", {1, 2}, by_sex};
    spec.grid = AgeGrid::single_years(0, 30, true);
    spec.first_year = 1990;
    spec.n_years = years;
    spec.noise_level = 0.3;
    return synthesize_panel(spec, seed);
}

BacktestConfig quick_config(int first_train_end, int H) {
    BacktestConfig cfg;
    cfg.first_train_end = first_train_end;
    cfg.H = H;
    cfg.pipeline.model.scorecast.max_p = 1;
    cfg.pipeline.model.scorecast.max_q = 1;
    cfg.pipeline.model.scorecast.max_d = 1;
    cfg.pipeline.intervals.B = 100;
    cfg.models = {ForecastMethod::Dmfts};
    cfg.methods = {ReconcileMethod::Base};
    return cfg;
}

Matrix random_fixture(Eigen::Index r, Eigen::Index c, Rng& rng) { return random_matrix(r, c, rng); }

}  // namespace

TEST(Rmsfe, ZeroAndConstantOffset) {
    Rng rng(1);
    const Matrix a = random_fixture(4, 7, rng);
    EXPECT_EQ(rmsfe(a, a), 0.0);
    EXPECT_NEAR(rmsfe(a, (a.array() + 0.05).matrix()), 0.05, 1e-15);
    EXPECT_NEAR(rmsfe(a, (a.array() - 0.05).matrix()), 0.05, 1e-15);
}

TEST(Rmsfe, MatchesDoubleSum) {
    Rng rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix a = random_fixture(2, 3, rng), f = random_fixture(2, 3, rng);
        double s = 0.0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) s += (a(i, j) - f(i, j)) * (a(i, j) - f(i, j));
        EXPECT_NEAR(rmsfe(a, f), std::sqrt(s / 6.0), 1e-12);
        EXPECT_GE(rmsfe(a, f), 0.0);
    }
    EXPECT_THROW(rmsfe(Matrix::Zero(2, 3), Matrix::Zero(3, 2)), DomainError);
    EXPECT_THROW(rmsfe(Matrix::Zero(0, 0), Matrix::Zero(0, 0)), DomainError);
}

TEST(IntervalScore, InsideAboveAndBelow) {
    EXPECT_DOUBLE_EQ(interval_score(-1.0, 2.0, 0.5, 0.2), 3.0);
    EXPECT_DOUBLE_EQ(interval_score(-1.0, 2.0, -1.0, 0.2), 3.0);
    EXPECT_NEAR(interval_score(-1.0, 2.0, -1.5, 0.2), 3.0 + 10.0 * 0.5, 1e-14);
    EXPECT_NEAR(interval_score(-1.0, 2.0, 2.25, 0.2), 3.0 + 10.0 * 0.25, 1e-14);
    EXPECT_NEAR(interval_score(0.0, 1.0, 1.5, 0.05), 1.0 + 40.0 * 0.5, 1e-14);
}

TEST(IntervalScore, AtLeastWidthWithEqualityInside) {
    Rng rng(3);
    for (int rep = 0; rep < 200; ++rep) {
        double lb = rng.normal(), ub = rng.normal();
        if (lb > ub) std::swap(lb, ub);
        const double y = rng.normal();
        const double s = interval_score(lb, ub, y, 0.2);
        EXPECT_GE(s, ub - lb);
        EXPECT_EQ(s == ub - lb, lb <= y && y <= ub);
    }
}

TEST(IntervalScore, GridMinimumIsNarrowestCoveringInterval) {
    const double y = 0.375;
    double best = std::numeric_limits<double>::infinity();
    double best_lb = 0.0, best_ub = 0.0;
    for (int i = 0; i <= 100; ++i)
        for (int j = i; j <= 100; ++j) {
            const double lb = i * 0.01, ub = j * 0.01;
            const double s = interval_score(lb, ub, y, 0.2);
            if (s < best - 1e-15) {
                best = s;
                best_lb = lb;
                best_ub = ub;
            }
        }
    EXPECT_LE(best_lb, y);
    EXPECT_GE(best_ub, y);
    EXPECT_NEAR(best_ub - best_lb, 0.01, 1e-12);
}

TEST(MeanIntervalScore, ConstantAndOracle) {
    const Matrix lb = Matrix::Constant(3, 4, -1.0), ub = Matrix::Constant(3, 4, 1.0);
    EXPECT_DOUBLE_EQ(mean_interval_score(lb, ub, Matrix::Zero(3, 4), 0.2), 2.0);
    Rng rng(4);
    const Matrix a = random_fixture(3, 4, rng);
    const Matrix l = (a.array() - 0.5).matrix() + 0.5 * random_fixture(3, 4, rng);
    const Matrix u = l.array() + 0.8;
    double s = 0.0;
    for (Eigen::Index r = 0; r < 3; ++r)
        for (Eigen::Index c = 0; c < 4; ++c) {
            double v = u(r, c) - l(r, c);
            if (a(r, c) < l(r, c)) v += 10.0 * (l(r, c) - a(r, c));
            if (a(r, c) > u(r, c)) v += 10.0 * (a(r, c) - u(r, c));
            s += v;
        }
    EXPECT_NEAR(mean_interval_score(l, u, a, 0.2), s / 12.0, 1e-12);
    EXPECT_THROW(mean_interval_score(l, u, Matrix::Zero(2, 4), 0.2), DomainError);
}

TEST(MeanStat, Averages) {
    EXPECT_DOUBLE_EQ(mean_stat(std::vector<double>(15, 0.7)), 0.7);
    EXPECT_DOUBLE_EQ(mean_stat({1.0, 2.0, 6.0}), 3.0);
    EXPECT_THROW(mean_stat({}), DomainError);
}

TEST(ExpandingWindow, TriangularCounts) {
    const auto syn = small_panel(1);
    const auto rep = expanding_window(syn.panel, syn.structure, quick_config(2004, 5));
    EXPECT_EQ(rep.origins, (std::vector<int>{2004, 2005, 2006, 2007, 2008}));
    EXPECT_EQ(rep.counts, (std::vector<int>{5, 4, 3, 2, 1}));
    for (const auto& [key, by_series] : rep.scores) {
        EXPECT_EQ(by_series.size(), syn.structure.node_count());
        for (const auto& [id, sc] : by_series) {
            ASSERT_EQ(sc.rmsfe.size(), 5U);
            for (double v : sc.rmsfe) EXPECT_TRUE(std::isfinite(v) && v >= 0.0) << id;
            for (double v : sc.interval_score) EXPECT_TRUE(std::isfinite(v)) << id;
        }
    }
}

TEST(ExpandingWindow, HorizonOneSingleForecast) {
    const auto syn = small_panel(2);
    auto cfg = quick_config(2008, 1);
    cfg.keep_forecasts = true;
    const auto rep = expanding_window(syn.panel, syn.structure, cfg);
    EXPECT_EQ(rep.counts, std::vector<int>{1});
    EXPECT_EQ(rep.forecasts.size(), 1U);
    EXPECT_EQ(rep.forecasts.begin()->second.series.begin()->second.point.rows(), 1);
}

TEST(ExpandingWindow, RejectsInfeasibleWindows) {
    const auto syn = small_panel(3);
    EXPECT_THROW(expanding_window(syn.panel, syn.structure, quick_config(2009, 3)), DomainError);
    EXPECT_THROW(expanding_window(syn.panel, syn.structure, quick_config(1980, 3)), DomainError);
    EXPECT_THROW(expanding_window(syn.panel, syn.structure, quick_config(2005, 0)), DomainError);
}

TEST(ExpandingWindow, NoLeakageFromHoldoutYears) {
    const auto syn = small_panel(4);
    auto cfg = quick_config(2003, 4);
    cfg.keep_forecasts = true;
    cfg.methods = {ReconcileMethod::Base, ReconcileMethod::BottomUp, ReconcileMethod::MinT};
    const auto rep = expanding_window(syn.panel, syn.structure, cfg);

    MortalityPanel corrupted = syn.panel;
    const auto cut = static_cast<Eigen::Index>(corrupted.year_index(2003)) + 1;
    for (auto& [id, s] : corrupted.series) {
        const Eigen::Index tail = s.rate.rows() - cut;
        s.rate.bottomRows(tail) *= 3.0;
        s.deaths.bottomRows(tail) *= 3.0;
    }
    const auto rep2 = expanding_window(corrupted, syn.structure, cfg);
    for (auto method : cfg.methods) {
        const MethodKey key{ForecastMethod::Dmfts, method, syn.structure.tag};
        const auto& a = rep.forecasts.at({2003, key});
        const auto& b = rep2.forecasts.at({2003, key});
        for (const auto& [id, sf] : a.series) {
            EXPECT_EQ(sf.point, b.series.at(id).point) << id << " " << to_string(method);
            EXPECT_EQ(sf.lower, b.series.at(id).lower) << id;
            EXPECT_EQ(sf.upper, b.series.at(id).upper) << id;
        }
    }
    // Later origins see the corrupted years.
    const MethodKey base{ForecastMethod::Dmfts, ReconcileMethod::Base, syn.structure.tag};
    EXPECT_NE(rep.forecasts.at({2005, base}).series.begin()->second.point,
              rep2.forecasts.at({2005, base}).series.begin()->second.point);
}

TEST(ExpandingWindow, UnivariateSpecialCase) {
    // With every joint block a single series both models coincide.
    auto syn = small_panel(5, false);
    syn.structure.blocks = syn.structure.singleton_blocks();
    auto cfg = quick_config(2005, 3);
    cfg.models = {ForecastMethod::Dfts, ForecastMethod::Dmfts};
    cfg.methods = {ReconcileMethod::Base, ReconcileMethod::Ols};
    const auto rep = expanding_window(syn.panel, syn.structure, cfg);
    for (auto method : cfg.methods) {
        const auto& a = rep.scores.at({ForecastMethod::Dfts, method, syn.structure.tag});
        const auto& b = rep.scores.at({ForecastMethod::Dmfts, method, syn.structure.tag});
        for (const auto& [id, sc] : a) {
            EXPECT_EQ(sc.rmsfe, b.at(id).rmsfe) << id;
            EXPECT_EQ(sc.interval_score, b.at(id).interval_score) << id;
        }
    }
}

TEST(ExpandingWindow, BottomUpCoherentAndConsistentWithAggregation) {
    const auto syn = small_panel(6);
    const auto& g = syn.structure;
    auto cfg = quick_config(2005, 3);
    cfg.methods = {ReconcileMethod::BottomUp};
    cfg.keep_forecasts = true;
    cfg.hierarchies = {g.tag};
    cfg.pipeline.intervals.enabled = false;
    const auto smooth = smooth_panel(syn.panel, SmoothingOptions{}, 1);
    const auto rep = run_comparison(syn.panel, smooth, {{g.tag, g}}, cfg);
    const MethodKey key{ForecastMethod::Dmfts, ReconcileMethod::BottomUp, g.tag};
    const SeriesId top = g.nodes.front().id;
    std::vector<double> sq(3, 0.0);
    std::vector<double> cells(3, 0.0);
    for (int e : rep.origins) {
        const auto& fs = rep.forecasts.at({e, key});
        const auto S = build_age_summing_matrices(g, syn.panel, e);
        EXPECT_LT(coherence_residual(fs, g, S), 1e-12);
        const auto rows = static_cast<Eigen::Index>(syn.panel.year_index(e)) + 1;
        for (int h = 1; h <= fs.H; ++h)
            for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(S.size()); ++i) {
                double agg = 0.0;
                for (std::size_t c = 0; c < g.bottom_count(); ++c)
                    agg += S[static_cast<std::size_t>(i)].S(0, static_cast<Eigen::Index>(c)) *
                           std::exp(fs.series.at(g.bottom[c]).point(h - 1, i));
                const double d = smooth.at(top).values(rows - 1 + h, i) - std::log(agg);
                sq[static_cast<std::size_t>(h - 1)] += d * d;
                cells[static_cast<std::size_t>(h - 1)] += 1.0;
            }
    }
    const auto& sc = rep.scores.at(key).at(top);
    for (std::size_t h = 0; h < 3; ++h) EXPECT_NEAR(sc.rmsfe[h], std::sqrt(sq[h] / cells[h]), 1e-10);
    EXPECT_TRUE(std::isnan(sc.interval_score[0]));
}

TEST(ExpandingWindow, DeterministicReports) {
    const auto syn = small_panel(7);
    auto cfg = quick_config(2006, 3);
    cfg.methods = {ReconcileMethod::Base, ReconcileMethod::Ols};
    cfg.pipeline.intervals.seed = 11;
    std::ostringstream a, b;
    write_report_csv(expanding_window(syn.panel, syn.structure, cfg), a);
    write_report_csv(expanding_window(syn.panel, syn.structure, cfg), b);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str().substr(0, kReportCsvHeader.size()), kReportCsvHeader);
}

TEST(ExpandingWindow, ThreadCountDoesNotChangeResults) {
    const auto syn = small_panel(8);
    auto cfg = quick_config(2006, 2);
    std::ostringstream a, b;
    write_report_csv(expanding_window(syn.panel, syn.structure, cfg), a);
    cfg.pipeline.threads = 3;
    write_report_csv(expanding_window(syn.panel, syn.structure, cfg), b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(RunComparison, LevelSummariesAverageSeries) {
    const auto syn = small_panel(9);
    auto cfg = quick_config(2006, 2);
    cfg.hierarchies = {HierarchyTag::Hierarchy1, HierarchyTag::Hierarchy2};
    const auto smooth = smooth_panel(syn.panel, SmoothingOptions{}, 1);
    const std::map<HierarchyTag, GroupStructure> structures{
        {HierarchyTag::Hierarchy1, make_structure(GeoLayout{"N", {1, 2}, true}, HierarchyTag::Hierarchy1)},
        {HierarchyTag::Hierarchy2, make_structure(GeoLayout{"N", {1, 2}, true}, HierarchyTag::Hierarchy2)}};
    const auto rep = run_comparison(syn.panel, smooth, structures, cfg);
    EXPECT_EQ(rep.scores.size(), 2U);
    for (const auto& s : rep.level_summaries()) {
        double sum = 0.0;
        int n = 0;
        for (const auto& [id, sc] : rep.scores.at(s.key))
            if (sc.level == s.level) {
                sum += sc.mean_rmsfe();
                ++n;
            }
        ASSERT_GT(n, 0);
        EXPECT_NEAR(s.mean_rmsfe, sum / n, 1e-15);
    }
    std::ostringstream summary;
    write_summary(rep, summary);
    EXPECT_NE(summary.str().find("national"), std::string::npos);
    EXPECT_THROW(run_comparison(syn.panel, smooth, {{HierarchyTag::Hierarchy1, structures.at(HierarchyTag::Hierarchy1)}},
                                cfg),
                 DomainError);
}
