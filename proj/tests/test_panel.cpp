#include "helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace gfts;
using namespace gfts::testing;

namespace {

LoadedPanel read_csv(const std::string& body) {
    std::istringstream in(body);
    return read_panel_csv(in);
}

const char* kHeader = "series,sex,year,age,rate,exposure,deaths\n";

}  // namespace

TEST(LoadPanel, MinimalSingleSeries) {
    const auto lp = read_csv(std::string(kHeader) +
                             "A,T,2000,0,0.01,100,1\nA,T,2000,1,0.02,100,2\n"
                             "A,T,2001,0,0.01,200,2\nA,T,2001,1,0.02,200,4\n"
                             "A,T,2002,0,0.03,100,3\nA,T,2002,1,0.05,100,5\n");
    EXPECT_EQ(lp.panel.n_years(), 3u);
    EXPECT_EQ(lp.panel.n_ages(), 2u);
    EXPECT_EQ(lp.summary.series_count, 1u);
    EXPECT_EQ(lp.summary.missing_cells, 0u);
    EXPECT_EQ(lp.summary.first_year, 2000);
    EXPECT_EQ(lp.summary.last_year, 2002);
    EXPECT_NO_THROW(lp.panel.validate());
}

TEST(LoadPanel, ZeroExposureIsMissingNotDropped) {
    const auto lp = read_csv(std::string(kHeader) +
                             "A,T,2000,0,0.01,100,1\nA,T,2000,1,0.02,100,2\n"
                             "A,T,2001,0,0,0,0\nA,T,2001,1,0.02,200,4\n"
                             "A,T,2002,0,0.03,100,3\nA,T,2002,1,0.05,100,5\n");
    EXPECT_EQ(lp.summary.missing_cells, 1u);
    const auto& s = lp.panel.at({"A", Sex::Total});
    EXPECT_FALSE(s.observed(1, 0));
    EXPECT_TRUE(s.observed(1, 1));
    EXPECT_EQ(lp.panel.n_years(), 3u);
}

TEST(LoadPanel, OpenAgeGroup) {
    const auto lp = read_csv(std::string(kHeader) + "A,T,2000,99,0.3,10,3\nA,T,2000,100+,0.5,10,5\n");
    EXPECT_TRUE(lp.panel.grid.open_last);
    EXPECT_DOUBLE_EQ(lp.panel.grid.ages.back(), 100.0);
    EXPECT_EQ(format_age(lp.panel.grid, 1), "100+");
}

TEST(LoadPanel, InconsistentAgeGridsRejected) {
    EXPECT_THROW(read_csv(std::string(kHeader) +
                          "A,T,2000,0,0.01,100,1\nA,T,2000,1,0.02,100,2\n"
                          "B,T,2000,0,0.01,100,1\nB,T,2000,2,0.02,100,2\n"),
                 StructuralError);
}

TEST(LoadPanel, DuplicateCellRejected) {
    EXPECT_THROW(read_csv(std::string(kHeader) + "A,T,2000,0,0.01,100,1\nA,T,2000,0,0.01,100,1\n"),
                 StructuralError);
}

TEST(LoadPanel, NonNumericCellNamesRow) {
    try {
        read_csv(std::string(kHeader) + "A,T,2000,0,0.01,100,1\nA,T,2000,1,abc,100,2\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
    }
}

TEST(LoadPanel, MissingFileNamesPath) {
    try {
        load_panel("/nonexistent/panel.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/panel.csv"), std::string::npos);
    }
}

TEST(LoadPanel, JapaneseLayoutHas168Series) {
    SyntheticSpec spec;
    spec.layout = GeoLayout::japan();
    spec.n_years = 5;
    spec.grid = AgeGrid::single_years(0, 4);
    spec.k_true = 1;
    spec.noise_level = 0.0;
    const auto syn = synthesize_panel(spec, 1);
    const auto dir = scratch_dir("japan168");
    save_panel(syn.panel, dir / "panel.csv");
    const auto lp = load_panel(dir / "panel.csv");
    EXPECT_EQ(lp.summary.series_count, 168u);
    EXPECT_EQ(lp.panel.order.size(), 168u);
}

TEST(LoadPanel, SaveLoadRoundTrip) {
    SyntheticSpec spec;
    spec.n_years = 6;
    spec.grid = AgeGrid::single_years(0, 10, true);
    const auto syn = synthesize_panel(spec, 7);
    const auto dir = scratch_dir("roundtrip");
    save_panel(syn.panel, dir / "a.csv");
    const auto lp = load_panel(dir / "a.csv");
    ASSERT_EQ(lp.panel.order, syn.panel.order);
    EXPECT_EQ(lp.panel.years, syn.panel.years);
    EXPECT_EQ(lp.panel.grid.ages, syn.panel.grid.ages);
    EXPECT_EQ(lp.panel.grid.open_last, syn.panel.grid.open_last);
    for (const auto& id : syn.panel.order) {
        const auto& a = syn.panel.at(id);
        const auto& b = lp.panel.at(id);
        EXPECT_EQ(a.rate, b.rate) << id;
        EXPECT_EQ(a.exposure, b.exposure) << id;
        EXPECT_EQ(a.deaths, b.deaths) << id;
    }
    save_panel(lp.panel, dir / "b.csv");
    std::ifstream fa(dir / "a.csv"), fb(dir / "b.csv");
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(LoadPanel, HmdPair) {
    std::istringstream mx(
        "Japan, Death rates\n\n  Year  Age  Female  Male  Total\n"
        "  2000  0  0.002  0.003  0.0025\n  2000  1  0.001  .  0.0012\n"
        "  2001  0  0.002  0.003  0.0025\n  2001  1  0.001  0.0011  0.00105\n");
    std::istringstream ex(
        "Japan, Exposures\n\n  Year  Age  Female  Male  Total\n"
        "  2000  0  1000  1000  2000\n  2000  1  1000  1000  2000\n"
        "  2001  0  1000  1000  2000\n  2001  1  1000  1000  2000\n");
    const auto lp = read_hmd_pair(mx, ex, "Japan");
    EXPECT_EQ(lp.panel.order.size(), 3u);
    EXPECT_EQ(lp.panel.n_years(), 2u);
    EXPECT_EQ(lp.summary.missing_cells, 1u);
    EXPECT_NEAR(lp.panel.at({"Japan", Sex::Male}).rate(1, 1), 0.0011, 1e-15);
}

TEST(ToLog, ScalarCases) {
    MortalityPanel p;
    p.grid = AgeGrid::single_years(0, 2);
    p.years = {2000};
    SeriesData s;
    s.rate = Matrix(1, 3);
    s.rate << std::numbers::e, 0.0, 1e-9;
    s.exposure = Matrix::Constant(1, 3, 1.0);
    s.deaths = s.rate;
    s.observed = Mask::Constant(1, 3, true);
    p.add({"A", Sex::Total}, s);
    const auto l = to_log(p, 1e-7).at({"A", Sex::Total});
    EXPECT_NEAR(l.values(0, 0), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(l.values(0, 1), std::log(1e-7));
    EXPECT_DOUBLE_EQ(l.values(0, 2), std::log(1e-7));
}

TEST(ToLog, MatchesScalarLoopAndKeepsMissing) {
    SyntheticSpec spec;
    spec.n_years = 8;
    spec.grid = AgeGrid::single_years(0, 20);
    auto syn = synthesize_panel(spec, 3);
    auto& s = syn.panel.series.begin()->second;
    s.observed(2, 3) = false;
    s.rate(2, 3) = std::numeric_limits<double>::quiet_NaN();
    const auto logs = to_log(syn.panel, 1e-7);
    for (const auto& [id, d] : syn.panel.series) {
        const auto& l = logs.at(id);
        for (Eigen::Index t = 0; t < d.rate.rows(); ++t)
            for (Eigen::Index i = 0; i < d.rate.cols(); ++i) {
                if (!d.observed(t, i)) {
                    EXPECT_TRUE(std::isnan(l.values(t, i)));
                    continue;
                }
                EXPECT_EQ(l.values(t, i), std::log(std::max(d.rate(t, i), 1e-7)));
            }
    }
}

TEST(ToLog, MonotoneAndFloorExact) {
    MortalityPanel p;
    p.grid = AgeGrid::single_years(0, 5);
    p.years = {2000};
    SeriesData s;
    s.rate = Matrix(1, 6);
    s.rate << 0.0, 1e-8, 1e-7, 2e-7, 0.01, 0.5;
    s.exposure = Matrix::Constant(1, 6, 1.0);
    s.deaths = s.rate;
    s.observed = Mask::Constant(1, 6, true);
    p.add({"A", Sex::Total}, s);
    const auto l = to_log(p, 1e-7).at({"A", Sex::Total}).values;
    for (int i = 0; i < 3; ++i) EXPECT_EQ(l(0, i), std::log(1e-7));
    for (int i = 1; i < 6; ++i) EXPECT_GE(l(0, i), l(0, i - 1));
    EXPECT_THROW(to_log(p, 0.0), DomainError);
}

TEST(Synthesize, Deterministic) {
    SyntheticSpec spec;
    spec.n_years = 10;
    spec.grid = AgeGrid::single_years(0, 30);
    const auto a = synthesize_panel(spec, 42);
    const auto b = synthesize_panel(spec, 42);
    std::ostringstream sa, sb;
    write_panel_csv(a.panel, sa);
    write_panel_csv(b.panel, sb);
    EXPECT_EQ(sa.str(), sb.str());
    const auto c = synthesize_panel(spec, 43);
    std::ostringstream sc;
    write_panel_csv(c.panel, sc);
    EXPECT_NE(sa.str(), sc.str());
}

TEST(Synthesize, AggregationCoherence) {
    SyntheticSpec spec;
    spec.n_years = 12;
    spec.grid = AgeGrid::single_years(0, 40);
    spec.layout = {"N", {2, 3}, true};
    const auto syn = synthesize_panel(spec, 11);
    for (const auto& node : syn.structure.nodes) {
        if (node.members.size() == 1) continue;
        const auto& v = syn.panel.at(node.id);
        Matrix sum = Matrix::Zero(v.rate.rows(), v.rate.cols());
        for (const auto& c : node.members) {
            const auto& d = syn.panel.at(c);
            sum += d.rate.cwiseProduct(d.exposure);
        }
        const Matrix lhs = v.rate.cwiseProduct(v.exposure);
        const double rel = ((lhs - sum).cwiseAbs().array() / sum.cwiseAbs().array().max(1e-300)).maxCoeff();
        EXPECT_LE(rel, 1e-9) << node.id;
    }
}

TEST(Synthesize, EqualExposureParentIsMean) {
    SyntheticSpec spec;
    spec.n_years = 6;
    spec.grid = AgeGrid::single_years(0, 20);
    spec.layout = {"N", {2}, false};
    spec.equal_exposures = true;
    spec.noise_level = 0.0;
    const auto syn = synthesize_panel(spec, 5);
    const auto& a = syn.panel.at({"P1", Sex::Total}).rate;
    const auto& b = syn.panel.at({"P2", Sex::Total}).rate;
    const auto& top = syn.panel.at({"N", Sex::Total}).rate;
    EXPECT_LE((top - 0.5 * (a + b)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Synthesize, NoiselessRankTwoRecovered) {
    SyntheticSpec spec;
    spec.n_years = 30;
    spec.k_true = 2;
    spec.noise_level = 0.0;
    spec.single_series = true;
    const auto syn = synthesize_panel(spec, 9);
    const auto id = syn.panel.order.front();
    const auto logs = to_log(syn.panel);
    CurvePanel cp{logs.at(id).values, 1.0};
    const auto lrc = long_run_cov(cp, plugin_bandwidth(cp));
    const auto m = fit_fpca(cp, lrc, 0.9);
    const Matrix rec = reconstruct(m, m.scores);
    EXPECT_LE((rec - cp.values).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(m.all_eigenvalues.size(), 2);
}

TEST(Synthesize, RejectsInconsistentSpec) {
    SyntheticSpec spec;
    spec.n_years = 3;
    spec.k_true = 3;
    EXPECT_THROW(synthesize_panel(spec, 1), DomainError);
}
