#pragma once

// Expanding-window evaluation: RMSFE, interval scores and the method grid
// comparison across hierarchies.

#include "gfts/error.hpp"
#include "gfts/pipeline.hpp"
#include "gfts/text.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace gfts {

/// sqrt of the mean squared difference over all cells (origins x ages).
inline double rmsfe(const Matrix& actual, const Matrix& forecast) {
    if (actual.rows() != forecast.rows() || actual.cols() != forecast.cols())
        throw DomainError("actual and forecast shapes differ");
    if (actual.size() == 0) throw DomainError("empty forecast set");
    return std::sqrt((actual - forecast).squaredNorm() / static_cast<double>(actual.size()));
}

inline double interval_score(double lb, double ub, double actual, double alpha) {
    double s = ub - lb;
    if (actual < lb) s += 2.0 / alpha * (lb - actual);
    if (actual > ub) s += 2.0 / alpha * (actual - ub);
    return s;
}

/// Mean pointwise interval score over all cells.
inline double mean_interval_score(const Matrix& lb, const Matrix& ub, const Matrix& actual, double alpha) {
    if (lb.rows() != actual.rows() || ub.rows() != actual.rows() || lb.cols() != actual.cols() ||
        ub.cols() != actual.cols())
        throw DomainError("bound and actual shapes differ");
    if (actual.size() == 0) throw DomainError("empty forecast set");
    double s = 0.0;
    for (Eigen::Index r = 0; r < actual.rows(); ++r)
        for (Eigen::Index i = 0; i < actual.cols(); ++i) s += interval_score(lb(r, i), ub(r, i), actual(r, i), alpha);
    return s / static_cast<double>(actual.size());
}

inline double mean_stat(const std::vector<double>& per_h) {
    if (per_h.empty()) throw DomainError("empty horizon set");
    double s = 0.0;
    for (double v : per_h) s += v;
    return s / static_cast<double>(per_h.size());
}

struct BacktestConfig {
    int first_train_end = 2001;
    int H = 15;
    std::vector<ForecastMethod> models{ForecastMethod::Dfts, ForecastMethod::Dmfts};
    std::vector<ReconcileMethod> methods{ReconcileMethod::Base, ReconcileMethod::BottomUp, ReconcileMethod::Ols,
                                         ReconcileMethod::MinT};
    std::vector<HierarchyTag> hierarchies{HierarchyTag::Hierarchy1, HierarchyTag::Hierarchy2};
    PipelineOptions pipeline{};
    bool keep_forecasts = false;
};

/// One evaluated combination of model, reconciliation and hierarchy.
struct MethodKey {
    ForecastMethod model;
    ReconcileMethod method;
    HierarchyTag hierarchy;

    auto operator<=>(const MethodKey&) const = default;
    [[nodiscard]] std::string name() const { return to_string(model) + "-" + to_string(method); }
};

struct SeriesScores {
    std::string level;
    std::vector<double> rmsfe;               ///< per h
    std::vector<double> interval_score;      ///< per h, NaN without bounds
    [[nodiscard]] double mean_rmsfe() const { return mean_stat(rmsfe); }
    [[nodiscard]] double mean_interval() const { return mean_stat(interval_score); }
};

struct LevelSummary {
    std::string level;
    MethodKey key;
    double mean_rmsfe = 0.0;
    double mean_interval_score = 0.0;
};

struct BacktestReport {
    std::vector<int> origins;        ///< training end years
    std::vector<int> counts;         ///< forecasts per horizon h = 1..H
    double alpha = 0.2;
    std::map<MethodKey, std::map<SeriesId, SeriesScores>> scores;
    std::map<MethodKey, std::vector<std::string>> levels;  ///< level order per structure
    /// (origin, key) -> forecasts when keep_forecasts is set.
    std::map<std::pair<int, MethodKey>, ForecastSet> forecasts;

    [[nodiscard]] std::vector<LevelSummary> level_summaries() const;
};

inline std::vector<LevelSummary> BacktestReport::level_summaries() const {
    std::vector<LevelSummary> out;
    for (const auto& [key, by_series] : scores) {
        for (const auto& lvl : levels.at(key)) {
            double r = 0.0, s = 0.0;
            std::size_t n = 0;
            for (const auto& [id, sc] : by_series)
                if (sc.level == lvl) {
                    r += sc.mean_rmsfe();
                    s += sc.mean_interval();
                    ++n;
                }
            if (n == 0) continue;
            out.push_back({lvl, key, r / static_cast<double>(n), s / static_cast<double>(n)});
        }
    }
    return out;
}

/// Training ends first_train_end .. last - 1; horizon h is evaluated at
/// every origin with end + h inside the data.
inline BacktestReport run_comparison(const MortalityPanel& panel, const SmoothedPanel& smooth,
                                     const std::map<HierarchyTag, GroupStructure>& structures,
                                     const BacktestConfig& cfg) {
    if (cfg.H < 1) throw DomainError("maximum horizon must be >= 1");
    if (cfg.models.empty() || cfg.methods.empty() || cfg.hierarchies.empty())
        throw DomainError("method grid is empty");
    const int last = panel.years.back();
    const int first = panel.years.front();
    if (cfg.first_train_end < first || cfg.first_train_end >= last)
        throw DomainError("first training end year must leave at least one holdout year");
    for (auto tag : cfg.hierarchies)
        if (!structures.count(tag)) throw DomainError("no structure for " + to_string(tag));

    BacktestReport rep;
    rep.alpha = cfg.pipeline.intervals.alpha;
    rep.counts.assign(static_cast<std::size_t>(cfg.H), 0);
    for (int e = cfg.first_train_end; e < last; ++e) rep.origins.push_back(e);

    struct Acc {
        std::vector<double> sq, is;
        std::vector<std::size_t> cells;
    };
    std::map<MethodKey, std::map<SeriesId, Acc>> acc;
    const double alpha = cfg.pipeline.intervals.alpha;
    const auto H = static_cast<std::size_t>(cfg.H);

    for (int e : rep.origins) {
        const auto rows = static_cast<Eigen::Index>(panel.year_index(e)) + 1;
        const int He = std::min(cfg.H, last - e);
        for (int h = 1; h <= He; ++h) ++rep.counts[static_cast<std::size_t>(h - 1)];
        const auto curves = training_curves(smooth, rows);

        // Every distinct block across the grid is fitted once per origin.
        std::vector<JointBlockSpec> all_blocks;
        for (auto model : cfg.models)
            for (auto tag : cfg.hierarchies)
                for (auto& b : blocks_for(structures.at(tag), model)) all_blocks.push_back(b);
        BlockCache cache;
        fit_blocks(curves, all_blocks, He, cfg.pipeline, cache);

        for (auto model : cfg.models) {
            for (auto tag : cfg.hierarchies) {
                const auto& g = structures.at(tag);
                const ForecastSet base = collect_forecasts(cache, blocks_for(g, model), He, alpha);
                for (auto method : cfg.methods) {
                    const MethodKey key{model, method, tag};
                    ForecastSet fs = reconcile_with(base, g, panel, e, method, cfg.pipeline);
                    if (!rep.levels.count(key)) rep.levels[key] = g.levels();
                    auto& per_series = acc[key];
                    for (const auto& node : g.nodes) {
                        const auto& sf = fs.series.at(node.id);
                        auto& a = per_series[node.id];
                        if (a.sq.empty()) {
                            a.sq.assign(H, 0.0);
                            a.is.assign(H, 0.0);
                            a.cells.assign(H, 0);
                        }
                        const Matrix& truth = smooth.at(node.id).values;
                        const bool band = sf.lower.size() > 0;
                        for (int h = 1; h <= He; ++h) {
                            const auto hi = static_cast<std::size_t>(h - 1);
                            const Eigen::Index t = rows - 1 + h;
                            a.sq[hi] += (truth.row(t) - sf.point.row(h - 1)).squaredNorm();
                            if (band)
                                for (Eigen::Index i = 0; i < truth.cols(); ++i)
                                    a.is[hi] += interval_score(sf.lower(h - 1, i), sf.upper(h - 1, i), truth(t, i), alpha);
                            a.cells[hi] += static_cast<std::size_t>(truth.cols());
                        }
                    }
                    if (cfg.keep_forecasts) rep.forecasts.emplace(std::make_pair(e, key), std::move(fs));
                }
            }
        }
    }

    for (const auto& [key, per_series] : acc) {
        for (const auto& [id, a] : per_series) {
            SeriesScores sc;
            sc.level = structures.at(key.hierarchy).node(id).level;
            for (std::size_t h = 0; h < H; ++h) {
                const double c = static_cast<double>(a.cells[h]);
                sc.rmsfe.push_back(std::sqrt(a.sq[h] / c));
                sc.interval_score.push_back(cfg.pipeline.intervals.enabled ? a.is[h] / c
                                                                          : std::numeric_limits<double>::quiet_NaN());
            }
            rep.scores[key].emplace(id, std::move(sc));
        }
    }
    return rep;
}

/// Single-hierarchy convenience wrapper that smooths the panel first.
inline BacktestReport expanding_window(const MortalityPanel& panel, const GroupStructure& g, BacktestConfig cfg,
                                       const SmoothingOptions& sopts = {}) {
    const auto smooth = smooth_panel(panel, sopts, cfg.pipeline.threads);
    cfg.hierarchies = {g.tag};
    return run_comparison(panel, smooth, {{g.tag, g}}, cfg);
}

// ---------------------------------------------------------------- reports

inline constexpr std::string_view kReportCsvHeader = "level,series,method,hierarchy,h,rmsfe,mean_interval_score";

inline void write_report_csv(const BacktestReport& rep, std::ostream& out) {
    out << kReportCsvHeader << '\n';
    for (const auto& [key, per_series] : rep.scores) {
        const auto& lvls = rep.levels.at(key);
        for (const auto& lvl : lvls)
            for (const auto& [id, sc] : per_series) {
                if (sc.level != lvl) continue;
                const std::string prefix =
                    lvl + ',' + id.str() + ',' + key.name() + ',' + to_string(key.hierarchy) + ',';
                for (std::size_t h = 0; h < sc.rmsfe.size(); ++h)
                    out << prefix << (h + 1) << ',' << text::format_double(sc.rmsfe[h]) << ','
                        << text::format_double(sc.interval_score[h]) << '\n';
                out << prefix << "mean," << text::format_double(sc.mean_rmsfe()) << ','
                    << text::format_double(sc.mean_interval()) << '\n';
            }
    }
}

inline void write_counts_csv(const BacktestReport& rep, std::ostream& out) {
    out << "h,forecasts\n";
    for (std::size_t h = 0; h < rep.counts.size(); ++h) out << (h + 1) << ',' << rep.counts[h] << '\n';
}

inline void write_levels_csv(const BacktestReport& rep, std::ostream& out) {
    out << "level,method,hierarchy,mean_rmsfe_x100,mean_interval_score\n";
    for (const auto& s : rep.level_summaries())
        out << s.level << ',' << s.key.name() << ',' << to_string(s.key.hierarchy) << ','
            << text::format_double(100.0 * s.mean_rmsfe) << ',' << text::format_double(s.mean_interval_score) << '\n';
}

/// Methods ranked by Mean(RMSFE) within each level.
inline void write_summary(const BacktestReport& rep, std::ostream& out) {
    const auto all = rep.level_summaries();
    std::vector<std::string> lvls;
    for (const auto& s : all)
        if (std::find(lvls.begin(), lvls.end(), s.level) == lvls.end()) lvls.push_back(s.level);
    out << "origins: " << rep.origins.size() << " (training ends " << rep.origins.front() << ".."
        << rep.origins.back() << "), alpha = " << text::format_double(rep.alpha) << "\n";
    for (const auto& lvl : lvls) {
        std::vector<LevelSummary> rows;
        for (const auto& s : all)
            if (s.level == lvl) rows.push_back(s);
        std::stable_sort(rows.begin(), rows.end(),
                         [](const LevelSummary& a, const LevelSummary& b) { return a.mean_rmsfe < b.mean_rmsfe; });
        out << "\n[" << lvl << "]\n";
        out << "  rank  method               hierarchy    mean RMSFE x100  mean interval score\n";
        int r = 1;
        for (const auto& s : rows) {
            std::ostringstream line;
            line << "  " << std::setw(4) << r++ << "  " << std::left << std::setw(20) << s.key.name() << ' '
                 << std::setw(12) << to_string(s.key.hierarchy) << std::right << ' ' << std::setw(15) << std::fixed
                 << std::setprecision(4) << 100.0 * s.mean_rmsfe << "  " << std::setw(19) << s.mean_interval_score;
            out << line.str() << '\n';
        }
    }
}

inline void save_report(const BacktestReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name);
        if (!f) throw Error("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("report.csv");
        write_report_csv(rep, f);
    }
    {
        auto f = open("counts.csv");
        write_counts_csv(rep, f);
    }
    {
        auto f = open("levels.csv");
        write_levels_csv(rep, f);
    }
    {
        auto f = open("summary.txt");
        write_summary(rep, f);
    }
}

}  // namespace gfts
