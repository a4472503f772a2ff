#pragma once

// Point forecast curves from score forecasts, in-sample forecast errors,
// and bootstrap prediction intervals with a calibrated width multiplier.

#include "gfts/error.hpp"
#include "gfts/fpca.hpp"
#include "gfts/log.hpp"
#include "gfts/lrcov.hpp"
#include "gfts/panel.hpp"
#include "gfts/rng.hpp"
#include "gfts/scorecast.hpp"
#include "gfts/text.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace gfts {

struct ModelOptions {
    Kernel kernel = Kernel::Bartlett;
    std::optional<double> bandwidth;  ///< nullopt: plug-in
    FpcaOptions fpca{};
    ScorecastOptions scorecast{};
    double grid_weight = 1.0;  ///< quadrature weight of one age step
};

struct IntervalOptions {
    bool enabled = true;
    double alpha = 0.2;
    std::size_t B = 1000;
    std::uint64_t seed = 0;
};

/// In-sample h-step errors; row z is the error at time index targets[z].
struct ErrorSample {
    Matrix errors;                      ///< M x d
    Matrix fitted;                      ///< M x d forecasts the errors are measured from
    std::vector<Eigen::Index> targets;  ///< 0-based time index of each row
    int h = 1;

    [[nodiscard]] Eigen::Index M() const noexcept { return errors.rows(); }
};

struct SeriesForecast {
    Matrix point;  ///< H x p log rates
    Matrix lower;  ///< H x p, empty when intervals are off
    Matrix upper;
    Vector pi;     ///< H calibration multipliers
    ErrorSample errors_h1;  ///< one-step in-sample errors of this series
};

struct ForecastSet {
    double alpha = 0.2;
    int H = 0;
    std::map<SeriesId, SeriesForecast> series;
};

/// Fitted block model: components, scores and one score model per component.
struct BlockFit {
    FpcaModel fpca;
    std::vector<ScoreModel> score_models;
    double bandwidth = 1.0;
};

inline std::vector<double> column(const Matrix& m, Eigen::Index k, Eigen::Index rows) {
    std::vector<double> out(static_cast<std::size_t>(rows));
    for (Eigen::Index t = 0; t < rows; ++t) out[static_cast<std::size_t>(t)] = m(t, k);
    return out;
}

inline BlockFit fit_block(const CurvePanel& panel, std::vector<SeriesId> members, const ModelOptions& opts = {}) {
    BlockFit out;
    out.bandwidth = opts.bandwidth ? *opts.bandwidth : plugin_bandwidth(panel, opts.kernel);
    const auto lrc = long_run_cov(panel, out.bandwidth, opts.kernel, false);
    out.fpca = fit_fpca(panel, lrc, opts.fpca, std::move(members));
    const Eigen::Index n = panel.n();
    for (Eigen::Index k = 0; k < out.fpca.K(); ++k) {
        auto m = fit_score_model(column(out.fpca.scores, k, n), opts.scorecast);
        if (m.fallback) warn("score " + std::to_string(k + 1) + " of block " + out.fpca.members.front().str() +
                             ": no ARIMA candidate converged, random walk with drift used");
        out.score_models.push_back(std::move(m));
    }
    return out;
}

/// H x K score forecasts from the first `prefix` scores.
inline Matrix forecast_score_matrix(const BlockFit& fit, Eigen::Index prefix, int H) {
    const Eigen::Index K = fit.fpca.K();
    Matrix out(H, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto f = forecast_scores(fit.score_models[static_cast<std::size_t>(k)],
                                       column(fit.fpca.scores, k, prefix), H);
        for (int j = 0; j < H; ++j) out(j, k) = f[static_cast<std::size_t>(j)];
    }
    return out;
}

/// H x d stacked point forecasts from the end of the sample.
inline Matrix point_forecast(const BlockFit& fit, int H) {
    if (H < 1) throw DomainError("horizon must be >= 1");
    return reconstruct(fit.fpca, forecast_score_matrix(fit, fit.fpca.scores.rows(), H));
}

/// Errors f_{xi+h} - fhat_{xi+h} for xi = K..n-h with the full-sample
/// components and score models held fixed.
inline ErrorSample insample_errors(const BlockFit& fit, const Matrix& curves, int h) {
    const Eigen::Index n = curves.rows();
    const Eigen::Index K = fit.fpca.K();
    if (h < 1) throw DomainError("horizon must be >= 1");
    const Eigen::Index M = n - h - K + 1;
    if (M < 4)
        throw DomainError("interval construction needs at least 4 in-sample errors (n - h - K + 1 = " +
                          std::to_string(M) + ")");
    ErrorSample out;
    out.h = h;
    out.errors.resize(M, curves.cols());
    out.fitted.resize(M, curves.cols());
    for (Eigen::Index z = 0; z < M; ++z) {
        const Eigen::Index xi = K + z;  // number of curves available at the origin
        const Matrix sc = forecast_score_matrix(fit, xi, h);
        const Matrix f = reconstruct(fit.fpca, sc.bottomRows(1));
        const Eigen::Index target = xi + h - 1;
        out.fitted.row(z) = f.row(0);
        out.errors.row(z) = curves.row(target) - f.row(0);
        out.targets.push_back(target);
    }
    return out;
}

/// Type-7 quantile of v (reordered in place).
inline double quantile7(std::vector<double>& v, double prob) {
    if (v.empty()) throw DomainError("quantile of an empty sample");
    const double pos = prob * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    if (lo + 1 >= v.size()) return a;
    const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo + 1), v.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

struct ErrorBounds {
    Vector lower;  ///< gamma_lb
    Vector upper;  ///< gamma_ub
};

/// Pointwise alpha/2 and 1 - alpha/2 quantiles of B error curves drawn with
/// replacement from the sample.
inline ErrorBounds bootstrap_bounds(const Matrix& errors, std::size_t B, double alpha, std::uint64_t seed) {
    if (B < 100) throw DomainError("bootstrap needs B >= 100");
    if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 0.5)");
    const Eigen::Index M = errors.rows(), p = errors.cols();
    if (M < 1) throw DomainError("empty error sample");
    Rng rng(seed);
    std::vector<Eigen::Index> draw(B);
    for (auto& d : draw) d = static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(M)));
    ErrorBounds out{Vector(p), Vector(p)};
    std::vector<double> v(B);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (std::size_t b = 0; b < B; ++b) v[b] = errors(draw[b], i);
        out.lower(i) = quantile7(v, alpha / 2.0);
        out.upper(i) = quantile7(v, 1.0 - alpha / 2.0);
    }
    return out;
}

/// Fraction of (row, age) cells with pi * lb <= e <= pi * ub.
inline double coverage_fraction(const Matrix& errors, const ErrorBounds& b, double pi) {
    if (errors.size() == 0) return 1.0;
    std::size_t hit = 0;
    for (Eigen::Index z = 0; z < errors.rows(); ++z)
        for (Eigen::Index i = 0; i < errors.cols(); ++i) {
            const double e = errors(z, i);
            if (pi * b.lower(i) <= e && e <= pi * b.upper(i)) ++hit;
        }
    return static_cast<double>(hit) / static_cast<double>(errors.size());
}

inline constexpr double kPiMax = 100.0;

/// Smallest pi (bisection, tolerance 1e-4) reaching 1 - alpha coverage.
inline double calibrate_pi(const Matrix& errors, const ErrorBounds& b, double alpha) {
    const double target = 1.0 - alpha;
    if (coverage_fraction(errors, b, 0.0) >= target) return 0.0;
    if (coverage_fraction(errors, b, kPiMax) < target) {
        warn("interval calibration did not reach the target coverage; multiplier set to " +
             text::format_double(kPiMax));
        return kPiMax;
    }
    double lo = 0.0, hi = kPiMax;
    while (hi - lo > 1e-4) {
        const double mid = 0.5 * (lo + hi);
        if (coverage_fraction(errors, b, mid) >= target)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

struct IntervalBand {
    Matrix lower;
    Matrix upper;
};

inline IntervalBand interval_forecast(const Matrix& point, const ErrorBounds& b, double pi) {
    if (!(pi >= 0.0)) throw DomainError("interval multiplier must be non-negative");
    IntervalBand out;
    out.lower = point.rowwise() + (pi * b.lower).transpose();
    out.upper = point.rowwise() + (pi * b.upper).transpose();
    return out;
}

/// Largest horizon with at least 4 in-sample errors, or 0.
inline int max_interval_horizon(Eigen::Index n, Eigen::Index K) {
    return static_cast<int>(std::max<Eigen::Index>(0, n - K - 3));
}

/// Fits one joint block and returns per-series point forecasts, bounds and
/// one-step in-sample errors.
inline std::map<SeriesId, SeriesForecast> forecast_block(const std::map<SeriesId, Matrix>& curves,
                                                         const JointBlockSpec& block, int H,
                                                         const ModelOptions& mopts, const IntervalOptions& iopts) {
    if (H < 1) throw DomainError("horizon must be >= 1");
    const CurvePanel panel = stack(curves, block, mopts.grid_weight);
    const BlockFit fit = fit_block(panel, block.members, mopts);
    const Eigen::Index n = panel.n(), p = fit.fpca.ages;
    const Matrix point = point_forecast(fit, H);
    const int hmax = max_interval_horizon(n, fit.fpca.K());
    if (hmax < 1) throw DomainError("block " + block.name + ": too few years for in-sample errors");

    std::map<SeriesId, SeriesForecast> out;
    for (std::size_t l = 0; l < block.members.size(); ++l) {
        SeriesForecast sf;
        sf.point = point.middleCols(static_cast<Eigen::Index>(l) * p, p);
        out.emplace(block.members[l], std::move(sf));
    }
    const ErrorSample e1 = insample_errors(fit, panel.values, 1);
    for (std::size_t l = 0; l < block.members.size(); ++l) {
        auto& sf = out.at(block.members[l]);
        const auto c0 = static_cast<Eigen::Index>(l) * p;
        sf.errors_h1.h = 1;
        sf.errors_h1.errors = e1.errors.middleCols(c0, p);
        sf.errors_h1.fitted = e1.fitted.middleCols(c0, p);
        sf.errors_h1.targets = e1.targets;
    }
    if (!iopts.enabled) return out;

    for (auto& [id, sf] : out) {
        sf.lower.resize(H, p);
        sf.upper.resize(H, p);
        sf.pi.resize(H);
    }
    std::map<int, ErrorSample> by_h{{1, e1}};
    for (int h = 1; h <= H; ++h) {
        const int he = std::min(h, hmax);
        if (he != h && h == hmax + 1)
            warn("block " + block.name + ": horizons beyond " + std::to_string(hmax) +
                 " reuse the widest feasible in-sample errors");
        auto it = by_h.find(he);
        if (it == by_h.end()) it = by_h.emplace(he, insample_errors(fit, panel.values, he)).first;
        const ErrorSample& es = it->second;
        for (std::size_t l = 0; l < block.members.size(); ++l) {
            const auto& id = block.members[l];
            auto& sf = out.at(id);
            const Matrix err = es.errors.middleCols(static_cast<Eigen::Index>(l) * p, p);
            const auto seed = derive_seed(iopts.seed, id.str(), static_cast<std::uint64_t>(h),
                                          static_cast<std::uint64_t>(n));
            const ErrorBounds b = bootstrap_bounds(err, iopts.B, iopts.alpha, seed);
            const double pi = calibrate_pi(err, b, iopts.alpha);
            const auto band = interval_forecast(sf.point.row(h - 1), b, pi);
            sf.lower.row(h - 1) = band.lower;
            sf.upper.row(h - 1) = band.upper;
            sf.pi(h - 1) = pi;
        }
    }
    return out;
}

inline constexpr std::string_view kForecastCsvHeader = "series,horizon,age,point,lower,upper,alpha";

/// One row per (series, horizon, age); empty bound fields when intervals
/// were not computed.
inline void write_forecast_csv(const ForecastSet& fs, const AgeGrid& grid, std::ostream& out,
                               const std::vector<SeriesId>& order = {}) {
    out << kForecastCsvHeader << '\n';
    std::vector<SeriesId> ids = order;
    if (ids.empty())
        for (const auto& [id, _] : fs.series) ids.push_back(id);
    for (const auto& id : ids) {
        const auto& sf = fs.series.at(id);
        const bool band = sf.lower.size() > 0;
        for (Eigen::Index h = 0; h < sf.point.rows(); ++h)
            for (Eigen::Index i = 0; i < sf.point.cols(); ++i) {
                out << id.str() << ',' << (h + 1) << ',' << format_age(grid, static_cast<std::size_t>(i)) << ','
                    << text::format_double(sf.point(h, i)) << ',';
                if (band) out << text::format_double(sf.lower(h, i)) << ',' << text::format_double(sf.upper(h, i));
                else out << ',';
                out << ',' << text::format_double(fs.alpha) << '\n';
            }
    }
}

}  // namespace gfts
