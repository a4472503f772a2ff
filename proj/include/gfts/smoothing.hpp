#pragma once

// Weighted penalized regression spline smoothing of log mortality curves
// with a monotone (non-decreasing) constraint at old ages.

#include "gfts/error.hpp"
#include "gfts/log.hpp"
#include "gfts/panel.hpp"
#include "gfts/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace gfts {

/// 25 log-spaced penalty values on [1e-4, 1e4].
inline std::vector<double> default_lambda_grid() {
    std::vector<double> g(25);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(10.0, -4.0 + 8.0 * static_cast<double>(i) / 24.0);
    return g;
}

struct SmoothingOptions {
    double knot_spacing = 2.0;
    int penalty_order = 2;  ///< derivative order m in the roughness penalty, 1..3
    std::vector<double> lambda_grid = default_lambda_grid();
    double monotone_from_age = 65.0;
    bool monotone = true;
};

struct SmoothCurve {
    Vector values;   ///< smoothed log rates at every grid age (missing cells filled)
    Vector weights;  ///< variance weights used in the fit
    double lambda = 0.0;
    double gcv = 0.0;
};

/// Delta-method weights 1 / Var(ln m) = m E / (1 - m); zero where unobserved.
inline Vector variance_weights(const Vector& rate, const Vector& exposure) {
    if (rate.size() != exposure.size()) throw DomainError("rate and exposure lengths differ");
    Vector w(rate.size());
    bool clamped = false;
    for (Eigen::Index i = 0; i < rate.size(); ++i) {
        double m = rate(i);
        const double e = exposure(i);
        if (!std::isfinite(m) || !(e > 0.0) || m <= 0.0) {
            w(i) = 0.0;
            continue;
        }
        if (m >= 1.0) {
            m = 1.0 - 1e-10;
            clamped = true;
        }
        w(i) = m * e / (1.0 - m);
    }
    if (clamped) warn("rate >= 1 clamped to 1 - 1e-10 in variance weights");
    return w;
}

/// Weighted pool-adjacent-violators: the non-decreasing sequence closest to
/// y in weighted least squares.
inline Vector isotonic_increasing(const Vector& y, const Vector& w) {
    const auto n = y.size();
    std::vector<double> level, weight;
    std::vector<Eigen::Index> count;
    level.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        level.push_back(y(i));
        weight.push_back(w(i));
        count.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const double w2 = weight.back(), l2 = level.back();
            const auto c2 = count.back();
            level.pop_back();
            weight.pop_back();
            count.pop_back();
            const double wt = weight.back() + w2;
            level.back() = (weight.back() * level.back() + w2 * l2) / wt;
            weight.back() = wt;
            count.back() += c2;
        }
    }
    Vector out(n);
    Eigen::Index k = 0;
    for (std::size_t b = 0; b < level.size(); ++b)
        for (Eigen::Index j = 0; j < count[b]; ++j) out(k++) = level[b];
    return out;
}

/// Cubic B-spline basis on [ages.front(), ages.back()] with equally spaced
/// interior knots.
class CubicBSplineBasis {
public:
    CubicBSplineBasis(double lo, double hi, double spacing) : lo_(lo), hi_(hi) {
        if (!(hi > lo)) throw DomainError("spline domain is empty");
        if (!(spacing > 0.0)) throw DomainError("knot spacing must be positive");
        for (int r = 0; r < 4; ++r) knots_.push_back(lo);
        for (double k = lo + spacing; k < hi - 1e-9 * spacing; k += spacing) knots_.push_back(k);
        for (int r = 0; r < 4; ++r) knots_.push_back(hi);
    }

    [[nodiscard]] std::size_t size() const noexcept { return knots_.size() - 4; }

    /// Distinct knot positions (interval breakpoints).
    [[nodiscard]] std::vector<double> breakpoints() const {
        std::vector<double> b(knots_.begin() + 3, knots_.end() - 3);
        return b;
    }

    /// Values of the `deriv`-th derivative of every basis function at x.
    [[nodiscard]] Vector eval(double x, int deriv = 0) const {
        const std::size_t nb = size();
        Vector out = Vector::Zero(static_cast<Eigen::Index>(nb));
        if (x < lo_ || x > hi_) return out;
        // Locate interval [knots_[mu], knots_[mu+1]) with the right end closed.
        std::size_t mu = 3;
        while (mu + 1 < knots_.size() - 4 && x >= knots_[mu + 1]) ++mu;
        // Cox-de Boor up to order 4, keeping every order for derivatives.
        std::array<std::array<double, 5>, 5> N{};  // N[k][j] order k, basis mu-k+1+j
        N[1][0] = 1.0;
        for (int k = 2; k <= 4; ++k) {
            for (int j = 0; j < k; ++j) {
                const std::size_t i = mu + 1 - static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
                double v = 0.0;
                if (j > 0) {
                    const double d = knots_[i + static_cast<std::size_t>(k) - 1] - knots_[i];
                    if (d > 0) v += (x - knots_[i]) / d * N[k - 1][j - 1];
                }
                if (j < k - 1) {
                    const double d = knots_[i + static_cast<std::size_t>(k)] - knots_[i + 1];
                    if (d > 0) v += (knots_[i + static_cast<std::size_t>(k)] - x) / d * N[k - 1][j];
                }
                N[k][j] = v;
            }
        }
        // Derivatives: differentiate `deriv` times starting from order 4 - deriv.
        if (deriv > 3) return out;
        const int base = 4 - deriv;
        std::array<double, 5> cur{};
        for (int j = 0; j < base; ++j) cur[j] = N[base][j];
        for (int k = base + 1; k <= 4; ++k) {
            std::array<double, 5> next{};
            for (int j = 0; j < k; ++j) {
                const std::size_t i = mu + 1 - static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
                double v = 0.0;
                if (j > 0) {
                    const double d = knots_[i + static_cast<std::size_t>(k) - 1] - knots_[i];
                    if (d > 0) v += (k - 1) * cur[j - 1] / d;
                }
                if (j < k - 1) {
                    const double d = knots_[i + static_cast<std::size_t>(k)] - knots_[i + 1];
                    if (d > 0) v -= (k - 1) * cur[j] / d;
                }
                next[j] = v;
            }
            cur = next;
        }
        for (int j = 0; j < 4; ++j) {
            const std::size_t i = mu - 3 + static_cast<std::size_t>(j);
            if (i < nb) out(static_cast<Eigen::Index>(i)) = cur[j];
        }
        return out;
    }

    /// Integral of products of m-th derivatives, exact via 3-point
    /// Gauss-Legendre on each knot interval.
    [[nodiscard]] Matrix roughness_penalty(int m) const {
        const auto nb = static_cast<Eigen::Index>(size());
        Matrix P = Matrix::Zero(nb, nb);
        const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
        const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
        const auto bp = breakpoints();
        for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
            const double a = bp[s], b = bp[s + 1], half = 0.5 * (b - a), mid = 0.5 * (a + b);
            for (int q = 0; q < 3; ++q) {
                const Vector d = eval(mid + half * gx[q], m);
                P.noalias() += gw[q] * half * d * d.transpose();
            }
        }
        return 0.5 * (P + P.transpose());
    }

private:
    double lo_, hi_;
    std::vector<double> knots_;
};

/// Reusable smoother for one age grid: the basis and penalty are built once.
class PenalizedSplineSmoother {
public:
    PenalizedSplineSmoother(const AgeGrid& grid, SmoothingOptions opts)
        : grid_(grid),
          opts_(std::move(opts)),
          basis_(grid.ages.front(), grid.ages.back(), opts_.knot_spacing) {
        grid_.validate();
        if (opts_.penalty_order < 1 || opts_.penalty_order > 3)
            throw DomainError("penalty order must be 1, 2 or 3 for cubic splines");
        if (opts_.lambda_grid.empty()) throw DomainError("lambda grid is empty");
        for (double l : opts_.lambda_grid)
            if (!(l > 0.0)) throw DomainError("lambda grid values must be positive");
        std::sort(opts_.lambda_grid.begin(), opts_.lambda_grid.end());
        const auto p = static_cast<Eigen::Index>(grid_.size());
        B_.resize(p, static_cast<Eigen::Index>(basis_.size()));
        for (Eigen::Index i = 0; i < p; ++i) B_.row(i) = basis_.eval(grid_.ages[static_cast<std::size_t>(i)]).transpose();
        P_ = basis_.roughness_penalty(opts_.penalty_order);
    }

    [[nodiscard]] const SmoothingOptions& options() const noexcept { return opts_; }
    [[nodiscard]] const Matrix& design() const noexcept { return B_; }

    /// y: log rates (NaN allowed where w == 0); w: variance weights.
    [[nodiscard]] SmoothCurve smooth(const Vector& y, const Vector& w) const {
        const auto p = static_cast<Eigen::Index>(grid_.size());
        if (y.size() != p || w.size() != p) throw DomainError("curve length does not match the age grid");
        Vector wn = Vector::Zero(p);
        Vector yc = Vector::Zero(p);
        Eigen::Index n_obs = 0;
        double wsum = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            if (w(i) > 0.0 && std::isfinite(w(i)) && std::isfinite(y(i))) {
                wn(i) = w(i);
                yc(i) = y(i);
                wsum += w(i);
                ++n_obs;
            }
        }
        if (n_obs == 0) throw ComputationError("curve has no observed points");
        if (n_obs < opts_.penalty_order + 2)
            throw ComputationError("curve has " + std::to_string(n_obs) + " observed points, need at least " +
                                   std::to_string(opts_.penalty_order + 2));
        // Mean-one weights make the selected lambda invariant to weight scale.
        wn *= static_cast<double>(n_obs) / wsum;

        const auto nb = B_.cols();
        Matrix G = B_.transpose() * wn.asDiagonal() * B_;
        const Vector rhs = B_.transpose() * wn.cwiseProduct(yc);
        const double ridge = 1e-10 * std::max(G.trace() / static_cast<double>(nb), 1e-300);
        G.diagonal().array() += ridge;
        Eigen::LLT<Matrix> llt(G);
        if (llt.info() != Eigen::Success) throw ComputationError("ill-conditioned spline system");
        const auto L = llt.matrixL();
        // Demmler-Reinsch: L^-1 P L^-T = U diag(s) U^T diagonalises every lambda at once.
        Matrix A = L.solve(P_);
        A = L.solve(A.transpose()).transpose();
        A = 0.5 * (A + A.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> es(A);
        if (es.info() != Eigen::Success) throw ComputationError("ill-conditioned spline system");
        const Vector s = es.eigenvalues().cwiseMax(0.0);
        const Matrix& U = es.eigenvectors();
        const Vector z = U.transpose() * L.solve(rhs);
        const Matrix LtInvU = llt.matrixU().solve(U);  // L^-T U

        double best_gcv = std::numeric_limits<double>::infinity();
        double best_lambda = opts_.lambda_grid.back();
        Vector best_fit;
        for (double lambda : opts_.lambda_grid) {
            const Vector shrink = (1.0 + lambda * s.array()).inverse().matrix();
            const Vector coef = LtInvU * shrink.cwiseProduct(z);
            const Vector fit = B_ * coef;
            const double rss = (wn.array() * (yc - fit).array().square()).sum();
            const double edf = shrink.sum();
            const double denom = static_cast<double>(n_obs) - edf;
            const double gcv = denom > 0.0 ? static_cast<double>(n_obs) * rss / (denom * denom)
                                           : std::numeric_limits<double>::infinity();
            // Ascending grid with <= keeps the larger lambda on ties.
            if (gcv <= best_gcv * (1.0 + 1e-10) || best_fit.size() == 0) {
                best_gcv = std::min(gcv, best_gcv);
                best_lambda = lambda;
                best_fit = fit;
            }
        }
        if (!best_fit.allFinite()) throw ComputationError("spline fit produced non-finite values");

        if (opts_.monotone) {
            Eigen::Index start = p;
            for (Eigen::Index i = 0; i < p; ++i)
                if (grid_.ages[static_cast<std::size_t>(i)] >= opts_.monotone_from_age) {
                    start = i;
                    break;
                }
            if (p - start >= 2) {
                const double floor_w = 1e-8 * wn.maxCoeff();
                const Vector seg_w = wn.segment(start, p - start).cwiseMax(floor_w);
                best_fit.segment(start, p - start) = isotonic_increasing(best_fit.segment(start, p - start), seg_w);
            }
        }
        return {best_fit, w, best_lambda, best_gcv};
    }

private:
    AgeGrid grid_;
    SmoothingOptions opts_;
    CubicBSplineBasis basis_;
    Matrix B_;
    Matrix P_;
};

inline SmoothCurve smooth_curve(const Vector& y, const Vector& w, const AgeGrid& grid,
                                const SmoothingOptions& opts = {}) {
    return PenalizedSplineSmoother(grid, opts).smooth(y, w);
}

/// Smoothed log-rate matrix (years x ages) per series, plus the chosen
/// penalty per year.
struct SmoothedSeries {
    Matrix values;
    Vector lambda;
};

using SmoothedPanel = std::map<SeriesId, SmoothedSeries>;

/// Smooths every (series, year) curve independently.
inline SmoothedPanel smooth_panel(const MortalityPanel& panel, const SmoothingOptions& opts = {},
                                  std::size_t threads = 1, double log_floor = kDefaultLogFloor) {
    const PenalizedSplineSmoother smoother(panel.grid, opts);
    const auto logs = to_log(panel, log_floor);
    const auto n = static_cast<Eigen::Index>(panel.n_years());
    const auto p = static_cast<Eigen::Index>(panel.n_ages());
    const std::size_t ns = panel.order.size();

    std::vector<SmoothedSeries> results(ns);
    for (auto& r : results) {
        r.values.resize(n, p);
        r.lambda.resize(n);
    }
    parallel_for(ns * static_cast<std::size_t>(n), threads, [&](std::size_t job) {
        const std::size_t si = job / static_cast<std::size_t>(n);
        const auto t = static_cast<Eigen::Index>(job % static_cast<std::size_t>(n));
        const auto& id = panel.order[si];
        const auto& s = panel.at(id);
        Vector rate = s.rate.row(t).transpose();
        Vector expo = s.exposure.row(t).transpose();
        for (Eigen::Index i = 0; i < p; ++i)
            if (!s.observed(t, i)) rate(i) = std::numeric_limits<double>::quiet_NaN();
        const Vector w = variance_weights(rate, expo);
        try {
            const auto c = smoother.smooth(logs.at(id).values.row(t).transpose(), w);
            results[si].values.row(t) = c.values.transpose();
            results[si].lambda(t) = c.lambda;
        } catch (const Error& e) {
            throw ComputationError("series " + id.str() + ", year " +
                                   std::to_string(panel.years[static_cast<std::size_t>(t)]) + ": " + e.what());
        }
    });
    SmoothedPanel out;
    for (std::size_t si = 0; si < ns; ++si) out.emplace(panel.order[si], std::move(results[si]));
    return out;
}

/// Panel with rates replaced by exp(smoothed log rate) and deaths rescaled
/// to match; filled cells become observed wherever exposure is positive.
inline MortalityPanel smoothed_rate_panel(const MortalityPanel& panel, const SmoothedPanel& smooth) {
    MortalityPanel out;
    out.grid = panel.grid;
    out.years = panel.years;
    for (const auto& id : panel.order) {
        const auto& s = panel.at(id);
        SeriesData d;
        d.exposure = s.exposure;
        d.rate = smooth.at(id).values.array().exp().matrix();
        d.deaths = d.rate.cwiseProduct(d.exposure);
        d.observed = (d.exposure.array() > 0.0);
        for (Eigen::Index t = 0; t < d.rate.rows(); ++t)
            for (Eigen::Index i = 0; i < d.rate.cols(); ++i)
                if (!d.observed(t, i)) {
                    d.rate(t, i) = std::numeric_limits<double>::quiet_NaN();
                    d.deaths(t, i) = std::numeric_limits<double>::quiet_NaN();
                }
        out.add(id, std::move(d));
    }
    return out;
}

}  // namespace gfts
