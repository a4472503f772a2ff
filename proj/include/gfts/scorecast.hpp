#pragma once

// Univariate forecasting of principal component scores: automatic ARIMA
// (KPSS differencing, CSS estimation, AICc order selection) and a
// random walk with drift.

#include "gfts/error.hpp"
#include "gfts/panel.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace gfts {

enum class ScoreMethod { Arima, Rwd };

inline std::string to_string(ScoreMethod m) { return m == ScoreMethod::Arima ? "arima" : "rwd"; }

inline ScoreMethod parse_score_method(std::string_view s) {
    if (s == "arima") return ScoreMethod::Arima;
    if (s == "rwd") return ScoreMethod::Rwd;
    throw DomainError("unknown score method '" + std::string(s) + "' (expected arima or rwd)");
}

struct ScorecastOptions {
    ScoreMethod method = ScoreMethod::Arima;
    int max_p = 3;
    int max_q = 3;
    int max_d = 2;
};

struct ScoreModel {
    int p = 0, d = 0, q = 0;
    std::vector<double> ar;
    std::vector<double> ma;
    bool has_constant = false;
    double constant = 0.0;  ///< mean of the differenced series (drift when d = 1)
    double sigma2 = 0.0;
    std::size_t start = 0;  ///< first differenced index with a computed residual
    double aicc = std::numeric_limits<double>::infinity();
    bool converged = true;
    bool fallback = false;  ///< random walk with drift used in place of ARIMA

    [[nodiscard]] std::string order_str() const {
        return "(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")";
    }
};

// ---------------------------------------------------------------- optimiser

struct NelderMeadOptions {
    int max_evals = 4000;
    double ftol = 1e-10;
    double xtol = 1e-9;
};

struct NelderMeadResult {
    Vector x;
    double fx = 0.0;
    int evals = 0;
    bool converged = false;
};

inline NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0,
                                    double step = 0.1, const NelderMeadOptions& opts = {}) {
    const Eigen::Index n = x0.size();
    NelderMeadResult res;
    if (n == 0) {
        res.x = x0;
        res.fx = f(x0);
        res.evals = 1;
        res.converged = std::isfinite(res.fx);
        return res;
    }
    std::vector<Vector> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> fv(static_cast<std::size_t>(n + 1));
    for (Eigen::Index i = 0; i < n; ++i) pts[static_cast<std::size_t>(i + 1)](i) += step;
    for (std::size_t i = 0; i < pts.size(); ++i) fv[i] = f(pts[i]);
    int evals = static_cast<int>(pts.size());
    std::vector<std::size_t> idx(pts.size());

    while (true) {
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = idx.front(), worst = idx.back(), second = idx[idx.size() - 2];
        double size = 0.0;
        for (const auto& pt : pts) size = std::max(size, (pt - pts[best]).cwiseAbs().maxCoeff());
        const double spread = std::abs(fv[worst] - fv[best]);
        if (std::isfinite(fv[best]) && spread <= opts.ftol * (1.0 + std::abs(fv[best])) && size <= opts.xtol * (1.0 + pts[best].cwiseAbs().maxCoeff())) {
            res.converged = true;
            break;
        }
        if (evals >= opts.max_evals) break;

        Vector centroid = Vector::Zero(n);
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (i != worst) centroid += pts[i];
        centroid /= static_cast<double>(n);

        const Vector xr = centroid + (centroid - pts[worst]);
        const double fr = f(xr);
        ++evals;
        if (fr < fv[best]) {
            const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = f(xe);
            ++evals;
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid)) : Vector(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = f(xc);
        ++evals;
        if (fc < (outside ? fr : fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            fv[i] = f(pts[i]);
            ++evals;
        }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    res.x = pts[static_cast<std::size_t>(it - fv.begin())];
    res.fx = *it;
    res.evals = evals;
    return res;
}

// ---------------------------------------------------------------- helpers

inline std::vector<double> difference(const std::vector<double>& y, int d = 1) {
    std::vector<double> out = y;
    for (int k = 0; k < d; ++k) {
        if (out.size() <= 1) return {};
        std::vector<double> next(out.size() - 1);
        for (std::size_t t = 1; t < out.size(); ++t) next[t - 1] = out[t] - out[t - 1];
        out = std::move(next);
    }
    return out;
}

/// Largest modulus among the roots of z^k - c_1 z^(k-1) - ... - c_k.
/// Roots of 1 - c_1 B - ... - c_k B^k lie outside the unit circle iff this
/// is below 1.
inline double companion_radius(const std::vector<double>& c) {
    if (c.empty()) return 0.0;
    if (c.size() == 1) return std::abs(c[0]);
    const auto k = static_cast<Eigen::Index>(c.size());
    Matrix comp = Matrix::Zero(k, k);
    for (Eigen::Index j = 0; j < k; ++j) comp(0, j) = c[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 1; i < k; ++i) comp(i, i - 1) = 1.0;
    Eigen::EigenSolver<Matrix> es(comp, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Level-stationarity statistic with a Bartlett long-run variance.
inline double kpss_statistic(const std::vector<double>& y) {
    const std::size_t n = y.size();
    if (n < 2) return 0.0;
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> e(n);
    for (std::size_t t = 0; t < n; ++t) e[t] = y[t] - mean;
    double ss = 0.0;
    for (double v : e) ss += v * v;
    const double scale = std::max(1.0, std::abs(mean));
    if (ss <= 1e-24 * scale * scale * static_cast<double>(n)) return 0.0;
    const auto lags = static_cast<std::size_t>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 0.25)));
    double lrv = ss / static_cast<double>(n);
    for (std::size_t s = 1; s <= lags && s < n; ++s) {
        double g = 0.0;
        for (std::size_t t = s; t < n; ++t) g += e[t] * e[t - s];
        lrv += 2.0 * (1.0 - static_cast<double>(s) / static_cast<double>(lags + 1)) * g / static_cast<double>(n);
    }
    if (!(lrv > 0.0)) return std::numeric_limits<double>::infinity();
    double cum = 0.0, eta = 0.0;
    for (double v : e) {
        cum += v;
        eta += cum * cum;
    }
    return eta / (static_cast<double>(n) * static_cast<double>(n) * lrv);
}

inline constexpr double kKpssCritical5 = 0.463;

/// Upper bound on the companion radius of fitted AR and MA polynomials.
inline constexpr double kMaxRootRadius = 0.99;

/// Smallest d <= max_d whose differenced series passes the KPSS check.
inline int select_d(const std::vector<double>& y, int max_d) {
    for (int d = 0; d < max_d; ++d) {
        const auto w = difference(y, d);
        if (w.size() < 3 || kpss_statistic(w) < kKpssCritical5) return d;
    }
    return max_d;
}

namespace detail {

/// Residuals of the ARMA recursion on w; e_t = 0 before `start`, lags
/// before the series start are taken at the mean.
inline std::vector<double> arma_residuals(const std::vector<double>& w, const std::vector<double>& ar,
                                          const std::vector<double>& ma, double mu, std::size_t start) {
    std::vector<double> e(w.size(), 0.0);
    for (std::size_t t = start; t < w.size(); ++t) {
        double pred = 0.0;
        for (std::size_t i = 0; i < ar.size(); ++i)
            if (t >= i + 1) pred += ar[i] * (w[t - i - 1] - mu);
        for (std::size_t j = 0; j < ma.size(); ++j)
            if (t >= j + 1) pred += ma[j] * e[t - j - 1];
        e[t] = (w[t] - mu) - pred;
    }
    return e;
}

struct CssFit {
    ScoreModel model;
    bool ok = false;
};

inline CssFit fit_css(const std::vector<double>& w, int p, int q, int d, bool constant, std::size_t start,
                      double sigma_floor) {
    CssFit out;
    const std::size_t n_eff = w.size() > start ? w.size() - start : 0;
    const int k = p + q + (constant ? 1 : 0) + 1;
    if (n_eff < static_cast<std::size_t>(k + 2)) return out;

    double wmean = 0.0;
    for (double v : w) wmean += v;
    wmean = w.empty() ? 0.0 : wmean / static_cast<double>(w.size());

    const auto np = static_cast<Eigen::Index>(p + q + (constant ? 1 : 0));
    auto unpack = [&](const Vector& x, std::vector<double>& ar, std::vector<double>& ma, double& mu) {
        ar.assign(static_cast<std::size_t>(p), 0.0);
        ma.assign(static_cast<std::size_t>(q), 0.0);
        for (int i = 0; i < p; ++i) ar[static_cast<std::size_t>(i)] = x(i);
        for (int j = 0; j < q; ++j) ma[static_cast<std::size_t>(j)] = x(p + j);
        mu = constant ? x(p + q) : 0.0;
    };
    std::vector<double> ar, ma;
    double mu = 0.0;
    auto objective = [&](const Vector& x) {
        unpack(x, ar, ma, mu);
        if (companion_radius(ar) >= kMaxRootRadius) return 1e300;
        std::vector<double> neg(ma.size());
        for (std::size_t j = 0; j < ma.size(); ++j) neg[j] = -ma[j];
        if (companion_radius(neg) >= kMaxRootRadius) return 1e300;
        const auto e = arma_residuals(w, ar, ma, mu, start);
        double ss = 0.0;
        for (std::size_t t = start; t < e.size(); ++t) ss += e[t] * e[t];
        return ss;
    };
    Vector x0 = Vector::Zero(np);
    if (constant) x0(p + q) = wmean;
    // Two passes: the second restarts the simplex at the first optimum.
    NelderMeadResult r = nelder_mead(objective, x0, 0.1);
    if (np > 0) {
        Vector x1 = r.x;
        NelderMeadResult r2 = nelder_mead(objective, x1, 0.05);
        if (r2.fx <= r.fx) r = r2;
    }
    if (!std::isfinite(r.fx) || r.fx >= 1e299) return out;

    ScoreModel m;
    m.p = p;
    m.d = d;
    m.q = q;
    unpack(r.x, m.ar, m.ma, m.constant);
    m.has_constant = constant;
    m.start = start;
    m.sigma2 = std::max(r.fx / static_cast<double>(n_eff), sigma_floor);
    const double ne = static_cast<double>(n_eff), kd = static_cast<double>(k);
    const double loglik = -0.5 * ne * (std::log(2.0 * std::numbers::pi * m.sigma2) + 1.0);
    m.aicc = -2.0 * loglik + 2.0 * kd + 2.0 * kd * (kd + 1.0) / (ne - kd - 1.0);
    m.converged = r.converged;
    out.model = std::move(m);
    out.ok = r.converged;
    return out;
}

}  // namespace detail

/// Random walk with drift; drift from the first and last observation.
inline ScoreModel rwd_model(const std::vector<double>& y) {
    ScoreModel m;
    m.p = 0;
    m.d = 1;
    m.q = 0;
    m.has_constant = true;
    m.constant = y.size() >= 2 ? (y.back() - y.front()) / static_cast<double>(y.size() - 1) : 0.0;
    const auto w = difference(y, 1);
    double ss = 0.0;
    for (double v : w) ss += (v - m.constant) * (v - m.constant);
    m.sigma2 = w.size() > 1 ? ss / static_cast<double>(w.size() - 1) : 0.0;
    return m;
}

inline std::vector<double> rwd_forecast(const std::vector<double>& y, int h) {
    if (y.size() < 2) throw DomainError("random walk with drift needs at least 2 observations");
    if (h < 1) throw DomainError("horizon must be >= 1");
    const double drift = (y.back() - y.front()) / static_cast<double>(y.size() - 1);
    std::vector<double> out(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) out[static_cast<std::size_t>(j)] = y.back() + drift * static_cast<double>(j + 1);
    return out;
}

/// Automatic ARIMA: d by KPSS, then every (p, q) on the grid by CSS; the
/// smallest AICc among converged candidates wins, ties to the simpler model.
inline ScoreModel fit_arima(const std::vector<double>& y, int max_p = 3, int max_q = 3, int max_d = 2) {
    if (y.size() < 10) throw DomainError("ARIMA needs at least 10 observations");
    for (double v : y)
        if (!std::isfinite(v)) throw DomainError("score series contains non-finite values");
    if (max_p < 0 || max_q < 0 || max_d < 0 || max_p > 3 || max_q > 3 || max_d > 2)
        throw DomainError("ARIMA orders must satisfy p, q in [0, 3] and d in [0, 2]");

    const int d = select_d(y, max_d);
    const auto w = difference(y, d);
    const bool constant = d <= 1;
    double var = 0.0, mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(y.size());
    const double sigma_floor = 1e-12 * (var + mean * mean) + 1e-300;
    const auto start = static_cast<std::size_t>(max_p);

    ScoreModel best;
    bool found = false;
    for (int order = 0; order <= max_p + max_q; ++order) {
        for (int p = 0; p <= std::min(order, max_p); ++p) {
            const int q = order - p;
            if (q > max_q) continue;
            auto fit = detail::fit_css(w, p, q, d, constant, start, sigma_floor);
            if (!fit.ok) continue;
            if (!found || fit.model.aicc < best.aicc) {
                best = std::move(fit.model);
                found = true;
            }
        }
    }
    if (!found) {
        ScoreModel m = rwd_model(y);
        m.converged = false;
        m.fallback = true;
        return m;
    }
    return best;
}

inline ScoreModel fit_score_model(const std::vector<double>& y, const ScorecastOptions& opts = {}) {
    if (opts.method == ScoreMethod::Rwd) {
        if (y.size() < 2) throw DomainError("random walk with drift needs at least 2 observations");
        ScoreModel m = rwd_model(y);
        m.fallback = false;
        return m;
    }
    return fit_arima(y, opts.max_p, opts.max_q, opts.max_d);
}

/// h-step forecasts: ARMA recursion on the differenced series with future
/// innovations at 0, then integrated d times. Any series length >= 1 works;
/// missing history is treated as the model mean.
inline std::vector<double> forecast_scores(const ScoreModel& model, const std::vector<double>& y, int h) {
    if (h < 1) throw DomainError("horizon must be >= 1");
    if (y.empty()) throw DomainError("cannot forecast an empty series");
    std::vector<std::vector<double>> levels{y};
    for (int k = 0; k < model.d; ++k) levels.push_back(difference(levels.back(), 1));
    const auto& w = levels.back();
    const double mu = model.has_constant ? model.constant : 0.0;
    const auto start = std::max(model.start, static_cast<std::size_t>(model.p));
    const auto e = detail::arma_residuals(w, model.ar, model.ma, mu, std::min(start, w.size()));

    std::vector<double> z(w.size());
    for (std::size_t t = 0; t < w.size(); ++t) z[t] = w[t] - mu;
    std::vector<double> eext = e;
    const std::size_t n = z.size();
    for (int j = 0; j < h; ++j) {
        const std::size_t t = n + static_cast<std::size_t>(j);
        double v = 0.0;
        for (std::size_t i = 0; i < model.ar.size(); ++i)
            if (t >= i + 1) v += model.ar[i] * z[t - i - 1];
        for (std::size_t k = 0; k < model.ma.size(); ++k)
            if (t >= k + 1) v += model.ma[k] * eext[t - k - 1];
        z.push_back(v);
        eext.push_back(0.0);
    }
    std::vector<double> fut(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) fut[static_cast<std::size_t>(j)] = z[n + static_cast<std::size_t>(j)] + mu;
    for (int k = model.d - 1; k >= 0; --k) {
        const auto& lv = levels[static_cast<std::size_t>(k)];
        double last = lv.empty() ? 0.0 : lv.back();
        for (auto& v : fut) {
            last += v;
            v = last;
        }
    }
    return fut;
}

/// Convenience wrapper dispatching on the configured method.
inline std::vector<double> forecast_series(const std::vector<double>& y, int h, const ScorecastOptions& opts = {}) {
    return forecast_scores(fit_score_model(y, opts), y, h);
}

}  // namespace gfts
