#pragma once

// Exposure-share summing matrices and forecast reconciliation (bottom-up,
// OLS and MinT) on the rate scale.

#include "gfts/assemble.hpp"
#include "gfts/error.hpp"
#include "gfts/log.hpp"
#include "gfts/panel.hpp"
#include "gfts/structure.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gfts {

enum class ReconcileMethod { Base, BottomUp, Ols, MinT };

inline std::string to_string(ReconcileMethod m) {
    switch (m) {
        case ReconcileMethod::Base: return "base";
        case ReconcileMethod::BottomUp: return "bu";
        case ReconcileMethod::Ols: return "ols";
        case ReconcileMethod::MinT: return "mint";
    }
    return "?";
}

inline ReconcileMethod parse_reconcile_method(std::string_view s) {
    if (s == "base") return ReconcileMethod::Base;
    if (s == "bu") return ReconcileMethod::BottomUp;
    if (s == "ols") return ReconcileMethod::Ols;
    if (s == "mint") return ReconcileMethod::MinT;
    throw DomainError("unknown reconciliation method '" + std::string(s) + "' (expected base, bu, ols or mint)");
}

struct SummingMatrix {
    Matrix S;  ///< nodes x bottoms
    int year = 0;
    std::optional<std::size_t> age_index;  ///< nullopt: pooled over ages
};

namespace detail {

inline SummingMatrix summing_from_exposure(const GroupStructure& g, const std::map<SeriesId, double>& expo,
                                           const std::string& where) {
    const auto nn = static_cast<Eigen::Index>(g.node_count()), nb = static_cast<Eigen::Index>(g.bottom_count());
    SummingMatrix out;
    out.S = Matrix::Zero(nn, nb);
    for (Eigen::Index r = 0; r < nn; ++r) {
        const auto& node = g.nodes[static_cast<std::size_t>(r)];
        double ev = 0.0;
        for (const auto& m : node.members) ev += expo.at(m);
        if (!(ev > 0.0) || !std::isfinite(ev))
            throw DomainError("zero exposure for node " + node.id.str() + " " + where);
        for (const auto& m : node.members) {
            const double ec = expo.at(m);
            if (node.members.size() == 1 && !(ec > 0.0))
                throw DomainError("zero exposure for node " + node.id.str() + " " + where);
            out.S(r, static_cast<Eigen::Index>(g.bottom_index(m))) = ec / ev;
        }
    }
    return out;
}

inline double cell_exposure(const MortalityPanel& panel, const SeriesId& id, Eigen::Index t, Eigen::Index i) {
    const double e = panel.at(id).exposure(t, i);
    return std::isfinite(e) ? e : 0.0;
}

}  // namespace detail

/// S for one age: entry E_c / E_v, E_v the summed exposure of v's bottoms.
inline SummingMatrix build_summing_matrix(const GroupStructure& g, const MortalityPanel& panel, int year,
                                          std::size_t age_index) {
    const auto t = static_cast<Eigen::Index>(panel.year_index(year));
    if (age_index >= panel.n_ages()) throw DomainError("age index out of range");
    std::map<SeriesId, double> expo;
    for (const auto& b : g.bottom) expo[b] = detail::cell_exposure(panel, b, t, static_cast<Eigen::Index>(age_index));
    auto out = detail::summing_from_exposure(
        g, expo, "at age " + format_age(panel.grid, age_index) + " in " + std::to_string(year));
    out.year = year;
    out.age_index = age_index;
    return out;
}

/// S from all-age exposure totals.
inline SummingMatrix build_pooled_summing_matrix(const GroupStructure& g, const MortalityPanel& panel, int year) {
    const auto t = static_cast<Eigen::Index>(panel.year_index(year));
    std::map<SeriesId, double> expo;
    for (const auto& b : g.bottom) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(panel.n_ages()); ++i) s += detail::cell_exposure(panel, b, t, i);
        expo[b] = s;
    }
    auto out = detail::summing_from_exposure(g, expo, "in " + std::to_string(year));
    out.year = year;
    return out;
}

inline std::vector<SummingMatrix> build_age_summing_matrices(const GroupStructure& g, const MortalityPanel& panel,
                                                             int year) {
    std::vector<SummingMatrix> out;
    out.reserve(panel.n_ages());
    for (std::size_t i = 0; i < panel.n_ages(); ++i) out.push_back(build_summing_matrix(g, panel, year, i));
    return out;
}

/// R = S b.
inline Matrix bottom_up(const Matrix& base_bottom, const Matrix& S) {
    if (base_bottom.rows() != S.cols()) throw DomainError("bottom forecasts do not match the summing matrix");
    return S * base_bottom;
}

namespace detail {

/// b = argmin |A b - y| for full-column-rank A.
inline Matrix least_squares(const Matrix& A, const Matrix& y) {
    Eigen::ColPivHouseholderQR<Matrix> qr(A);
    qr.setThreshold(1e-12);
    if (qr.rank() < A.cols()) throw StructuralError("summing matrix is rank deficient: malformed structure");
    return qr.solve(y);
}

}  // namespace detail

/// S (S^T S)^-1 S^T R via QR least squares.
inline Matrix ols_reconcile(const Matrix& base_all, const Matrix& S) {
    if (base_all.rows() != S.rows()) throw DomainError("base forecasts do not match the summing matrix");
    return S * detail::least_squares(S, base_all);
}

/// S (S^T W^-1 S)^-1 S^T W^-1 R via Cholesky whitening then QR.
inline Matrix mint_reconcile(const Matrix& base_all, const Matrix& S, const Matrix& W) {
    if (base_all.rows() != S.rows() || W.rows() != S.rows() || W.cols() != S.rows())
        throw DomainError("base forecasts, summing matrix and W do not conform");
    Eigen::LLT<Matrix> llt(W);
    if (llt.info() != Eigen::Success)
        throw ComputationError("MinT weight matrix is not positive definite; increase the shrinkage");
    const Matrix A = llt.matrixL().solve(S);
    const Matrix y = llt.matrixL().solve(base_all);
    return S * detail::least_squares(A, y);
}

/// Shrinkage covariance lambda * diag(W) + (1 - lambda) * W; lambda from the
/// correlation-shrinkage intensity when not given.
inline Matrix estimate_W(const Matrix& errors, std::optional<double> shrink = std::nullopt,
                         double* lambda_used = nullptr) {
    const Eigen::Index n = errors.rows(), m = errors.cols();
    if (n < 2) throw DomainError("W estimation needs at least 2 error samples");
    const Matrix x = errors.rowwise() - errors.colwise().mean();
    const double nd = static_cast<double>(n);
    Matrix cov = x.transpose() * x / (nd - 1.0);
    double lambda = 0.0;
    if (shrink) {
        if (*shrink < 0.0 || *shrink > 1.0) throw DomainError("shrinkage must lie in [0, 1]");
        lambda = *shrink;
    } else {
        const Vector sd = cov.diagonal().cwiseSqrt();
        Matrix z = x;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (sd(j) > 0.0) z.col(j) /= sd(j);
            else z.col(j).setZero();
        }
        double num = 0.0, den = 0.0;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j) {
                const Vector w = z.col(i).cwiseProduct(z.col(j));
                const double wbar = w.mean();
                const double r = wbar * nd / (nd - 1.0);
                const double var_r = nd / ((nd - 1.0) * (nd - 1.0) * (nd - 1.0)) * (w.array() - wbar).square().sum();
                num += var_r;
                den += r * r;
            }
        lambda = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 1.0;
    }
    Matrix W = (1.0 - lambda) * cov;
    W.diagonal() = cov.diagonal();
    // Repair: nodes with no error variance get a small positive floor.
    const double dmax = cov.diagonal().maxCoeff();
    const double floor = dmax > 0.0 ? 1e-10 * dmax : 1.0;
    for (Eigen::Index j = 0; j < m; ++j)
        if (!(W(j, j) > floor)) W(j, j) = floor;
    if (lambda_used) *lambda_used = lambda;
    return 0.5 * (W + W.transpose());
}

/// Linear reconciliation map R -> b for one summing matrix.
class Reconciler {
public:
    Reconciler(const Matrix& S, ReconcileMethod method, const Matrix* W = nullptr) : S_(S), method_(method) {
        const Eigen::Index nn = S.rows(), nb = S.cols();
        switch (method) {
            case ReconcileMethod::Base: break;
            case ReconcileMethod::BottomUp: {
                // Aggregates with a single member duplicate a bottom row; the
                // last unit row of each column is the bottom series itself.
                std::vector<Eigen::Index> pick(static_cast<std::size_t>(nb), -1);
                for (Eigen::Index r = 0; r < nn; ++r) {
                    Eigen::Index c = -1;
                    int nz = 0;
                    for (Eigen::Index j = 0; j < nb; ++j)
                        if (S(r, j) != 0.0) {
                            ++nz;
                            c = j;
                        }
                    if (nz == 1 && S(r, c) == 1.0) pick[static_cast<std::size_t>(c)] = r;
                }
                G_ = Matrix::Zero(nb, nn);
                for (Eigen::Index c = 0; c < nb; ++c) {
                    const auto r = pick[static_cast<std::size_t>(c)];
                    if (r < 0) throw StructuralError("summing matrix lacks an identity row for every bottom series");
                    G_(c, r) = 1.0;
                }
                break;
            }
            case ReconcileMethod::Ols: G_ = detail::least_squares(S, Matrix::Identity(nn, nn)); break;
            case ReconcileMethod::MinT: {
                if (!W) throw DomainError("MinT needs a weight matrix");
                Eigen::LLT<Matrix> llt(*W);
                if (llt.info() != Eigen::Success)
                    throw ComputationError("MinT weight matrix is not positive definite; increase the shrinkage");
                const Matrix A = llt.matrixL().solve(S);
                const Matrix Linv = llt.matrixL().solve(Matrix::Identity(nn, nn));
                G_ = detail::least_squares(A, Linv);
                break;
            }
        }
    }

    [[nodiscard]] Matrix bottom(const Matrix& R) const {
        if (method_ == ReconcileMethod::Base) throw DomainError("base forecasts have no reconciled bottom level");
        return G_ * R;
    }
    [[nodiscard]] Matrix apply(const Matrix& R) const {
        if (method_ == ReconcileMethod::Base) return R;
        return S_ * (G_ * R);
    }

private:
    Matrix S_;
    ReconcileMethod method_;
    Matrix G_;
};

/// Per-age W from one-step rate-scale errors exp(f) - exp(fhat), aligned on
/// the target years common to all nodes.
inline std::vector<Matrix> estimate_W_by_age(const ForecastSet& base, const GroupStructure& g,
                                             std::optional<double> shrink = std::nullopt) {
    std::set<Eigen::Index> common;
    bool first = true;
    for (const auto& node : g.nodes) {
        const auto& es = base.series.at(node.id).errors_h1;
        std::set<Eigen::Index> t(es.targets.begin(), es.targets.end());
        if (first) {
            common = std::move(t);
            first = false;
        } else {
            std::set<Eigen::Index> keep;
            std::set_intersection(common.begin(), common.end(), t.begin(), t.end(), std::inserter(keep, keep.begin()));
            common = std::move(keep);
        }
    }
    if (common.size() < 2) throw DomainError("too few common in-sample errors to estimate W");
    const auto nn = static_cast<Eigen::Index>(g.node_count());
    const auto ns = static_cast<Eigen::Index>(common.size());
    const Eigen::Index p = base.series.at(g.nodes.front().id).point.cols();
    std::vector<Matrix> E(static_cast<std::size_t>(p), Matrix(ns, nn));
    for (Eigen::Index r = 0; r < nn; ++r) {
        const auto& es = base.series.at(g.nodes[static_cast<std::size_t>(r)].id).errors_h1;
        Eigen::Index z = 0, row = 0;
        for (Eigen::Index t : common) {
            while (es.targets[static_cast<std::size_t>(z)] != t) ++z;
            for (Eigen::Index i = 0; i < p; ++i) {
                const double f = es.fitted(z, i);
                E[static_cast<std::size_t>(i)](row, r) = std::exp(f + es.errors(z, i)) - std::exp(f);
            }
            ++row;
        }
    }
    std::vector<Matrix> out;
    out.reserve(E.size());
    for (const auto& e : E) out.push_back(estimate_W(e, shrink));
    return out;
}

/// Reconciles point forecasts and bounds age by age on the rate scale and
/// returns log rates (floored) for every node.
inline ForecastSet reconcile_forecasts(const ForecastSet& base, const GroupStructure& g,
                                       const std::vector<SummingMatrix>& S_by_age, ReconcileMethod method,
                                       const std::vector<Matrix>* W_by_age = nullptr,
                                       double log_floor = kDefaultLogFloor) {
    if (method == ReconcileMethod::Base) return base;
    if (method == ReconcileMethod::MinT && (!W_by_age || W_by_age->size() != S_by_age.size()))
        throw DomainError("MinT needs one weight matrix per age");
    const auto nn = static_cast<Eigen::Index>(g.node_count());
    const auto p = static_cast<Eigen::Index>(S_by_age.size());
    const int H = base.H;
    const SeriesForecast& any = base.series.at(g.bottom.front());
    const bool band = any.lower.size() > 0;

    ForecastSet out;
    out.alpha = base.alpha;
    out.H = H;
    for (const auto& node : g.nodes) {
        SeriesForecast sf;
        sf.point.resize(H, p);
        if (band) {
            sf.lower.resize(H, p);
            sf.upper.resize(H, p);
        }
        const auto it = base.series.find(node.id);
        if (it != base.series.end()) {
            sf.pi = it->second.pi;
            sf.errors_h1 = it->second.errors_h1;
        }
        out.series.emplace(node.id, std::move(sf));
    }
    auto gather = [&](Eigen::Index i, auto member) {
        Matrix R = Matrix::Zero(nn, H);
        for (Eigen::Index r = 0; r < nn; ++r) {
            const auto& id = g.nodes[static_cast<std::size_t>(r)].id;
            const auto it = base.series.find(id);
            if (it == base.series.end()) {
                if (method != ReconcileMethod::BottomUp) throw DomainError("no base forecast for node " + id.str());
                continue;
            }
            const Matrix& src = member(it->second);
            for (int h = 0; h < H; ++h) R(r, h) = std::exp(src(h, i));
        }
        return R;
    };
    auto scatter = [&](Eigen::Index i, const Matrix& R, auto member) {
        for (Eigen::Index r = 0; r < nn; ++r) {
            Matrix& dst = member(out.series.at(g.nodes[static_cast<std::size_t>(r)].id));
            for (int h = 0; h < H; ++h) dst(h, i) = std::log(std::max(R(r, h), log_floor));
        }
    };
    for (Eigen::Index i = 0; i < p; ++i) {
        const auto& S = S_by_age[static_cast<std::size_t>(i)].S;
        if (S.rows() != nn || S.cols() != static_cast<Eigen::Index>(g.bottom_count()))
            throw DomainError("summing matrix does not match the structure");
        const Reconciler rec(S, method, W_by_age ? &(*W_by_age)[static_cast<std::size_t>(i)] : nullptr);
        scatter(i, rec.apply(gather(i, [](const SeriesForecast& s) -> const Matrix& { return s.point; })),
                [](SeriesForecast& s) -> Matrix& { return s.point; });
        if (band) {
            const Matrix lo = rec.apply(gather(i, [](const SeriesForecast& s) -> const Matrix& { return s.lower; }));
            const Matrix hi = rec.apply(gather(i, [](const SeriesForecast& s) -> const Matrix& { return s.upper; }));
            scatter(i, lo.cwiseMin(hi), [](SeriesForecast& s) -> Matrix& { return s.lower; });
            scatter(i, lo.cwiseMax(hi), [](SeriesForecast& s) -> Matrix& { return s.upper; });
        }
    }
    return out;
}

/// max over ages and horizons of |R - S b| on the rate scale, where b are
/// the forecasts of the bottom series.
inline double coherence_residual(const ForecastSet& fs, const GroupStructure& g,
                                 const std::vector<SummingMatrix>& S_by_age) {
    double worst = 0.0;
    const int H = fs.H;
    for (std::size_t i = 0; i < S_by_age.size(); ++i) {
        const auto& S = S_by_age[i].S;
        Matrix b(static_cast<Eigen::Index>(g.bottom_count()), H), R(static_cast<Eigen::Index>(g.node_count()), H);
        for (std::size_t j = 0; j < g.bottom.size(); ++j)
            for (int h = 0; h < H; ++h)
                b(static_cast<Eigen::Index>(j), h) = std::exp(fs.series.at(g.bottom[j]).point(h, static_cast<Eigen::Index>(i)));
        for (std::size_t r = 0; r < g.nodes.size(); ++r)
            for (int h = 0; h < H; ++h)
                R(static_cast<Eigen::Index>(r), h) = std::exp(fs.series.at(g.nodes[r].id).point(h, static_cast<Eigen::Index>(i)));
        const Matrix d = R - S * b;
        const double scale = std::max(R.cwiseAbs().maxCoeff(), 1e-300);
        worst = std::max(worst, d.cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

}  // namespace gfts
