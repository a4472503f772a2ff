#pragma once

// Autocovariance, kernel weights, plug-in bandwidth and the kernel
// long-run covariance estimator for (stacked) functional time series.
//
// Every estimator here is a quadratic form X^T A X / n in the centred
// n x d data matrix X, with A an n x n Toeplitz matrix of kernel weights.
// That lets the bandwidth and the eigenstructure be computed in the
// n-dimensional sample space even when d = (series x ages) is large.

#include "gfts/error.hpp"
#include "gfts/log.hpp"
#include "gfts/panel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>
#include <string>

namespace gfts {

enum class Kernel { Bartlett, FlatTop };

inline std::string to_string(Kernel k) { return k == Kernel::Bartlett ? "bartlett" : "flattop"; }

inline Kernel parse_kernel(std::string_view s) {
    if (s == "bartlett") return Kernel::Bartlett;
    if (s == "flattop") return Kernel::FlatTop;
    throw DomainError("unknown kernel '" + std::string(s) + "' (expected bartlett or flattop)");
}

/// Curves as rows (n x d) plus the quadrature weight of one grid step.
struct CurvePanel {
    Matrix values;
    double grid_weight = 1.0;

    [[nodiscard]] Eigen::Index n() const noexcept { return values.rows(); }
    [[nodiscard]] Eigen::Index d() const noexcept { return values.cols(); }
};

/// Kernel constants used by the plug-in bandwidth.
struct KernelConstants {
    int q;             ///< characteristic exponent
    double omega_q;    ///< lim |u|^-q (1 - W(u)) as u -> 0
    double l2_norm_sq; ///< integral of W(u)^2
};

inline KernelConstants kernel_constants(Kernel k) {
    switch (k) {
        case Kernel::Bartlett: return {1, 1.0, 2.0 / 3.0};
        // Flat-top is 1 near the origin; q = 2, omega = 1 stand in for its
        // (formally infinite) order so the plug-in formula stays finite.
        case Kernel::FlatTop: return {2, 1.0, 4.0 / 3.0};
    }
    throw DomainError("unknown kernel");
}

/// W(u) with support [-m, m]; W(0) = 1, 0 <= W <= 1, even.
inline double kernel_weight(double u, Kernel kernel, double m = 1.0) {
    if (!(m > 0.0)) throw DomainError("kernel support must be positive");
    const double a = std::abs(u) / m;
    switch (kernel) {
        case Kernel::Bartlett: return a <= 1.0 ? 1.0 - a : 0.0;
        case Kernel::FlatTop:
            if (a <= 0.5) return 1.0;
            if (a <= 1.0) return 2.0 * (1.0 - a);
            return 0.0;
    }
    throw DomainError("unknown kernel");
}

inline Matrix centred(const Matrix& x) { return x.rowwise() - x.colwise().mean(); }

namespace detail {

/// Singular values at or below this are rounding noise of the centring.
inline double rank_tolerance(const Matrix& raw, double top_singular_value) {
    const double dim = static_cast<double>(std::max(raw.rows(), raw.cols()));
    const double scale = raw.size() ? raw.cwiseAbs().maxCoeff() : 0.0;
    return 1e-13 * dim * std::max(top_singular_value, scale);
}

}  // namespace detail

/// Sample autocovariance at lag l with divisor n:
/// (1/n) sum_t (f_t - mean)(f_{t+l} - mean)^T; gamma_{-l} = gamma_l^T.
inline Matrix autocov(const CurvePanel& panel, long lag) {
    const Eigen::Index n = panel.n();
    if (std::labs(lag) >= n) throw DomainError("|lag| must be smaller than the number of curves");
    const Matrix x = centred(panel.values);
    const Eigen::Index a = std::labs(lag);
    const Eigen::Index len = n - a;
    Matrix g;
    if (lag >= 0)
        g = x.topRows(len).transpose() * x.bottomRows(len);
    else
        g = x.bottomRows(len).transpose() * x.topRows(len);
    return g / static_cast<double>(n);
}

/// Toeplitz weight matrix A(s, t) = w(t - s) for a lag-weight function.
template <typename LagWeight>
Matrix lag_weight_matrix(Eigen::Index n, LagWeight&& w) {
    Matrix a(n, n);
    for (Eigen::Index s = 0; s < n; ++s)
        for (Eigen::Index t = 0; t < n; ++t) a(s, t) = w(t - s);
    return a;
}

/// Data-driven bandwidth. A pilot v0 = n^(1/5) weights the lag
/// autocovariances; the ratio of the q-th moment term to the level term
/// then gives v = (2 q w_q^2 |C_q|^2 n / (|W|_2^2 |C|^2_aug))^(1/(2q+1)),
/// floored at 1.
inline double plugin_bandwidth(const CurvePanel& panel, Kernel kernel = Kernel::Bartlett) {
    const Eigen::Index n = panel.n();
    if (n < 8) throw DomainError("plug-in bandwidth needs at least 8 curves");
    const auto kc = kernel_constants(kernel);
    const Matrix x = centred(panel.values);
    const Matrix gram = x * x.transpose();  // n x n
    const double spread = std::sqrt(std::max(0.0, gram.trace()));
    if (!(spread > detail::rank_tolerance(panel.values, 0.0))) {
        warn("constant panel: plug-in bandwidth set to 1");
        return 1.0;
    }
    const double v0 = std::pow(static_cast<double>(n), 0.2);
    const Matrix a0 = lag_weight_matrix(n, [&](Eigen::Index l) { return kernel_weight(static_cast<double>(l) / v0, kernel); });
    const Matrix aq = lag_weight_matrix(n, [&](Eigen::Index l) {
        return std::pow(std::abs(static_cast<double>(l)), kc.q) * kernel_weight(static_cast<double>(l) / v0, kernel);
    });
    const double nd = static_cast<double>(n);
    // |X^T A X|_F^2 = tr(A K A K) with K the Gram matrix; traces likewise.
    const Matrix ak0 = a0 * gram, akq = aq * gram;
    const double c_fro_sq = (ak0.cwiseProduct(ak0.transpose())).sum() / (nd * nd);
    const double c_trace = ak0.trace() / nd;
    const double cq_fro_sq = (akq.cwiseProduct(akq.transpose())).sum() / (nd * nd);
    const double aug = c_fro_sq + c_trace * c_trace;
    if (!(aug > 0.0)) {
        warn("degenerate long-run covariance: plug-in bandwidth set to 1");
        return 1.0;
    }
    const double ratio = 2.0 * kc.q * kc.omega_q * kc.omega_q * cq_fro_sq * nd / (kc.l2_norm_sq * aug);
    const double v = std::pow(ratio, 1.0 / (2.0 * kc.q + 1.0));
    return std::isfinite(v) ? std::max(1.0, v) : 1.0;
}

/// Long-run covariance with its spectral decomposition. Eigenvalues are
/// non-increasing and clipped at zero; the eigenvectors span the data space
/// (rank <= n) and the remaining spectrum is exactly zero.
struct LongRunCov {
    Matrix matrix;        ///< d x d, exactly symmetric, PSD
    Vector eigenvalues;   ///< r, non-increasing, >= 0
    Matrix eigenvectors;  ///< d x r, orthonormal columns
    double bandwidth = 1.0;
    Kernel kernel = Kernel::Bartlett;
};

/// C = sum_l W(l / v) gamma_l, symmetrised, negative eigenvalues clipped.
inline LongRunCov long_run_cov(const CurvePanel& panel, double v, Kernel kernel = Kernel::Bartlett,
                               bool with_matrix = true) {
    if (!(v >= 1.0)) throw DomainError("bandwidth must be >= 1");
    const Eigen::Index n = panel.n();
    if (n < 2) throw DomainError("long-run covariance needs at least 2 curves");
    const Matrix x = centred(panel.values);
    const Matrix a = lag_weight_matrix(n, [&](Eigen::Index l) { return kernel_weight(static_cast<double>(l) / v, kernel); });

    // X = U S V^T (thin); C = V (S U^T A U S / n) V^T.
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sv = svd.singularValues();
    Eigen::Index r = 0;
    const double tol = detail::rank_tolerance(panel.values, sv.size() ? sv(0) : 0.0);
    while (r < sv.size() && sv(r) > tol) ++r;

    LongRunCov out;
    out.bandwidth = v;
    out.kernel = kernel;
    if (r == 0) {
        out.eigenvalues = Vector::Zero(0);
        out.eigenvectors = Matrix::Zero(x.cols(), 0);
        if (with_matrix) out.matrix = Matrix::Zero(x.cols(), x.cols());
        return out;
    }
    const Matrix us = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
    Matrix m = us.transpose() * a * us / static_cast<double>(n);
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw ComputationError("eigendecomposition of long-run covariance failed");
    // Reverse to non-increasing order.
    out.eigenvalues = es.eigenvalues().reverse().cwiseMax(0.0);
    out.eigenvectors = svd.matrixV().leftCols(r) * es.eigenvectors().rowwise().reverse();
    if (with_matrix) {
        const Matrix g = out.eigenvectors * out.eigenvalues.cwiseSqrt().asDiagonal();
        Matrix c = g * g.transpose();
        out.matrix = 0.5 * (c + c.transpose());
    }
    return out;
}

}  // namespace gfts
