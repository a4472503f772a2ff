#pragma once

// Dynamic functional principal component analysis of one series or a
// stacked block of series, built on the long-run covariance.

#include "gfts/error.hpp"
#include "gfts/lrcov.hpp"
#include "gfts/panel.hpp"
#include "gfts/structure.hpp"

#include <Eigen/Dense>

#include <map>
#include <vector>

namespace gfts {

struct FpcaOptions {
    double threshold = 0.9;
    std::size_t max_K = 10;
};

struct FpcaModel {
    std::vector<SeriesId> members;  ///< block order of the stacked vector
    Eigen::Index ages = 0;          ///< p; d = members.size() * p
    double grid_weight = 1.0;
    Vector mean;                    ///< d
    Vector eigenvalues;             ///< K retained, non-increasing, > 0
    Vector all_eigenvalues;         ///< full non-zero spectrum
    Matrix components;              ///< d x K, orthonormal under the grid inner product
    Matrix scores;                  ///< n x K
    Matrix residuals;               ///< n x d truncation error e_t(x)

    [[nodiscard]] Eigen::Index K() const noexcept { return components.cols(); }
    [[nodiscard]] std::size_t omega() const noexcept { return members.size(); }

    /// Component segment of one member series (p x K).
    [[nodiscard]] Matrix member_components(std::size_t l) const {
        return components.middleRows(static_cast<Eigen::Index>(l) * ages, ages);
    }
};

/// Row t = [f_t^(1), ..., f_t^(omega)] in block order.
inline CurvePanel stack(const std::map<SeriesId, Matrix>& curves, const JointBlockSpec& block,
                        double grid_weight = 1.0) {
    if (block.members.empty()) throw DomainError("block " + block.name + " is empty");
    const auto it0 = curves.find(block.members.front());
    if (it0 == curves.end()) throw DomainError("series " + block.members.front().str() + " missing");
    const Eigen::Index n = it0->second.rows(), p = it0->second.cols();
    CurvePanel out;
    out.grid_weight = grid_weight;
    out.values.resize(n, p * static_cast<Eigen::Index>(block.members.size()));
    for (std::size_t l = 0; l < block.members.size(); ++l) {
        auto it = curves.find(block.members[l]);
        if (it == curves.end()) throw DomainError("series " + block.members[l].str() + " missing");
        if (it->second.rows() != n || it->second.cols() != p)
            throw DomainError("series " + block.members[l].str() + " has a different shape");
        out.values.middleCols(static_cast<Eigen::Index>(l) * p, p) = it->second;
    }
    return out;
}

/// Inverse of stack for any row count.
inline std::map<SeriesId, Matrix> unstack(const Matrix& stacked, const std::vector<SeriesId>& members,
                                          Eigen::Index ages) {
    if (stacked.cols() != ages * static_cast<Eigen::Index>(members.size()))
        throw DomainError("stacked width does not match members x ages");
    std::map<SeriesId, Matrix> out;
    for (std::size_t l = 0; l < members.size(); ++l)
        out.emplace(members[l], stacked.middleCols(static_cast<Eigen::Index>(l) * ages, ages));
    return out;
}

/// Smallest K whose cumulative share of the positive eigenvalues reaches
/// the threshold.
inline std::size_t select_K(const Vector& eigenvalues, double threshold = 0.9) {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw DomainError("threshold must lie in (0, 1]");
    double total = 0.0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k)
        if (eigenvalues(k) > 0.0) total += eigenvalues(k);
    if (!(total > 0.0)) throw ComputationError("no positive eigenvalue: degenerate model");
    double cum = 0.0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) {
        if (eigenvalues(k) > 0.0) cum += eigenvalues(k);
        if (cum / total >= threshold) return static_cast<std::size_t>(k + 1);
    }
    return static_cast<std::size_t>(eigenvalues.size());
}

/// Mean, components from the long-run covariance, K by variance share,
/// scores by the discretised inner product.
inline FpcaModel fit_fpca(const CurvePanel& panel, const LongRunCov& lrc, const FpcaOptions& opts,
                          std::vector<SeriesId> members) {
    if (lrc.eigenvectors.rows() != panel.d()) throw DomainError("long-run covariance does not match the panel width");
    if (members.empty()) throw DomainError("model needs at least one member series");
    if (panel.d() % static_cast<Eigen::Index>(members.size()) != 0)
        throw DomainError("panel width is not a multiple of the member count");
    const double dw = panel.grid_weight;
    FpcaModel m;
    m.members = std::move(members);
    m.ages = panel.d() / static_cast<Eigen::Index>(m.members.size());
    m.grid_weight = dw;
    m.mean = panel.values.colwise().mean().transpose();

    Eigen::Index r = 0;
    while (r < lrc.eigenvalues.size() && lrc.eigenvalues(r) > 0.0) ++r;
    if (r == 0) throw ComputationError("all long-run covariance eigenvalues are zero: degenerate model");
    m.all_eigenvalues = lrc.eigenvalues.head(r) * dw;
    auto K = static_cast<Eigen::Index>(select_K(m.all_eigenvalues, opts.threshold));
    K = std::min<Eigen::Index>({K, static_cast<Eigen::Index>(std::max<std::size_t>(1, opts.max_K)), r});
    m.eigenvalues = m.all_eigenvalues.head(K);
    m.components = lrc.eigenvectors.leftCols(K) / std::sqrt(dw);
    for (Eigen::Index k = 0; k < K; ++k) {
        Eigen::Index arg = 0;
        m.components.col(k).cwiseAbs().maxCoeff(&arg);
        if (m.components(arg, k) < 0.0) m.components.col(k) *= -1.0;
    }
    const Matrix x = panel.values.rowwise() - m.mean.transpose();
    m.scores = x * m.components * dw;
    m.residuals = x - m.scores * m.components.transpose();
    return m;
}

inline FpcaModel fit_fpca(const CurvePanel& panel, const LongRunCov& lrc, double threshold = 0.9) {
    return fit_fpca(panel, lrc, FpcaOptions{threshold, 10}, {SeriesId{"series", Sex::Total}});
}

/// mean + scores * components^T, one row per score vector.
inline Matrix reconstruct(const FpcaModel& model, const Matrix& scores) {
    if (scores.cols() != model.K()) throw DomainError("score width does not match the number of components");
    Matrix out = scores * model.components.transpose();
    out.rowwise() += model.mean.transpose();
    return out;
}

}  // namespace gfts
