#pragma once

// Synthetic coherent mortality panels with known low-rank structure.
//
// Bottom-level log rates are mean + sum_k score_{t,k} * component_k(x),
// optionally perturbed; every aggregate is the exact exposure-weighted
// combination of its bottom series, so the panel is coherent by
// construction. The true curves, components and scores are returned so
// downstream code can be checked against them.

#include "gfts/error.hpp"
#include "gfts/panel.hpp"
#include "gfts/rng.hpp"
#include "gfts/structure.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace gfts {

enum class ScoreDynamics { WhiteNoise, AR1, RandomWalkDrift };

/// Additive log-rate shift for every bottom series of `area` in one year.
struct OutlierSpec {
    std::size_t year_index = 0;
    std::string area;
    double shift = 0.5;
};

struct SyntheticSpec {
    GeoLayout layout{"Japan", {2, 2}, true};
    bool single_series = false;  ///< one national total series, no structure
    int first_year = 1975;
    std::size_t n_years = 42;
    AgeGrid grid = AgeGrid::single_years(0, 100, true);
    std::size_t k_true = 2;
    ScoreDynamics dynamics = ScoreDynamics::AR1;
    double phi = 0.8;
    double drift = -0.15;                ///< per-year drift of the first score (random walk only)
    std::vector<double> score_sd{};      ///< per component; default 0.6 / k
    double dependence = 0.8;             ///< share of score variance common to all series, in [0, 1]
    double series_spread = 0.1;          ///< sd of per-series level / slope offsets of the mean
    double exposure_scale = 1e5;         ///< person-years of a typical bottom series at young ages
    bool equal_exposures = false;        ///< every bottom series gets the same exposure matrix
    double noise_level = 1.0;            ///< 0: exact rates; >0: Poisson deaths plus log-noise of sd 0.02 * level
    std::vector<OutlierSpec> outliers{};
};

struct BottomTruth {
    Vector mean;        ///< p
    Matrix components;  ///< p x K, orthonormal columns
    Matrix scores;      ///< n x K
    Matrix log_rate;    ///< n x p, outliers included
};

struct SyntheticPanel {
    MortalityPanel panel;
    GroupStructure structure;  ///< hierarchy1 (or geographic / single) node layout
    std::map<SeriesId, BottomTruth> truth;
};

namespace detail {

/// Smooth orthonormal age components: a line and sinusoids passed
/// through a thin QR so columns are orthonormal on the grid.
inline Matrix synthetic_components(const AgeGrid& grid, std::size_t k) {
    const auto p = static_cast<Eigen::Index>(grid.size());
    const double lo = grid.ages.front(), hi = grid.ages.back();
    Matrix raw(p, static_cast<Eigen::Index>(k));
    for (Eigen::Index i = 0; i < p; ++i) {
        const double u = (grid.ages[static_cast<std::size_t>(i)] - lo) / (hi - lo);
        for (std::size_t j = 0; j < k; ++j) {
            double v;
            if (j == 0) {
                v = 1.0 - 0.6 * u;
            } else {
                v = std::sin(std::numbers::pi * static_cast<double>(j) * u);
            }
            raw(i, static_cast<Eigen::Index>(j)) = v;
        }
    }
    Eigen::HouseholderQR<Matrix> qr(raw);
    Matrix q = qr.householderQ() * Matrix::Identity(p, static_cast<Eigen::Index>(k));
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        Eigen::Index arg = 0;
        q.col(j).cwiseAbs().maxCoeff(&arg);
        if (q(arg, j) < 0) q.col(j) *= -1.0;
    }
    return q;
}

inline Vector synthetic_mean(const AgeGrid& grid) {
    const auto p = static_cast<Eigen::Index>(grid.size());
    const double lo = grid.ages.front(), hi = grid.ages.back();
    Vector m(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double u = (grid.ages[static_cast<std::size_t>(i)] - lo) / (hi - lo);
        m(i) = -8.6 + 6.8 * u - 0.9 * std::sin(std::numbers::pi * u);
    }
    return m;
}

inline Vector synthetic_population(const AgeGrid& grid) {
    const auto p = static_cast<Eigen::Index>(grid.size());
    const double lo = grid.ages.front(), hi = grid.ages.back();
    Vector e(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double u = (grid.ages[static_cast<std::size_t>(i)] - lo) / (hi - lo);
        e(i) = std::exp(-std::pow(u / 0.85, 4.0)) + 0.01;
    }
    return e;
}

/// Unit-innovation path of the chosen dynamics (drift handled by caller).
inline Vector score_path(ScoreDynamics dyn, double phi, std::size_t n, Rng& rng) {
    Vector x(static_cast<Eigen::Index>(n));
    double prev = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double e = rng.normal();
        double v = e;
        switch (dyn) {
            case ScoreDynamics::WhiteNoise: v = e; break;
            case ScoreDynamics::AR1:
                v = (t == 0) ? e / std::sqrt(1.0 - phi * phi) : phi * prev + e;
                break;
            case ScoreDynamics::RandomWalkDrift: v = (t == 0) ? e : prev + e; break;
        }
        x(static_cast<Eigen::Index>(t)) = v;
        prev = v;
    }
    return x;
}

}  // namespace detail

inline SyntheticPanel synthesize_panel(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.grid.validate();
    const std::size_t n = spec.n_years, p = spec.grid.size(), K = spec.k_true;
    if (K >= std::min(n, p)) throw DomainError("k_true must be smaller than both the year and age counts");
    if (n < 2) throw DomainError("need at least two years");
    if (spec.dynamics == ScoreDynamics::AR1 && !(std::abs(spec.phi) < 1.0))
        throw DomainError("AR(1) coefficient must lie in (-1, 1)");
    if (spec.dependence < 0.0 || spec.dependence > 1.0) throw DomainError("dependence must lie in [0, 1]");
    if (!(spec.exposure_scale > 0.0)) throw DomainError("exposure scale must be positive");
    if (spec.noise_level < 0.0) throw DomainError("noise level must be non-negative");

    SyntheticPanel out;
    out.structure = spec.single_series ? make_single_structure({spec.layout.national, Sex::Total})
                                       : make_structure(spec.layout, HierarchyTag::Hierarchy1);
    const auto& bottoms = out.structure.bottom;
    for (const auto& o : spec.outliers)
        if (o.year_index >= n) throw DomainError("outlier year index out of range");

    Rng rng(seed);
    const auto ni = static_cast<Eigen::Index>(n), pi = static_cast<Eigen::Index>(p);
    const Matrix phi = detail::synthetic_components(spec.grid, K);
    const Vector base_mean = detail::synthetic_mean(spec.grid);
    const Vector pop = detail::synthetic_population(spec.grid);
    std::vector<double> sd = spec.score_sd;
    for (std::size_t k = sd.size(); k < K; ++k) sd.push_back(0.6 / static_cast<double>(k + 1));

    std::vector<Vector> common(K);
    for (std::size_t k = 0; k < K; ++k) common[k] = detail::score_path(spec.dynamics, spec.phi, n, rng);

    const double wc = std::sqrt(spec.dependence), wi = std::sqrt(1.0 - spec.dependence);
    std::map<SeriesId, Matrix> exposures;
    for (const auto& b : bottoms) {
        BottomTruth tr;
        tr.components = phi;
        const double sex_shift = b.sex == Sex::Male ? 0.25 : (b.sex == Sex::Female ? -0.05 : 0.1);
        const double level = rng.normal(0.0, spec.series_spread);
        const double slope = rng.normal(0.0, spec.series_spread);
        tr.mean.resize(pi);
        for (Eigen::Index i = 0; i < pi; ++i) {
            const double u = (spec.grid.ages[static_cast<std::size_t>(i)] - spec.grid.ages.front()) /
                             (spec.grid.ages.back() - spec.grid.ages.front());
            tr.mean(i) = base_mean(i) + sex_shift + level + slope * (u - 0.5);
        }
        tr.scores.resize(ni, static_cast<Eigen::Index>(K));
        for (std::size_t k = 0; k < K; ++k) {
            const Vector idio = detail::score_path(spec.dynamics, spec.phi, n, rng);
            for (std::size_t t = 0; t < n; ++t) {
                const auto ti = static_cast<Eigen::Index>(t), ki = static_cast<Eigen::Index>(k);
                double v = sd[k] * (wc * common[k](ti) + wi * idio(ti));
                if (spec.dynamics == ScoreDynamics::RandomWalkDrift && k == 0)
                    v += spec.drift * (static_cast<double>(t) - 0.5 * static_cast<double>(n - 1));
                tr.scores(ti, ki) = v;
            }
        }
        // Scores are stored centred over the sample so the mean curve is the sample mean.
        for (Eigen::Index k = 0; k < tr.scores.cols(); ++k) {
            const double m = tr.scores.col(k).mean();
            tr.scores.col(k).array() -= m;
        }
        tr.log_rate = (tr.scores * phi.transpose()).rowwise() + tr.mean.transpose();
        for (const auto& o : spec.outliers)
            if (o.area == b.area) tr.log_rate.row(static_cast<Eigen::Index>(o.year_index)).array() += o.shift;

        double share = rng.uniform(0.5, 1.5);
        double old_age_bias = b.sex == Sex::Male ? 0.8 : 1.0;
        if (spec.equal_exposures) share = old_age_bias = 1.0;
        Matrix e(ni, pi);
        for (Eigen::Index t = 0; t < ni; ++t)
            for (Eigen::Index i = 0; i < pi; ++i) {
                const double age_w = i > pi / 2 ? old_age_bias : 1.0;
                e(t, i) = spec.exposure_scale * share * pop(i) * age_w * (1.0 + 0.005 * static_cast<double>(t));
            }
        exposures.emplace(b, std::move(e));
        out.truth.emplace(b, std::move(tr));
    }

    // Observation layer for bottoms.
    std::map<SeriesId, SeriesData> bottom_data;
    for (const auto& b : bottoms) {
        const auto& tr = out.truth.at(b);
        SeriesData s;
        s.exposure = exposures.at(b);
        s.rate.resize(ni, pi);
        s.deaths.resize(ni, pi);
        s.observed = Mask::Constant(ni, pi, true);
        for (Eigen::Index t = 0; t < ni; ++t) {
            for (Eigen::Index i = 0; i < pi; ++i) {
                const double m = std::exp(tr.log_rate(t, i));
                const double e = s.exposure(t, i);
                if (spec.noise_level == 0.0) {
                    s.deaths(t, i) = m * e;
                    s.rate(t, i) = m;
                } else {
                    const double sigma = 0.02 * spec.noise_level;
                    const double mu = m * e * std::exp(sigma * rng.normal() - 0.5 * sigma * sigma);
                    s.deaths(t, i) = rng.poisson(mu);
                    s.rate(t, i) = s.deaths(t, i) / e;
                }
            }
        }
        bottom_data.emplace(b, std::move(s));
    }

    out.panel.grid = spec.grid;
    for (std::size_t t = 0; t < n; ++t) out.panel.years.push_back(spec.first_year + static_cast<int>(t));
    for (const auto& node : out.structure.nodes) {
        if (node.members.size() == 1 && node.members.front() == node.id) {
            out.panel.add(node.id, bottom_data.at(node.id));
            continue;
        }
        SeriesData s;
        s.exposure = Matrix::Zero(ni, pi);
        s.deaths = Matrix::Zero(ni, pi);
        for (const auto& m : node.members) {
            s.exposure += bottom_data.at(m).exposure;
            s.deaths += bottom_data.at(m).deaths;
        }
        s.rate = s.deaths.cwiseQuotient(s.exposure);
        s.observed = Mask::Constant(ni, pi, true);
        out.panel.add(node.id, std::move(s));
    }
    return out;
}

}  // namespace gfts
