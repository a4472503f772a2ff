#pragma once

#include "gfts/gfts.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace gfts::testing {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, sd);
    return m;
}

inline Vector random_vector(Eigen::Index n, Rng& rng, double sd = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal(0.0, sd);
    return v;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Rank-K curves: mean + scores * components^T, no noise.
struct RankKPanel {
    Matrix curves;
    Vector mean;
    Matrix components;
    Matrix scores;
};

inline RankKPanel rank_k_panel(Eigen::Index n, Eigen::Index p, Eigen::Index K, Rng& rng) {
    RankKPanel r;
    const Matrix raw = random_matrix(p, K, rng);
    Eigen::HouseholderQR<Matrix> qr(raw);
    r.components = qr.householderQ() * Matrix::Identity(p, K);
    r.scores = random_matrix(n, K, rng);
    for (Eigen::Index k = 0; k < K; ++k) r.scores.col(k) *= 3.0 / static_cast<double>(k + 1);
    r.mean = random_vector(p, rng);
    r.curves = (r.scores * r.components.transpose()).rowwise() + r.mean.transpose();
    return r;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("gfts_test_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

}  // namespace gfts::testing
