#pragma once

// Base forecasts for every node of a structure from one training window,
// followed by reconciliation.

#include "gfts/assemble.hpp"
#include "gfts/error.hpp"
#include "gfts/parallel.hpp"
#include "gfts/reconcile.hpp"
#include "gfts/smoothing.hpp"
#include "gfts/structure.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gfts {

/// dfts: every series on its own; dmfts: the structure's joint blocks.
enum class ForecastMethod { Dfts, Dmfts };

inline std::string to_string(ForecastMethod m) { return m == ForecastMethod::Dfts ? "dfts" : "dmfts"; }

inline ForecastMethod parse_forecast_method(std::string_view s) {
    if (s == "dfts") return ForecastMethod::Dfts;
    if (s == "dmfts") return ForecastMethod::Dmfts;
    throw DomainError("unknown forecast method '" + std::string(s) + "' (expected dfts or dmfts)");
}

struct PipelineOptions {
    ModelOptions model{};
    IntervalOptions intervals{};
    std::optional<double> mint_shrink;  ///< nullopt: automatic intensity
    bool pooled_summing = false;
    std::size_t threads = 1;
};

inline std::vector<JointBlockSpec> blocks_for(const GroupStructure& g, ForecastMethod m) {
    return m == ForecastMethod::Dfts ? g.singleton_blocks() : g.blocks;
}

/// Key identifying a block fit within one training window.
inline std::string block_key(const JointBlockSpec& b) {
    std::string k;
    for (const auto& m : b.members) k += m.str() + ";";
    return k;
}

/// First `rows` years of each smoothed series.
inline std::map<SeriesId, Matrix> training_curves(const SmoothedPanel& smooth, Eigen::Index rows) {
    std::map<SeriesId, Matrix> out;
    for (const auto& [id, s] : smooth) {
        if (rows > s.values.rows()) throw DomainError("training window exceeds the data");
        out.emplace(id, s.values.topRows(rows));
    }
    return out;
}

using BlockCache = std::map<std::string, std::map<SeriesId, SeriesForecast>>;

/// Fits every block not yet in the cache (deduplicated by membership).
inline void fit_blocks(const std::map<SeriesId, Matrix>& curves, const std::vector<JointBlockSpec>& blocks, int H,
                       const PipelineOptions& opts, BlockCache& cache) {
    std::vector<JointBlockSpec> todo;
    std::vector<std::string> keys;
    for (const auto& b : blocks) {
        auto k = block_key(b);
        if (cache.count(k) || std::find(keys.begin(), keys.end(), k) != keys.end()) continue;
        keys.push_back(std::move(k));
        todo.push_back(b);
    }
    std::vector<std::map<SeriesId, SeriesForecast>> results(todo.size());
    parallel_for(todo.size(), opts.threads, [&](std::size_t j) {
        try {
            results[j] = forecast_block(curves, todo[j], H, opts.model, opts.intervals);
        } catch (const Error& e) {
            throw ComputationError("block " + todo[j].name + ": " + e.what());
        }
    });
    for (std::size_t j = 0; j < todo.size(); ++j) cache.emplace(keys[j], std::move(results[j]));
}

/// Merges cached block results into one forecast set.
inline ForecastSet collect_forecasts(const BlockCache& cache, const std::vector<JointBlockSpec>& blocks, int H,
                                     double alpha) {
    ForecastSet fs;
    fs.alpha = alpha;
    fs.H = H;
    for (const auto& b : blocks)
        for (const auto& [id, sf] : cache.at(block_key(b))) fs.series.insert_or_assign(id, sf);
    return fs;
}

inline ForecastSet base_forecasts(const std::map<SeriesId, Matrix>& curves, const std::vector<JointBlockSpec>& blocks,
                                  int H, const PipelineOptions& opts) {
    BlockCache cache;
    fit_blocks(curves, blocks, H, opts, cache);
    return collect_forecasts(cache, blocks, H, opts.intervals.alpha);
}

inline std::vector<SummingMatrix> summing_matrices(const GroupStructure& g, const MortalityPanel& panel, int year,
                                                   bool pooled) {
    if (!pooled) return build_age_summing_matrices(g, panel, year);
    const SummingMatrix s = build_pooled_summing_matrix(g, panel, year);
    std::vector<SummingMatrix> out(panel.n_ages(), s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].age_index = i;
    return out;
}

/// Reconciles with exposure shares frozen at `year`.
inline ForecastSet reconcile_with(const ForecastSet& base, const GroupStructure& g, const MortalityPanel& panel,
                                  int year, ReconcileMethod method, const PipelineOptions& opts) {
    if (method == ReconcileMethod::Base) return base;
    const auto S = summing_matrices(g, panel, year, opts.pooled_summing);
    if (method == ReconcileMethod::MinT) {
        const auto W = estimate_W_by_age(base, g, opts.mint_shrink);
        return reconcile_forecasts(base, g, S, method, &W);
    }
    return reconcile_forecasts(base, g, S, method);
}

}  // namespace gfts
