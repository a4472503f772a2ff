// gfts: command-line front end for smoothing, forecasting, reconciliation
// and backtesting of grouped mortality functional time series.

#include "gfts/gfts.hpp"
#include "svg_plot.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gfts;

namespace {

struct RunConfig {
    // io
    std::string input;
    std::string format = "csv";
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    std::size_t threads = default_threads();
    bool plot = false;
    // synthesize
    int synth_years = 42;
    int synth_first_year = 1975;
    int synth_max_age = 100;
    std::string synth_layout = "2,2";
    bool synth_single = false;
    bool synth_by_sex = true;
    int synth_k = 2;
    std::string synth_dynamics = "ar1";
    double synth_phi = 0.8;
    double synth_drift = -0.15;
    double synth_dependence = 0.8;
    double synth_noise = 1.0;
    double synth_exposure = 1e5;
    std::vector<std::string> synth_outliers;
    // smoothing
    double knot_spacing = 2.0;
    int penalty_order = 2;
    double monotone_from = 65.0;
    bool monotone = true;
    double log_floor = kDefaultLogFloor;
    std::vector<double> lambda_grid = default_lambda_grid();
    // lrcov / fpca / scorecast
    std::string kernel = "bartlett";
    std::string bandwidth = "plugin";
    double threshold = 0.9;
    std::size_t max_K = 10;
    std::string score_method = "arima";
    int max_p = 3, max_q = 3, max_d = 2;
    // intervals
    bool intervals = true;
    double alpha = 0.2;
    std::size_t B = 1000;
    // structure / reconcile
    std::string structure;
    std::string hierarchy;
    std::string layout = "japan";
    std::string national = "Japan";
    std::string reconcile = "base";
    std::string mint_shrink = "auto";
    bool pooled = false;
    // forecast
    std::string model = "dmfts";
    int horizon = 15;
    // backtest
    int first_train_end = 2001;
    int H = 15;
    std::string models = "dfts,dmfts";
    std::string methods = "base,bu,ols,mint";
    std::string hierarchies = "hierarchy1,hierarchy2";
    std::vector<std::string> structures;
};

/// INI reader where `[fpca]` + `threshold = 0.8` means `fpca.threshold`.
class DottedConfig : public CLI::ConfigINI {
  public:
    DottedConfig() { parentSeparator('\x1f'); }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::vector<CLI::ConfigItem> out;
        for (auto item : CLI::ConfigINI::from_config(input)) {
            if (item.name == "++" || item.name == "--") continue;
            if (!item.parents.empty()) {
                std::string full;
                for (const auto& p : item.parents) full += p + '.';
                item.name = full + item.name;
                item.parents.clear();
            }
            out.push_back(std::move(item));
        }
        return out;
    }
};

/// Usage or input problems (exit 2).
struct UsageError : Error {
    using Error::Error;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto tok : text::split(s, ',')) {
        tok = text::trim(tok);
        if (!tok.empty()) out.emplace_back(tok);
    }
    return out;
}

/// Round-trip representation, so a config snapshot reproduces the run.
std::string join_doubles(const std::vector<double>& v) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + text::format_double(v[i]);
    return out + "]";
}

GeoLayout parse_layout(const std::string& s, const std::string& national, bool by_sex) {
    if (s == "japan") {
        auto g = GeoLayout::japan();
        g.national = national;
        g.by_sex = by_sex;
        return g;
    }
    GeoLayout g{national, {}, by_sex};
    for (const auto& tok : split_list(s)) {
        const auto v = text::parse_int(tok);
        if (!v || *v < 1) throw UsageError("layout must be 'japan' or a list of prefecture counts, got '" + s + "'");
        g.prefectures_per_region.push_back(static_cast<int>(*v));
    }
    if (g.prefectures_per_region.empty()) throw UsageError("empty layout");
    return g;
}

ScoreDynamics parse_dynamics(const std::string& s) {
    if (s == "wn") return ScoreDynamics::WhiteNoise;
    if (s == "ar1") return ScoreDynamics::AR1;
    if (s == "rwd") return ScoreDynamics::RandomWalkDrift;
    throw UsageError("unknown score dynamics '" + s + "' (expected wn, ar1 or rwd)");
}

SmoothingOptions smoothing_options(const RunConfig& c) {
    SmoothingOptions o;
    o.knot_spacing = c.knot_spacing;
    o.penalty_order = c.penalty_order;
    o.monotone_from_age = c.monotone_from;
    o.monotone = c.monotone;
    if (c.lambda_grid.empty()) throw UsageError("smoothing.lambda_grid must not be empty");
    for (double l : c.lambda_grid)
        if (!(l > 0.0)) throw UsageError("smoothing.lambda_grid values must be positive");
    o.lambda_grid = c.lambda_grid;
    return o;
}

PipelineOptions pipeline_options(const RunConfig& c, const AgeGrid& grid) {
    PipelineOptions o;
    o.model.kernel = parse_kernel(c.kernel);
    if (c.bandwidth != "plugin") {
        std::string_view v = c.bandwidth;
        if (v.starts_with("fixed:")) v.remove_prefix(6);
        const auto bw = text::parse_double(v);
        if (!bw || *bw < 1.0) throw UsageError("lrcov.bandwidth must be 'plugin' or 'fixed:<v>' with v >= 1");
        o.model.bandwidth = *bw;
    }
    o.model.fpca.threshold = c.threshold;
    o.model.fpca.max_K = c.max_K;
    o.model.scorecast.method = parse_score_method(c.score_method);
    o.model.scorecast.max_p = c.max_p;
    o.model.scorecast.max_q = c.max_q;
    o.model.scorecast.max_d = c.max_d;
    o.model.grid_weight = grid.step();
    o.intervals.enabled = c.intervals;
    o.intervals.alpha = c.alpha;
    o.intervals.B = c.B;
    o.intervals.seed = c.seed;
    if (c.mint_shrink != "auto") {
        const auto v = text::parse_double(c.mint_shrink);
        if (!v) throw UsageError("reconcile.mint_shrink must be 'auto' or a number in [0, 1]");
        o.mint_shrink = *v;
    }
    o.pooled_summing = c.pooled;
    o.threads = c.threads;
    return o;
}

MortalityPanel read_input(const RunConfig& c) {
    if (c.input.empty()) throw UsageError("--input is required");
    const fs::path p(c.input);
    if (!fs::exists(p)) throw UsageError("input not found: " + p.string());
    PanelFormat f;
    if (c.format == "csv") f = PanelFormat::Csv;
    else if (c.format == "hmd") f = PanelFormat::Hmd;
    else throw UsageError("unknown format '" + c.format + "' (expected csv or hmd)");
    auto loaded = load_panel(p, f);
    loaded.panel.validate();
    const auto& s = loaded.summary;
    std::cerr << "loaded " << s.series_count << " series, " << s.first_year << "-" << s.last_year << ", "
              << loaded.panel.n_ages() << " ages, " << s.missing_cells << " missing cells\n";
    return std::move(loaded.panel);
}

fs::path prepare_out(const RunConfig& c) {
    const fs::path d(c.out_dir);
    fs::create_directories(d);
    return d;
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw UsageError("cannot write " + p.string());
    f << body;
}

/// Structure for a forecast run: explicit file, a bundled hierarchy, or the
/// single series of the panel. Returns nullopt when the panel has several
/// series and no structure was requested.
std::optional<GroupStructure> resolve_structure(const RunConfig& c, const MortalityPanel& panel) {
    if (!c.structure.empty()) {
        if (!fs::exists(c.structure)) throw UsageError("structure file not found: " + c.structure);
        auto g = load_structure(c.structure);
        g.validate();
        return g;
    }
    if (!c.hierarchy.empty()) {
        bool by_sex = false;
        for (const auto& id : panel.order)
            if (id.sex != Sex::Total) by_sex = true;
        auto g = make_structure(parse_layout(c.layout, c.national, by_sex), parse_hierarchy(c.hierarchy));
        g.validate();
        return g;
    }
    if (panel.order.size() == 1) return make_single_structure(panel.order.front());
    return std::nullopt;
}

void check_panel_covers(const GroupStructure& g, const MortalityPanel& panel) {
    for (const auto& n : g.nodes)
        if (!panel.contains(n.id)) throw UsageError("panel has no series " + n.id.str() +
                             " required by the structure (check --layout, --structure or --structures)");
}

// ---------------------------------------------------------------- commands

int cmd_synthesize(const RunConfig& c, const std::string& snapshot) {
    SyntheticSpec spec;
    spec.layout = parse_layout(c.synth_layout, c.national, c.synth_by_sex);
    spec.single_series = c.synth_single;
    spec.first_year = c.synth_first_year;
    if (c.synth_years < 2) throw UsageError("synth.years must be >= 2");
    spec.n_years = static_cast<std::size_t>(c.synth_years);
    spec.grid = AgeGrid::single_years(0, c.synth_max_age, true);
    if (c.synth_k < 1) throw UsageError("synth.k must be >= 1");
    spec.k_true = static_cast<std::size_t>(c.synth_k);
    spec.dynamics = parse_dynamics(c.synth_dynamics);
    spec.phi = c.synth_phi;
    spec.drift = c.synth_drift;
    spec.dependence = c.synth_dependence;
    spec.noise_level = c.synth_noise;
    spec.exposure_scale = c.synth_exposure;
    for (const auto& o : c.synth_outliers) {
        const auto parts = text::split(o, ':');
        const auto idx = parts.size() >= 2 ? text::parse_int(parts[0]) : std::nullopt;
        if (!idx || *idx < 0) throw UsageError("outlier must be year_index:area[:shift], got '" + o + "'");
        OutlierSpec s{static_cast<std::size_t>(*idx), std::string(parts[1]), 0.5};
        if (parts.size() >= 3) {
            const auto sh = text::parse_double(parts[2]);
            if (!sh) throw UsageError("bad outlier shift in '" + o + "'");
            s.shift = *sh;
        }
        spec.outliers.push_back(std::move(s));
    }
    const auto syn = synthesize_panel(spec, c.seed);
    const auto dir = prepare_out(c);
    save_panel(syn.panel, dir / "panel.csv");
    if (c.synth_single) {
        save_structure(syn.structure, dir / "structure_single.txt");
    } else {
        for (auto tag : {HierarchyTag::GeoOnly, HierarchyTag::Hierarchy1, HierarchyTag::Hierarchy2}) {
            if (tag == HierarchyTag::GeoOnly && spec.layout.by_sex) continue;
            if (tag != HierarchyTag::GeoOnly && !spec.layout.by_sex) continue;
            save_structure(make_structure(spec.layout, tag), dir / ("structure_" + to_string(tag) + ".txt"));
        }
    }
    write_text(dir / "config.ini", snapshot);
    std::cout << "wrote " << syn.panel.order.size() << " series x " << syn.panel.n_years() << " years x "
              << syn.panel.n_ages() << " ages to " << (dir / "panel.csv").string() << '\n';
    return 0;
}

int cmd_smooth(const RunConfig& c, const std::string& snapshot) {
    const auto panel = read_input(c);
    const auto smooth = smooth_panel(panel, smoothing_options(c), c.threads, c.log_floor);
    const auto dir = prepare_out(c);
    save_panel(smoothed_rate_panel(panel, smooth), dir / "smoothed.csv");
    if (c.plot) {
        const auto pdir = dir / "plots";
        fs::create_directories(pdir);
        for (const auto& id : panel.order) {
            std::ofstream f(pdir / (id.str() + ".svg"), std::ios::binary);
            if (!f) throw UsageError("cannot write plots to " + pdir.string());
            plot::rainbow_svg(f, id.str(), panel.grid, smooth.at(id).values, panel.years.front());
        }
    }
    write_text(dir / "config.ini", snapshot);
    std::cout << "smoothed " << panel.order.size() << " series; wrote " << (dir / "smoothed.csv").string() << '\n';
    return 0;
}

int cmd_forecast(const RunConfig& c, const std::string& snapshot) {
    const auto panel = read_input(c);
    if (c.horizon < 1) throw UsageError("forecast.horizon must be >= 1");
    const auto model = parse_forecast_method(c.model);
    const auto method = parse_reconcile_method(c.reconcile);
    const auto g = resolve_structure(c, panel);
    const auto popts = pipeline_options(c, panel.grid);
    const auto smooth = smooth_panel(panel, smoothing_options(c), c.threads, c.log_floor);
    const auto curves = training_curves(smooth, static_cast<Eigen::Index>(panel.n_years()));

    ForecastSet out;
    std::vector<SeriesId> order;
    if (g) {
        check_panel_covers(*g, panel);
        const ForecastSet base = base_forecasts(curves, blocks_for(*g, model), c.horizon, popts);
        out = reconcile_with(base, *g, panel, panel.years.back(), method, popts);
        for (const auto& n : g->nodes) order.push_back(n.id);
        if (method != ReconcileMethod::Base) {
            const auto S = summing_matrices(*g, panel, panel.years.back(), popts.pooled_summing);
            std::cout << "coherence residual (relative, rate scale): "
                      << text::format_double(coherence_residual(out, *g, S)) << '\n';
        }
    } else {
        if (method != ReconcileMethod::Base)
            throw UsageError("reconciliation needs a structure (--structure or --hierarchy)");
        if (model != ForecastMethod::Dfts)
            throw UsageError("dmfts needs a structure with joint blocks (--structure or --hierarchy)");
        std::vector<JointBlockSpec> blocks;
        for (const auto& id : panel.order) blocks.push_back({id.str(), {id}});
        out = base_forecasts(curves, blocks, c.horizon, popts);
        order = panel.order;
    }
    const auto dir = prepare_out(c);
    std::ofstream f(dir / "forecast.csv", std::ios::binary);
    if (!f) throw UsageError("cannot write " + (dir / "forecast.csv").string());
    write_forecast_csv(out, panel.grid, f, order);
    write_text(dir / "config.ini", snapshot);
    std::cout << "forecast " << order.size() << " series, h = 1.." << c.horizon << " (" << to_string(model) << ", "
              << to_string(method) << "); wrote " << (dir / "forecast.csv").string() << '\n';
    return 0;
}

int cmd_backtest(const RunConfig& c, const std::string& snapshot) {
    const auto panel = read_input(c);
    BacktestConfig cfg;
    cfg.first_train_end = c.first_train_end;
    cfg.H = c.H;
    cfg.models.clear();
    for (const auto& m : split_list(c.models)) cfg.models.push_back(parse_forecast_method(m));
    cfg.methods.clear();
    for (const auto& m : split_list(c.methods)) cfg.methods.push_back(parse_reconcile_method(m));
    cfg.pipeline = pipeline_options(c, panel.grid);

    std::map<HierarchyTag, GroupStructure> structures;
    cfg.hierarchies.clear();
    if (!c.structures.empty()) {
        for (const auto& path : c.structures) {
            if (!fs::exists(path)) throw UsageError("structure file not found: " + path);
            auto g = load_structure(path);
            g.validate();
            if (structures.count(g.tag)) throw UsageError("two structures share the tag " + to_string(g.tag));
            cfg.hierarchies.push_back(g.tag);
            structures.emplace(g.tag, std::move(g));
        }
    } else if (panel.order.size() == 1) {
        auto g = make_single_structure(panel.order.front());
        cfg.hierarchies.push_back(g.tag);
        structures.emplace(g.tag, std::move(g));
    } else {
        bool by_sex = false;
        for (const auto& id : panel.order)
            if (id.sex != Sex::Total) by_sex = true;
        const auto layout = parse_layout(c.layout, c.national, by_sex);
        for (const auto& h : split_list(c.hierarchies)) {
            const auto tag = parse_hierarchy(h);
            auto g = make_structure(layout, tag);
            g.validate();
            cfg.hierarchies.push_back(tag);
            structures.emplace(tag, std::move(g));
        }
    }
    for (const auto& [tag, g] : structures) check_panel_covers(g, panel);

    const auto smooth = smooth_panel(panel, smoothing_options(c), c.threads, c.log_floor);
    const auto rep = run_comparison(panel, smooth, structures, cfg);
    const auto dir = prepare_out(c);
    save_report(rep, dir);
    write_text(dir / "config.ini", snapshot);
    write_summary(rep, std::cout);
    return 0;
}

int cmd_structure_validate(const RunConfig& c, const std::string& file) {
    if (!fs::exists(file)) throw UsageError("structure file not found: " + file);
    const auto g = load_structure(file);
    g.validate();
    const std::size_t bottoms = g.bottom_count();
    std::optional<MortalityPanel> panel;
    if (!c.input.empty()) panel = read_input(c);
    std::cout << file << ": " << to_string(g.tag) << ", " << g.node_count() << " nodes, " << bottoms
              << " bottom series, " << g.blocks.size() << " joint blocks";
    if (panel) {
        check_panel_covers(g, *panel);
        (void)build_age_summing_matrices(g, *panel, panel->years.back());
        std::cout << "; consistent with " << c.input;
    }
    std::cout << std::endl;
    return 0;
}

int cmd_structure_export(const RunConfig& c, const std::string& file) {
    if (c.hierarchy.empty()) throw UsageError("--hierarchy is required");
    const auto g = make_structure(parse_layout(c.layout, c.national, true), parse_hierarchy(c.hierarchy));
    g.validate();
    const auto dir = prepare_out(c);
    save_structure(g, dir / file);
    std::cout << "wrote " << (dir / file).string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig c;
    CLI::App app{"Grouped functional time series forecasting of age-specific mortality"};
    app.set_version_flag("--version", "gfts 1.0.0");
    app.set_config("--config", "", "Read options from a key = value file");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.config_formatter(std::make_shared<DottedConfig>());
    app.require_subcommand(1);
    app.fallthrough();

    const std::string io = "Input/output", syn = "Synthesize", sm = "Smoothing", md = "Model", iv = "Intervals",
                      rc = "Reconciliation", fc = "Forecast", bt = "Backtest";
    app.add_option("--input,-i", c.input, "Panel CSV file (or HMD directory with --format hmd)")->group(io);
    app.add_option("--format", c.format, "Input format: csv or hmd")->capture_default_str()->group(io);
    app.add_option("--out-dir,-o", c.out_dir, "Output directory")->capture_default_str()->group(io);
    app.add_option("--seed", c.seed, "Random seed")->envname("GFTS_SEED")->capture_default_str()->group(io);
    app.add_option("--threads", c.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber)->group(io);
    app.add_flag("--plot", c.plot, "Write SVG charts of the smoothed curves")->group(io);

    app.add_option("--synth.years", c.synth_years, "Number of years")->capture_default_str()->group(syn);
    app.add_option("--synth.first_year", c.synth_first_year, "First year")->capture_default_str()->group(syn);
    app.add_option("--synth.max_age", c.synth_max_age, "Last (open) age")->capture_default_str()->group(syn);
    app.add_option("--synth.layout", c.synth_layout, "'japan' or prefecture counts per region")->capture_default_str()->group(syn);
    app.add_option("--synth.single", c.synth_single, "One national series only")->capture_default_str()->group(syn);
    app.add_option("--synth.by_sex", c.synth_by_sex, "Split series by sex")->capture_default_str()->group(syn);
    app.add_option("--synth.k", c.synth_k, "True number of components")->capture_default_str()->group(syn);
    app.add_option("--synth.dynamics", c.synth_dynamics, "Score dynamics: wn, ar1 or rwd")->capture_default_str()->group(syn);
    app.add_option("--synth.phi", c.synth_phi, "AR(1) coefficient")->capture_default_str()->group(syn);
    app.add_option("--synth.drift", c.synth_drift, "Drift of the first score (rwd)")->capture_default_str()->group(syn);
    app.add_option("--synth.dependence", c.synth_dependence, "Shared share of score variance")->capture_default_str()->group(syn);
    app.add_option("--synth.noise", c.synth_noise, "Observation noise level (0: exact)")->capture_default_str()->group(syn);
    app.add_option("--synth.exposure", c.synth_exposure, "Typical exposure per cell")->capture_default_str()->group(syn);
    app.add_option("--synth.outlier", c.synth_outliers, "Outlier year_index:area[:shift] (repeatable)")->group(syn);

    app.add_option("--smoothing.knot_spacing", c.knot_spacing, "Spline knot spacing in years of age")->capture_default_str()->group(sm);
    app.add_option("--smoothing.penalty_order", c.penalty_order, "Derivative order of the penalty")->capture_default_str()->group(sm);
    app.add_option("--smoothing.monotone_from_age", c.monotone_from, "Age from which curves are non-decreasing")->capture_default_str()->group(sm);
    app.add_option("--smoothing.monotone", c.monotone, "Apply the monotone constraint")->capture_default_str()->group(sm);
    app.add_option("--smoothing.lambda_grid", c.lambda_grid, "Candidate penalty values (comma list)")
        ->delimiter(',')
        ->default_str(join_doubles(c.lambda_grid))
        ->group(sm);
    app.add_option("--smoothing.log_floor", c.log_floor, "Floor applied before taking logs")->capture_default_str()->group(sm);

    app.add_option("--lrcov.kernel", c.kernel, "bartlett or flattop")->capture_default_str()->group(md);
    app.add_option("--lrcov.bandwidth", c.bandwidth, "'plugin' or 'fixed:<v>'")->capture_default_str()->group(md);
    app.add_option("--fpca.threshold", c.threshold, "Variance share for choosing K")->capture_default_str()->group(md);
    app.add_option("--fpca.max_K", c.max_K, "Upper limit on K")->capture_default_str()->group(md);
    app.add_option("--scorecast.method", c.score_method, "arima or rwd")->capture_default_str()->group(md);
    app.add_option("--scorecast.max_p", c.max_p, "Largest AR order")->capture_default_str()->group(md);
    app.add_option("--scorecast.max_q", c.max_q, "Largest MA order")->capture_default_str()->group(md);
    app.add_option("--scorecast.max_d", c.max_d, "Largest differencing order")->capture_default_str()->group(md);

    app.add_option("--intervals.enabled", c.intervals, "Compute prediction intervals")->capture_default_str()->group(iv);
    app.add_option("--intervals.alpha", c.alpha, "Significance level")->capture_default_str()->group(iv);
    app.add_option("--intervals.B", c.B, "Bootstrap replicates")->capture_default_str()->group(iv);

    app.add_option("--structure", c.structure, "Structure file for forecast")->group(rc);
    app.add_option("--hierarchy", c.hierarchy, "Bundled structure: geo-only, hierarchy1 or hierarchy2")->group(rc);
    app.add_option("--layout", c.layout, "'japan' or prefecture counts per region")->capture_default_str()->group(rc);
    app.add_option("--national", c.national, "Name of the national area")->capture_default_str()->group(rc);
    app.add_option("--reconcile.method", c.reconcile, "base, bu, ols or mint")->capture_default_str()->group(rc);
    app.add_option("--reconcile.mint_shrink", c.mint_shrink, "'auto' or a shrinkage weight in [0, 1]")->capture_default_str()->group(rc);
    app.add_option("--reconcile.pooled", c.pooled, "Use all-age exposure shares")->capture_default_str()->group(rc);

    app.add_option("--forecast.model", c.model, "dfts or dmfts")->capture_default_str()->group(fc);
    app.add_option("--forecast.horizon,-H", c.horizon, "Largest forecast horizon")->capture_default_str()->group(fc);

    app.add_option("--backtest.first_train_end", c.first_train_end, "Last year of the first training window")->capture_default_str()->group(bt);
    app.add_option("--backtest.H", c.H, "Largest horizon evaluated")->capture_default_str()->group(bt);
    app.add_option("--models", c.models, "Comma list of dfts, dmfts")->capture_default_str()->group(bt);
    app.add_option("--methods", c.methods, "Comma list of base, bu, ols, mint")->capture_default_str()->group(bt);
    app.add_option("--hierarchies", c.hierarchies, "Comma list of bundled hierarchies")->capture_default_str()->group(bt);
    app.add_option("--structures", c.structures, "Structure files (overrides --hierarchies)")->group(bt);

    auto* synthesize = app.add_subcommand("synthesize", "Write a synthetic coherent panel and its structures");
    auto* smooth = app.add_subcommand("smooth", "Smooth every curve and write the smoothed panel");
    auto* forecast = app.add_subcommand("forecast", "Forecast (and reconcile) every series");
    auto* backtest = app.add_subcommand("backtest", "Expanding-window comparison of methods");
    auto* structure = app.add_subcommand("structure", "Structure file utilities");
    structure->require_subcommand(1);
    std::string structure_file;
    auto* validate = structure->add_subcommand("validate", "Check a structure file (and a panel with --input)");
    validate->add_option("file", structure_file, "Structure file")->required();
    auto* exp = structure->add_subcommand("export", "Write a bundled hierarchy to a file under --out-dir");
    exp->add_option("file", structure_file, "File name")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    std::string snapshot;
    {
        std::istringstream in(app.config_to_str(true, false));
        for (std::string line; std::getline(in, line);) {
            if (line.find('\x1f') != std::string::npos) continue;  // subcommand positionals
            if (line.ends_with("=\"\"")) continue;                  // unset lists and paths
            snapshot += line + '\n';
        }
    }

    try {
        if (synthesize->parsed()) return cmd_synthesize(c, snapshot);
        if (smooth->parsed()) return cmd_smooth(c, snapshot);
        if (forecast->parsed()) return cmd_forecast(c, snapshot);
        if (backtest->parsed()) return cmd_backtest(c, snapshot);
        if (validate->parsed()) return cmd_structure_validate(c, structure_file);
        if (exp->parsed()) return cmd_structure_export(c, structure_file);
    } catch (const ComputationError& e) {
        std::cerr << "gfts: error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "gfts: error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
