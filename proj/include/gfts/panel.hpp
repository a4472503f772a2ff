#pragma once

// Mortality panel data model, CSV / HMD-style ingestion, and log-scale view.

#include "gfts/error.hpp"
#include "gfts/text.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace gfts {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class Sex { Female, Male, Total };

inline char sex_code(Sex s) {
    switch (s) {
        case Sex::Female: return 'F';
        case Sex::Male: return 'M';
        case Sex::Total: return 'T';
    }
    return '?';
}

inline Sex parse_sex(std::string_view s) {
    s = text::trim(s);
    if (s == "F") return Sex::Female;
    if (s == "M") return Sex::Male;
    if (s == "T") return Sex::Total;
    throw DomainError("unknown sex code '" + std::string(s) + "' (expected F, M or T)");
}

/// One population: a geographic area crossed with a sex ("T" = both sexes).
struct SeriesId {
    std::string area;
    Sex sex = Sex::Total;

    auto operator<=>(const SeriesId&) const = default;

    /// "area*S", the notation used in structure files and reports.
    [[nodiscard]] std::string str() const { return area + '*' + sex_code(sex); }

    static SeriesId parse(std::string_view s) {
        const auto star = s.rfind('*');
        if (star == std::string_view::npos || star == 0 || star + 2 != s.size())
            throw DomainError("malformed series id '" + std::string(s) + "' (expected area*S)");
        return {std::string(s.substr(0, star)), parse_sex(s.substr(star + 1))};
    }
};

inline std::ostream& operator<<(std::ostream& os, const SeriesId& id) { return os << id.str(); }

struct AgeGrid {
    std::vector<double> ages;
    /// Last age is an open interval ("100+"). Only affects I/O.
    bool open_last = false;

    [[nodiscard]] std::size_t size() const noexcept { return ages.size(); }

    void validate() const {
        if (ages.size() < 2) throw StructuralError("age grid needs at least 2 ages");
        for (std::size_t i = 1; i < ages.size(); ++i)
            if (!(ages[i] > ages[i - 1])) throw StructuralError("age grid is not strictly increasing");
    }

    /// Mean spacing between ages.
    [[nodiscard]] double step() const {
        return ages.size() < 2 ? 1.0 : (ages.back() - ages.front()) / static_cast<double>(ages.size() - 1);
    }

    static AgeGrid single_years(int first, int last, bool open_last = false) {
        AgeGrid g;
        for (int a = first; a <= last; ++a) g.ages.push_back(a);
        g.open_last = open_last;
        return g;
    }
};

/// Observations of one series; all matrices are years x ages. Unobserved
/// cells hold NaN rate/deaths and observed(t, i) == false.
struct SeriesData {
    Matrix rate;
    Matrix exposure;
    Matrix deaths;
    Mask observed;
};

struct MortalityPanel {
    AgeGrid grid;
    std::vector<int> years;
    std::vector<SeriesId> order;  ///< insertion order, used for all output
    std::map<SeriesId, SeriesData> series;

    [[nodiscard]] std::size_t n_years() const noexcept { return years.size(); }
    [[nodiscard]] std::size_t n_ages() const noexcept { return grid.size(); }
    [[nodiscard]] bool contains(const SeriesId& id) const { return series.count(id) != 0; }

    [[nodiscard]] const SeriesData& at(const SeriesId& id) const {
        auto it = series.find(id);
        if (it == series.end()) throw DomainError("series " + id.str() + " not in panel");
        return it->second;
    }

    [[nodiscard]] std::ptrdiff_t year_index(int year) const {
        auto it = std::find(years.begin(), years.end(), year);
        if (it == years.end()) throw DomainError("year " + std::to_string(year) + " not in panel");
        return it - years.begin();
    }

    [[nodiscard]] std::size_t missing_cells() const {
        std::size_t m = 0;
        for (const auto& [id, s] : series) m += static_cast<std::size_t>((!s.observed).count());
        return m;
    }

    void add(SeriesId id, SeriesData data) {
        if (series.count(id)) throw StructuralError("duplicate series " + id.str());
        order.push_back(id);
        series.emplace(std::move(id), std::move(data));
    }

    /// Checks shapes, exposure/deaths signs and rate = deaths / exposure.
    void validate() const {
        grid.validate();
        if (years.empty()) throw StructuralError("panel has no years");
        if (!std::is_sorted(years.begin(), years.end()) ||
            std::adjacent_find(years.begin(), years.end()) != years.end())
            throw StructuralError("panel years must be strictly increasing");
        const auto n = static_cast<Eigen::Index>(years.size());
        const auto p = static_cast<Eigen::Index>(grid.size());
        for (const auto& id : order) {
            const auto& s = at(id);
            if (s.rate.rows() != n || s.rate.cols() != p || s.exposure.rows() != n ||
                s.exposure.cols() != p || s.deaths.rows() != n || s.deaths.cols() != p ||
                s.observed.rows() != n || s.observed.cols() != p)
                throw StructuralError("series " + id.str() + " does not match the panel shape");
            for (Eigen::Index t = 0; t < n; ++t) {
                for (Eigen::Index i = 0; i < p; ++i) {
                    if (!s.observed(t, i)) continue;
                    const double e = s.exposure(t, i), d = s.deaths(t, i), r = s.rate(t, i);
                    if (!(e > 0.0)) throw StructuralError("series " + id.str() + ": observed cell with exposure <= 0");
                    if (!(d >= 0.0)) throw StructuralError("series " + id.str() + ": negative deaths");
                    if (!std::isfinite(r) || r < 0.0) throw StructuralError("series " + id.str() + ": invalid rate");
                    const double implied = d / e;
                    if (std::abs(implied - r) > 1e-10 * std::max(std::abs(r), 1e-300) && std::abs(implied - r) > 1e-300)
                        throw StructuralError("series " + id.str() + ": rate != deaths / exposure at year " +
                                              std::to_string(years[static_cast<std::size_t>(t)]));
                }
            }
        }
    }
};

struct IngestSummary {
    std::size_t series_count = 0;
    int first_year = 0;
    int last_year = 0;
    std::size_t missing_cells = 0;
};

struct LoadedPanel {
    MortalityPanel panel;
    IngestSummary summary;
};

enum class PanelFormat {
    Csv,  ///< long format: series,sex,year,age,rate,exposure,deaths
    Hmd,  ///< directory holding Mx_1x1.txt and Exposures_1x1.txt
};

inline constexpr std::string_view kPanelCsvHeader = "series,sex,year,age,rate,exposure,deaths";

namespace detail {

struct RawCell {
    double rate = std::numeric_limits<double>::quiet_NaN();
    double exposure = std::numeric_limits<double>::quiet_NaN();
    double deaths = std::numeric_limits<double>::quiet_NaN();
    std::size_t row = 0;
};

struct AgeToken {
    double age;
    bool open;
};

inline std::optional<AgeToken> parse_age(std::string_view s) {
    s = text::trim(s);
    bool open = false;
    if (!s.empty() && s.back() == '+') {
        open = true;
        s.remove_suffix(1);
    }
    auto v = text::parse_double(s);
    if (!v) return std::nullopt;
    return AgeToken{*v, open};
}

/// Turns per-series (year, age) -> cell maps into a validated panel.
inline LoadedPanel assemble_panel(
    const std::vector<SeriesId>& order,
    const std::map<SeriesId, std::map<std::pair<int, double>, RawCell>>& cells,
    const std::map<SeriesId, std::set<double>>& ages_by_series, bool open_last) {
    if (order.empty()) throw StructuralError("input contains no data rows");
    const auto& ref_ages = ages_by_series.at(order.front());
    for (const auto& id : order)
        if (ages_by_series.at(id) != ref_ages)
            throw StructuralError("inconsistent age grids: series " + id.str() + " differs from " +
                                  order.front().str());
    std::set<int> year_set;
    for (const auto& [id, m] : cells)
        for (const auto& [key, c] : m) year_set.insert(key.first);

    MortalityPanel panel;
    panel.grid.ages.assign(ref_ages.begin(), ref_ages.end());
    panel.grid.open_last = open_last;
    panel.years.assign(year_set.begin(), year_set.end());
    panel.grid.validate();

    const auto n = static_cast<Eigen::Index>(panel.years.size());
    const auto p = static_cast<Eigen::Index>(panel.grid.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& id : order) {
        SeriesData s;
        s.rate = Matrix::Constant(n, p, nan);
        s.deaths = Matrix::Constant(n, p, nan);
        s.exposure = Matrix::Zero(n, p);
        s.observed = Mask::Constant(n, p, false);
        const auto& m = cells.at(id);
        for (Eigen::Index t = 0; t < n; ++t) {
            for (Eigen::Index i = 0; i < p; ++i) {
                auto it = m.find({panel.years[static_cast<std::size_t>(t)], panel.grid.ages[static_cast<std::size_t>(i)]});
                if (it == m.end()) continue;
                const RawCell& c = it->second;
                if (std::isfinite(c.exposure) && c.exposure < 0.0)
                    throw StructuralError("row " + std::to_string(c.row) + ": negative exposure");
                if (std::isfinite(c.deaths) && c.deaths < 0.0)
                    throw StructuralError("row " + std::to_string(c.row) + ": negative deaths");
                if (std::isfinite(c.exposure)) s.exposure(t, i) = c.exposure;
                if (!(c.exposure > 0.0)) continue;  // masked: exposure missing or zero
                double rate = c.rate;
                double deaths = c.deaths;
                if (std::isnan(rate) && std::isnan(deaths)) continue;
                if (std::isnan(rate)) rate = deaths / c.exposure;
                if (std::isnan(deaths)) deaths = rate * c.exposure;
                if (rate < 0.0) throw StructuralError("row " + std::to_string(c.row) + ": negative rate");
                const double implied = deaths / c.exposure;
                if (std::abs(implied - rate) > 1e-10 * std::max(std::abs(rate), 1e-300) &&
                    std::abs(implied - rate) > 1e-300)
                    throw StructuralError("row " + std::to_string(c.row) +
                                          ": rate disagrees with deaths / exposure");
                s.rate(t, i) = rate;
                s.deaths(t, i) = deaths;
                s.observed(t, i) = true;
            }
        }
        panel.add(id, std::move(s));
    }
    LoadedPanel out{std::move(panel), {}};
    out.summary.series_count = out.panel.order.size();
    out.summary.first_year = out.panel.years.front();
    out.summary.last_year = out.panel.years.back();
    out.summary.missing_cells = out.panel.missing_cells();
    return out;
}

}  // namespace detail

/// Reads the long-format CSV schema. Unobserved cells (empty/NA rate, zero
/// exposure) are masked, never dropped.
inline LoadedPanel read_panel_csv(std::istream& in) {
    std::string line;
    std::size_t row = 1;
    if (!std::getline(in, line)) throw ParseError("empty input, expected header", row);
    if (text::trim(line) != kPanelCsvHeader)
        throw ParseError("unexpected header '" + std::string(text::trim(line)) + "', expected '" +
                             std::string(kPanelCsvHeader) + "'",
                         row);
    std::vector<SeriesId> order;
    std::map<SeriesId, std::map<std::pair<int, double>, detail::RawCell>> cells;
    std::map<SeriesId, std::set<double>> ages;
    bool open_last = false;
    double max_age = -std::numeric_limits<double>::infinity();
    double open_age = std::numeric_limits<double>::quiet_NaN();

    while (std::getline(in, line)) {
        ++row;
        if (text::trim(line).empty()) continue;
        const auto f = text::split(line, ',');
        if (f.size() != 7) throw ParseError("expected 7 fields, found " + std::to_string(f.size()), row);
        SeriesId id;
        id.area = std::string(text::trim(f[0]));
        if (id.area.empty()) throw ParseError("empty series name", row);
        try {
            id.sex = parse_sex(f[1]);
        } catch (const DomainError& e) {
            throw ParseError(e.what(), row);
        }
        const auto year = text::parse_int(f[2]);
        if (!year) throw ParseError("non-numeric year '" + std::string(f[2]) + "'", row);
        const auto age = detail::parse_age(f[3]);
        if (!age) throw ParseError("non-numeric age '" + std::string(f[3]) + "'", row);
        if (age->open) {
            open_last = true;
            open_age = age->age;
        }
        max_age = std::max(max_age, age->age);

        detail::RawCell c;
        c.row = row;
        auto field = [&](std::string_view s, const char* name) {
            if (text::is_missing_token(s)) return std::numeric_limits<double>::quiet_NaN();
            auto v = text::parse_double(s);
            if (!v) throw ParseError(std::string("non-numeric ") + name + " '" + std::string(s) + "'", row);
            return *v;
        };
        c.rate = field(f[4], "rate");
        c.exposure = field(f[5], "exposure");
        c.deaths = field(f[6], "deaths");

        if (!cells.count(id)) order.push_back(id);
        auto [it, inserted] = cells[id].emplace(std::pair{static_cast<int>(*year), age->age}, c);
        if (!inserted)
            throw StructuralError("row " + std::to_string(row) + ": duplicate (series, year, age) for " +
                                  id.str());
        ages[id].insert(age->age);
    }
    if (open_last && open_age != max_age)
        throw StructuralError("open age group must be the last age");
    return detail::assemble_panel(order, cells, ages, open_last);
}

inline LoadedPanel read_hmd_pair(std::istream& rates, std::istream& exposures, const std::string& area);

inline LoadedPanel load_panel(const std::filesystem::path& path, PanelFormat format = PanelFormat::Csv) {
    if (format == PanelFormat::Csv) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open " + path.string());
        return read_panel_csv(in);
    }
    const auto mx = path / "Mx_1x1.txt";
    const auto ex = path / "Exposures_1x1.txt";
    std::ifstream rin(mx), ein(ex);
    if (!rin) throw Error("cannot open " + mx.string());
    if (!ein) throw Error("cannot open " + ex.string());
    auto area = path.filename().string();
    if (area.empty()) area = path.parent_path().filename().string();
    return read_hmd_pair(rin, ein, area);
}

namespace detail {

struct HmdTable {
    std::map<std::pair<int, double>, std::array<double, 3>> values;  // F, M, T
    std::set<double> ages;
    bool open_last = false;
};

inline HmdTable read_hmd_table(std::istream& in) {
    HmdTable t;
    std::string line;
    std::size_t row = 0;
    bool in_body = false;
    while (std::getline(in, line)) {
        ++row;
        const auto tok = text::split_ws(line);
        if (tok.empty()) continue;
        if (!in_body) {
            if (tok[0] == "Year") {
                if (tok.size() != 5) throw ParseError("expected 'Year Age Female Male Total' header", row);
                in_body = true;
            }
            continue;
        }
        if (tok.size() != 5) throw ParseError("expected 5 columns", row);
        const auto year = text::parse_int(tok[0]);
        if (!year) throw ParseError("non-numeric year '" + std::string(tok[0]) + "'", row);
        const auto age = parse_age(tok[1]);
        if (!age) throw ParseError("non-numeric age '" + std::string(tok[1]) + "'", row);
        if (age->open) t.open_last = true;
        std::array<double, 3> v{};
        for (int k = 0; k < 3; ++k) {
            const auto s = tok[static_cast<std::size_t>(2 + k)];
            if (text::is_missing_token(s)) {
                v[static_cast<std::size_t>(k)] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            auto d = text::parse_double(s);
            if (!d) throw ParseError("non-numeric value '" + std::string(s) + "'", row);
            v[static_cast<std::size_t>(k)] = *d;
        }
        if (!t.values.emplace(std::pair{static_cast<int>(*year), age->age}, v).second)
            throw StructuralError("row " + std::to_string(row) + ": duplicate (year, age)");
        t.ages.insert(age->age);
    }
    if (!in_body) throw ParseError("no 'Year Age Female Male Total' header found", row);
    return t;
}

}  // namespace detail

/// Reads a rates/exposures pair in the 5-column fixed-width layout
/// (Year Age Female Male Total) into three series area*F, area*M, area*T.
inline LoadedPanel read_hmd_pair(std::istream& rates, std::istream& exposures, const std::string& area) {
    const auto r = detail::read_hmd_table(rates);
    const auto e = detail::read_hmd_table(exposures);
    if (r.ages != e.ages) throw StructuralError("rate and exposure files have different age grids");
    const Sex sexes[3] = {Sex::Female, Sex::Male, Sex::Total};
    std::vector<SeriesId> order;
    std::map<SeriesId, std::map<std::pair<int, double>, detail::RawCell>> cells;
    std::map<SeriesId, std::set<double>> ages;
    for (int k = 0; k < 3; ++k) {
        SeriesId id{area, sexes[k]};
        order.push_back(id);
        ages[id] = r.ages;
        auto& m = cells[id];
        for (const auto& [key, rv] : r.values) {
            detail::RawCell c;
            c.rate = rv[static_cast<std::size_t>(k)];
            auto it = e.values.find(key);
            if (it != e.values.end()) c.exposure = it->second[static_cast<std::size_t>(k)];
            m.emplace(key, c);
        }
    }
    return detail::assemble_panel(order, cells, ages, r.open_last);
}

inline std::string format_age(const AgeGrid& grid, std::size_t i) {
    auto s = text::format_double(grid.ages[i]);
    if (grid.open_last && i + 1 == grid.size()) s += '+';
    return s;
}

/// Writes the long-format CSV schema; inverse of read_panel_csv.
inline void write_panel_csv(const MortalityPanel& panel, std::ostream& out) {
    out << kPanelCsvHeader << '\n';
    for (const auto& id : panel.order) {
        const auto& s = panel.at(id);
        for (std::size_t t = 0; t < panel.years.size(); ++t) {
            for (std::size_t i = 0; i < panel.grid.size(); ++i) {
                const auto ti = static_cast<Eigen::Index>(t), ii = static_cast<Eigen::Index>(i);
                out << id.area << ',' << sex_code(id.sex) << ',' << panel.years[t] << ','
                    << format_age(panel.grid, i) << ',';
                if (s.observed(ti, ii)) {
                    out << text::format_double(s.rate(ti, ii)) << ','
                        << text::format_double(s.exposure(ti, ii)) << ','
                        << text::format_double(s.deaths(ti, ii));
                } else {
                    out << ',' << text::format_double(s.exposure(ti, ii)) << ',';
                }
                out << '\n';
            }
        }
    }
}

inline void save_panel(const MortalityPanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_panel_csv(panel, out);
}

/// Log central rates of one series (years x ages); NaN where unobserved.
struct LogCurveSeries {
    Matrix values;
    Mask observed;
};

inline constexpr double kDefaultLogFloor = 1e-7;

/// y = ln(max(rate, floor)) on observed cells.
inline std::map<SeriesId, LogCurveSeries> to_log(const MortalityPanel& panel, double floor = kDefaultLogFloor) {
    if (!(floor > 0.0)) throw DomainError("log floor must be positive");
    std::map<SeriesId, LogCurveSeries> out;
    for (const auto& [id, s] : panel.series) {
        LogCurveSeries l;
        l.observed = s.observed;
        l.values = s.rate.unaryExpr([floor](double r) {
            return std::isnan(r) ? r : std::log(std::max(r, floor));
        });
        for (Eigen::Index t = 0; t < l.values.rows(); ++t)
            for (Eigen::Index i = 0; i < l.values.cols(); ++i)
                if (!l.observed(t, i)) l.values(t, i) = std::numeric_limits<double>::quiet_NaN();
        out.emplace(id, std::move(l));
    }
    return out;
}

}  // namespace gfts
