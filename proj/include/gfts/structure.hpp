#pragma once

// Group structures: which series aggregate into which, how they are ordered
// in the summing matrix, and which series are modelled jointly.

#include "gfts/error.hpp"
#include "gfts/panel.hpp"
#include "gfts/text.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gfts {

enum class HierarchyTag { GeoOnly, Hierarchy1, Hierarchy2, Custom };

inline std::string to_string(HierarchyTag t) {
    switch (t) {
        case HierarchyTag::GeoOnly: return "geo-only";
        case HierarchyTag::Hierarchy1: return "hierarchy1";
        case HierarchyTag::Hierarchy2: return "hierarchy2";
        case HierarchyTag::Custom: return "custom";
    }
    return "custom";
}

inline HierarchyTag parse_hierarchy(std::string_view s) {
    s = text::trim(s);
    if (s == "geo-only") return HierarchyTag::GeoOnly;
    if (s == "hierarchy1") return HierarchyTag::Hierarchy1;
    if (s == "hierarchy2") return HierarchyTag::Hierarchy2;
    if (s == "custom") return HierarchyTag::Custom;
    throw DomainError("unknown hierarchy '" + std::string(s) + "'");
}

/// Canonical disaggregation level names, top to bottom.
namespace level {
inline constexpr const char* national = "national";
inline constexpr const char* sex = "sex";
inline constexpr const char* region = "region";
inline constexpr const char* region_sex = "region_sex";
inline constexpr const char* prefecture = "prefecture";
inline constexpr const char* prefecture_sex = "prefecture_sex";
}  // namespace level

struct StructureNode {
    SeriesId id;
    std::string level;
    std::optional<SeriesId> parent;
    std::vector<SeriesId> members;  ///< bottom-level descendants (self for bottoms)
};

/// Series modelled together in one stacked functional time series.
struct JointBlockSpec {
    std::string name;
    std::vector<SeriesId> members;
};

struct GroupStructure {
    HierarchyTag tag = HierarchyTag::Custom;
    std::vector<StructureNode> nodes;  ///< summing-matrix row order
    std::vector<SeriesId> bottom;      ///< summing-matrix column order
    std::vector<JointBlockSpec> blocks;

    [[nodiscard]] std::size_t node_count() const noexcept { return nodes.size(); }
    [[nodiscard]] std::size_t bottom_count() const noexcept { return bottom.size(); }

    [[nodiscard]] std::size_t node_index(const SeriesId& id) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id == id) return i;
        throw DomainError("series " + id.str() + " is not a node of the structure");
    }

    [[nodiscard]] std::size_t bottom_index(const SeriesId& id) const {
        for (std::size_t i = 0; i < bottom.size(); ++i)
            if (bottom[i] == id) return i;
        throw DomainError("series " + id.str() + " is not a bottom-level series");
    }

    [[nodiscard]] const StructureNode& node(const SeriesId& id) const { return nodes[node_index(id)]; }

    /// Level names in first-appearance order.
    [[nodiscard]] std::vector<std::string> levels() const {
        std::vector<std::string> out;
        for (const auto& n : nodes)
            if (std::find(out.begin(), out.end(), n.level) == out.end()) out.push_back(n.level);
        return out;
    }

    void validate() const {
        if (nodes.empty()) throw StructuralError("structure has no nodes");
        std::set<SeriesId> ids;
        for (const auto& n : nodes)
            if (!ids.insert(n.id).second) throw StructuralError("duplicate node " + n.id.str());
        std::set<SeriesId> bottoms(bottom.begin(), bottom.end());
        if (bottoms.size() != bottom.size()) throw StructuralError("duplicate bottom series");
        if (bottom.empty()) throw StructuralError("structure has no bottom-level series");
        for (const auto& b : bottom) {
            const auto& n = node(b);
            if (n.members.size() != 1 || n.members.front() != b)
                throw StructuralError("bottom node " + b.str() + " must list only itself as member");
        }
        bool has_top = false;
        for (const auto& n : nodes) {
            if (n.members.empty()) throw StructuralError("node " + n.id.str() + " has no members");
            std::set<SeriesId> m;
            for (const auto& b : n.members) {
                if (!bottoms.count(b))
                    throw StructuralError("node " + n.id.str() + " lists " + b.str() + ", which is not a bottom series");
                if (!m.insert(b).second)
                    throw StructuralError("node " + n.id.str() + " lists " + b.str() + " twice");
            }
            if (m.size() == bottoms.size()) has_top = true;
            if (n.parent) {
                if (!ids.count(*n.parent))
                    throw StructuralError("node " + n.id.str() + " has unknown parent " + n.parent->str());
                const auto& pm = node(*n.parent).members;
                std::set<SeriesId> parent_members(pm.begin(), pm.end());
                for (const auto& b : n.members)
                    if (!parent_members.count(b))
                        throw StructuralError("node " + n.id.str() + " is not contained in its parent " +
                                              n.parent->str());
            }
        }
        if (!has_top) throw StructuralError("no node covers every bottom series");
        std::set<SeriesId> blocked;
        for (const auto& blk : blocks) {
            if (blk.members.empty()) throw StructuralError("block " + blk.name + " is empty");
            for (const auto& m : blk.members) {
                if (!ids.count(m)) throw StructuralError("block " + blk.name + " lists unknown series " + m.str());
                if (!blocked.insert(m).second)
                    throw StructuralError("series " + m.str() + " appears in more than one block");
            }
        }
        if (!blocks.empty() && blocked.size() != ids.size())
            throw StructuralError("joint-modelling blocks must cover every node exactly once");
    }

    /// Every node modelled on its own: the univariate method.
    [[nodiscard]] std::vector<JointBlockSpec> singleton_blocks() const {
        std::vector<JointBlockSpec> out;
        for (const auto& n : nodes) out.push_back({n.id.str(), {n.id}});
        return out;
    }
};

/// Geography of a national / region / prefecture tree.
struct GeoLayout {
    std::string national = "Japan";
    std::vector<int> prefectures_per_region;
    bool by_sex = true;

    [[nodiscard]] int prefecture_count() const {
        int s = 0;
        for (int c : prefectures_per_region) s += c;
        return s;
    }

    static std::string region_name(std::size_t r) { return "R" + std::to_string(r + 1); }
    static std::string prefecture_name(std::size_t p) { return "P" + std::to_string(p + 1); }

    /// The eight regions / 47 prefectures of Japan, numbered north to south.
    static GeoLayout japan() { return {"Japan", {1, 6, 7, 9, 7, 5, 4, 8}, true}; }
};

/// Builds one of the bundled hierarchies over a geographic layout.
/// Without a sex split every tag yields the geographic hierarchy.
inline GroupStructure make_structure(const GeoLayout& layout, HierarchyTag tag) {
    if (layout.prefectures_per_region.empty()) throw DomainError("layout needs at least one region");
    for (int c : layout.prefectures_per_region)
        if (c < 1) throw DomainError("each region needs at least one prefecture");
    if (tag == HierarchyTag::Custom) throw DomainError("custom structures are read from a file");
    if (!layout.by_sex) tag = HierarchyTag::GeoOnly;

    const std::size_t R = layout.prefectures_per_region.size();
    std::vector<std::vector<std::size_t>> pref_of_region(R);
    std::size_t np = 0;
    for (std::size_t r = 0; r < R; ++r)
        for (int k = 0; k < layout.prefectures_per_region[r]; ++k) pref_of_region[r].push_back(np++);
    std::vector<std::size_t> region_of_pref(np);
    for (std::size_t r = 0; r < R; ++r)
        for (auto p : pref_of_region[r]) region_of_pref[p] = r;

    auto rid = [](std::size_t r, Sex s) { return SeriesId{GeoLayout::region_name(r), s}; };
    auto pid = [](std::size_t p, Sex s) { return SeriesId{GeoLayout::prefecture_name(p), s}; };
    const SeriesId top{layout.national, Sex::Total};

    GroupStructure g;
    g.tag = tag;

    if (tag == HierarchyTag::GeoOnly) {
        for (std::size_t p = 0; p < np; ++p) g.bottom.push_back(pid(p, Sex::Total));
        auto members_of_region = [&](std::size_t r) {
            std::vector<SeriesId> m;
            for (auto p : pref_of_region[r]) m.push_back(pid(p, Sex::Total));
            return m;
        };
        g.nodes.push_back({top, level::national, std::nullopt, g.bottom});
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back({rid(r, Sex::Total), level::region, top, members_of_region(r)});
        for (std::size_t p = 0; p < np; ++p)
            g.nodes.push_back({pid(p, Sex::Total), level::prefecture, rid(region_of_pref[p], Sex::Total), {pid(p, Sex::Total)}});

        g.blocks.push_back({"national", {top}});
        JointBlockSpec regions{"regions", {}};
        for (std::size_t r = 0; r < R; ++r) regions.members.push_back(rid(r, Sex::Total));
        g.blocks.push_back(regions);
        for (std::size_t r = 0; r < R; ++r)
            g.blocks.push_back({GeoLayout::region_name(r) + "-prefectures", members_of_region(r)});
        return g;
    }

    const bool h1 = tag == HierarchyTag::Hierarchy1;
    for (std::size_t p = 0; p < np; ++p) {
        g.bottom.push_back(pid(p, Sex::Female));
        g.bottom.push_back(pid(p, Sex::Male));
    }
    auto members = [&](const std::vector<std::size_t>& prefs, std::optional<Sex> sex) {
        std::vector<SeriesId> m;
        for (auto p : prefs) {
            if (!sex || *sex == Sex::Female) m.push_back(pid(p, Sex::Female));
            if (!sex || *sex == Sex::Male) m.push_back(pid(p, Sex::Male));
        }
        return m;
    };
    std::vector<std::size_t> all_prefs(np);
    for (std::size_t p = 0; p < np; ++p) all_prefs[p] = p;

    const SeriesId top_f{layout.national, Sex::Female}, top_m{layout.national, Sex::Male};
    g.nodes.push_back({top, level::national, std::nullopt, members(all_prefs, std::nullopt)});
    g.nodes.push_back({top_f, level::sex, top, members(all_prefs, Sex::Female)});
    g.nodes.push_back({top_m, level::sex, top, members(all_prefs, Sex::Male)});

    auto region_total = [&](std::size_t r) {
        return StructureNode{rid(r, Sex::Total), level::region, top, members(pref_of_region[r], std::nullopt)};
    };
    auto region_sex = [&](std::size_t r, Sex s) {
        const SeriesId parent = h1 ? rid(r, Sex::Total) : (s == Sex::Female ? top_f : top_m);
        return StructureNode{rid(r, s), level::region_sex, parent, members(pref_of_region[r], s)};
    };
    if (h1) {
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back(region_total(r));
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back(region_sex(r, Sex::Female));
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back(region_sex(r, Sex::Male));
    } else {
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back(region_sex(r, Sex::Female));
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back(region_sex(r, Sex::Male));
        for (std::size_t r = 0; r < R; ++r) g.nodes.push_back(region_total(r));
    }
    for (std::size_t p = 0; p < np; ++p)
        g.nodes.push_back({pid(p, Sex::Total), level::prefecture, rid(region_of_pref[p], Sex::Total),
                           members({p}, std::nullopt)});
    for (std::size_t p = 0; p < np; ++p) {
        for (Sex s : {Sex::Female, Sex::Male}) {
            const SeriesId parent = h1 ? pid(p, Sex::Total) : rid(region_of_pref[p], s);
            g.nodes.push_back({pid(p, s), level::prefecture_sex, parent, {pid(p, s)}});
        }
    }

    // Totals are modelled geographically in both hierarchies.
    g.blocks.push_back({"national", {top}});
    JointBlockSpec regions{"regions", {}};
    for (std::size_t r = 0; r < R; ++r) regions.members.push_back(rid(r, Sex::Total));
    g.blocks.push_back(regions);
    for (std::size_t r = 0; r < R; ++r) {
        JointBlockSpec b{GeoLayout::region_name(r) + "-prefectures", {}};
        for (auto p : pref_of_region[r]) b.members.push_back(pid(p, Sex::Total));
        g.blocks.push_back(b);
    }
    if (h1) {
        // Sex pairs at every geographic node.
        g.blocks.push_back({"sexes", {top_f, top_m}});
        for (std::size_t r = 0; r < R; ++r)
            g.blocks.push_back({GeoLayout::region_name(r) + "-sexes", {rid(r, Sex::Female), rid(r, Sex::Male)}});
        for (std::size_t p = 0; p < np; ++p)
            g.blocks.push_back({GeoLayout::prefecture_name(p) + "-sexes", {pid(p, Sex::Female), pid(p, Sex::Male)}});
    } else {
        // One sex at a time across geography.
        for (Sex s : {Sex::Female, Sex::Male}) {
            const std::string sx(1, sex_code(s));
            g.blocks.push_back({"national-" + sx, {SeriesId{layout.national, s}}});
            JointBlockSpec rb{"regions-" + sx, {}};
            for (std::size_t r = 0; r < R; ++r) rb.members.push_back(rid(r, s));
            g.blocks.push_back(rb);
            for (std::size_t r = 0; r < R; ++r) {
                JointBlockSpec b{GeoLayout::region_name(r) + "-prefectures-" + sx, {}};
                for (auto p : pref_of_region[r]) b.members.push_back(pid(p, s));
                g.blocks.push_back(b);
            }
        }
    }
    return g;
}

/// Structure for a panel with one series: the series is its own top and bottom.
inline GroupStructure make_single_structure(const SeriesId& id) {
    GroupStructure g;
    g.tag = HierarchyTag::Custom;
    g.nodes.push_back({id, level::national, std::nullopt, {id}});
    g.bottom.push_back(id);
    g.blocks.push_back({id.str(), {id}});
    return g;
}

// Structure file: one record per line, comma separated, '#' comments.
//   hierarchy,<tag>
//   node,<id>,<level>,<parent id or empty>,<member;member;...>
//   block,<name>,<member;member;...>
// Bottom series are the nodes whose only member is themselves.

inline void write_structure(const GroupStructure& g, std::ostream& out) {
    out << "hierarchy," << to_string(g.tag) << '\n';
    auto join = [](const std::vector<SeriesId>& ids) {
        std::string s;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) s += ';';
            s += ids[i].str();
        }
        return s;
    };
    for (const auto& n : g.nodes)
        out << "node," << n.id.str() << ',' << n.level << ',' << (n.parent ? n.parent->str() : "") << ','
            << join(n.members) << '\n';
    for (const auto& b : g.blocks) out << "block," << b.name << ',' << join(b.members) << '\n';
}

inline GroupStructure read_structure(std::istream& in) {
    GroupStructure g;
    std::string line;
    std::size_t row = 0;
    auto parse_ids = [&row](std::string_view s) {
        std::vector<SeriesId> ids;
        if (text::trim(s).empty()) return ids;
        for (auto tok : text::split(s, ';')) {
            try {
                ids.push_back(SeriesId::parse(text::trim(tok)));
            } catch (const DomainError& e) {
                throw ParseError(e.what(), row);
            }
        }
        return ids;
    };
    while (std::getline(in, line)) {
        ++row;
        auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto f = text::split(t, ',');
        const auto kind = text::trim(f[0]);
        if (kind == "hierarchy") {
            if (f.size() != 2) throw ParseError("expected 'hierarchy,<tag>'", row);
            try {
                g.tag = parse_hierarchy(f[1]);
            } catch (const DomainError& e) {
                throw ParseError(e.what(), row);
            }
        } else if (kind == "node") {
            if (f.size() != 5) throw ParseError("expected 'node,<id>,<level>,<parent>,<members>'", row);
            StructureNode n;
            try {
                n.id = SeriesId::parse(text::trim(f[1]));
                if (!text::trim(f[3]).empty()) n.parent = SeriesId::parse(text::trim(f[3]));
            } catch (const DomainError& e) {
                throw ParseError(e.what(), row);
            }
            n.level = std::string(text::trim(f[2]));
            n.members = parse_ids(f[4]);
            g.nodes.push_back(std::move(n));
        } else if (kind == "block") {
            if (f.size() != 3) throw ParseError("expected 'block,<name>,<members>'", row);
            g.blocks.push_back({std::string(text::trim(f[1])), parse_ids(f[2])});
        } else {
            throw ParseError("unknown record kind '" + std::string(kind) + "'", row);
        }
    }
    for (const auto& n : g.nodes)
        if (n.members.size() == 1 && n.members.front() == n.id) g.bottom.push_back(n.id);
    g.validate();
    return g;
}

inline GroupStructure load_structure(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return read_structure(in);
}

inline void save_structure(const GroupStructure& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_structure(g, out);
}

}  // namespace gfts
