#ifndef QNMSAW_CONFIG_HPP
#define QNMSAW_CONFIG_HPP

// Structure configuration files (JSON, comments allowed).
//
//   {
//     "label": "R9",
//     "v0_m_per_s": 3158,
//     "strip_reflectance": 0.015,
//     "metallization_ratio": 0.5,
//     "recipe": {"n_total": 600, "n_mirror": 250,
//                "center_strip_period_m": 0.475e-6, "mirror_strip_period_m": 0.48e-6}
//   }
//
// Instead of "recipe" a file may give "cavity": {"gap_length_m", "n_mirror",
// "mirror_strip_period_m"} or an explicit "segments" list whose entries are
// [length_m, index, "gap"|"strip"] or {"length_m", "index", "kind"}.
// An explicit segment list wins over a recipe. Unknown keys are errors.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "structure.hpp"

namespace qnmsaw {

struct StructureConfig {
    std::string label;
    double v0 = kDefaultV0;
    double strip_reflectance = kDefaultStripReflectance;
    double metallization_ratio = kDefaultMetallizationRatio;
    std::optional<CrystalRecipe> recipe;
    std::optional<CavityRecipe> cavity;
    std::optional<std::vector<Segment>> segments;

    [[nodiscard]] StructureSpec build() const {
        if (!(v0 > 0.0) || !std::isfinite(v0)) throw ValidationError("v0_m_per_s: must be positive");
        if (segments) {
            StructureSpec spec{*segments, v0, label};
            spec.validate();
            return spec;
        }
        if (recipe) {
            CrystalRecipe r = *recipe;
            r.metallization_ratio = metallization_ratio;
            r.single_strip_reflectance = strip_reflectance;
            return build_mirrored_crystal(r, v0, label);
        }
        if (cavity) {
            CavityRecipe c = *cavity;
            c.metallization_ratio = metallization_ratio;
            c.single_strip_reflectance = strip_reflectance;
            return build_empty_cavity(c, v0, label);
        }
        throw ValidationError("config: need one of 'recipe', 'cavity' or 'segments'");
    }

    // Central strip pitch, used for the default search band.
    [[nodiscard]] double reference_period() const {
        if (recipe) return recipe->center_strip_period;
        if (cavity) return cavity->mirror_strip_period;
        return kDefaultCenterStripPeriod;
    }
};

inline StructureConfig catalog_config(const std::string& label) {
    StructureConfig c;
    c.label = label;
    c.recipe = catalog_recipe(label);
    return c;
}

// Recipe fields a parameter sweep may vary.
inline const std::vector<std::string>& sweepable_fields() {
    static const std::vector<std::string> fields{"n_total",           "n_mirror",        "center_strip_period_m",
                                                 "mirror_strip_period_m", "metallization_ratio", "strip_reflectance",
                                                 "v0_m_per_s",        "gap_length_m"};
    return fields;
}

inline StructureConfig with_field(StructureConfig c, const std::string& field, double value) {
    auto count = [&](const char* name) {
        if (!(value >= 0.0) || value != std::floor(value) || value > 1e9)
            throw ValidationError(std::string(name) + ": must be a non-negative integer");
        return static_cast<std::size_t>(value);
    };
    auto need_recipe = [&]() -> CrystalRecipe& {
        if (!c.recipe) throw ValidationError(field + ": config has no recipe");
        return *c.recipe;
    };
    if (field == "metallization_ratio") c.metallization_ratio = value;
    else if (field == "strip_reflectance") c.strip_reflectance = value;
    else if (field == "v0_m_per_s") c.v0 = value;
    else if (field == "n_total") need_recipe().n_total = count("n_total");
    else if (field == "center_strip_period_m") need_recipe().center_strip_period = value;
    else if (field == "n_mirror") {
        if (c.cavity) c.cavity->n_mirror = count("n_mirror");
        else need_recipe().n_mirror = count("n_mirror");
    } else if (field == "mirror_strip_period_m") {
        if (c.cavity) c.cavity->mirror_strip_period = value;
        else need_recipe().mirror_strip_period = value;
    } else if (field == "gap_length_m") {
        if (!c.cavity) throw ValidationError("gap_length_m: config has no cavity");
        c.cavity->gap_length = value;
    } else {
        throw ValidationError("vary: unknown field '" + field + "'");
    }
    return c;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw ValidationError(where + ": unknown key '" + key + "'");
}

inline double get_number(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(where + ": missing '" + key + "'");
    if (!it->is_number()) throw ValidationError(where + "." + key + ": expected a number");
    return it->get<double>();
}

inline std::size_t get_count(const nlohmann::json& obj, const char* key, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(where + ": missing '" + key + "'");
    if (!it->is_number_integer() || it->get<long long>() < 0)
        throw ValidationError(where + "." + key + ": expected a non-negative integer");
    return it->get<std::size_t>();
}

inline SegmentKind parse_kind(const nlohmann::json& v, const std::string& where) {
    if (v == "gap") return SegmentKind::gap;
    if (v == "strip") return SegmentKind::strip;
    throw ValidationError(where + ".kind: expected \"gap\" or \"strip\"");
}

inline Segment parse_segment(const nlohmann::json& v, std::size_t k) {
    const std::string where = "segments[" + std::to_string(k) + "]";
    if (v.is_array()) {
        if (v.size() != 3 || !v[0].is_number() || !v[1].is_number())
            throw ValidationError(where + ": expected [length_m, index, kind]");
        return {v[0].get<double>(), v[1].get<double>(), parse_kind(v[2], where)};
    }
    if (v.is_object()) {
        reject_unknown(v, {"length_m", "index", "kind"}, where);
        if (!v.contains("kind")) throw ValidationError(where + ": missing 'kind'");
        return {get_number(v, "length_m", where), get_number(v, "index", where), parse_kind(v["kind"], where)};
    }
    throw ValidationError(where + ": expected an array or object");
}

} // namespace detail

inline StructureConfig parse_structure_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config: top level must be an object");
    detail::reject_unknown(j,
                           {"label", "v0_m_per_s", "strip_reflectance", "metallization_ratio", "recipe", "cavity",
                            "segments"},
                           "config");
    StructureConfig c;
    if (j.contains("label")) {
        if (!j["label"].is_string()) throw ValidationError("config.label: expected a string");
        c.label = j["label"].get<std::string>();
    }
    if (j.contains("v0_m_per_s")) c.v0 = detail::get_number(j, "v0_m_per_s", "config");
    if (j.contains("strip_reflectance")) c.strip_reflectance = detail::get_number(j, "strip_reflectance", "config");
    if (j.contains("metallization_ratio"))
        c.metallization_ratio = detail::get_number(j, "metallization_ratio", "config");
    if (j.contains("recipe") && j.contains("cavity"))
        throw ValidationError("config: 'recipe' and 'cavity' are mutually exclusive");
    if (j.contains("recipe")) {
        const auto& r = j["recipe"];
        if (!r.is_object()) throw ValidationError("recipe: expected an object");
        detail::reject_unknown(r, {"n_total", "n_mirror", "center_strip_period_m", "mirror_strip_period_m"}, "recipe");
        CrystalRecipe rec;
        rec.n_total = detail::get_count(r, "n_total", "recipe");
        if (r.contains("n_mirror")) rec.n_mirror = detail::get_count(r, "n_mirror", "recipe");
        if (r.contains("center_strip_period_m"))
            rec.center_strip_period = detail::get_number(r, "center_strip_period_m", "recipe");
        if (r.contains("mirror_strip_period_m"))
            rec.mirror_strip_period = detail::get_number(r, "mirror_strip_period_m", "recipe");
        c.recipe = rec;
    }
    if (j.contains("cavity")) {
        const auto& r = j["cavity"];
        if (!r.is_object()) throw ValidationError("cavity: expected an object");
        detail::reject_unknown(r, {"gap_length_m", "n_mirror", "mirror_strip_period_m"}, "cavity");
        CavityRecipe cav;
        cav.gap_length = detail::get_number(r, "gap_length_m", "cavity");
        if (r.contains("n_mirror")) cav.n_mirror = detail::get_count(r, "n_mirror", "cavity");
        if (r.contains("mirror_strip_period_m"))
            cav.mirror_strip_period = detail::get_number(r, "mirror_strip_period_m", "cavity");
        c.cavity = cav;
    }
    if (j.contains("segments")) {
        const auto& s = j["segments"];
        if (!s.is_array() || s.empty()) throw ValidationError("segments: expected a non-empty list");
        std::vector<Segment> segs;
        for (std::size_t k = 0; k < s.size(); ++k) segs.push_back(detail::parse_segment(s[k], k));
        c.segments = std::move(segs);
    }
    if (!c.recipe && !c.cavity && !c.segments)
        throw ValidationError("config: need one of 'recipe', 'cavity' or 'segments'");
    return c;
}

inline StructureConfig load_structure_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_structure_config(text.str());
}

} // namespace qnmsaw

#endif // QNMSAW_CONFIG_HPP
