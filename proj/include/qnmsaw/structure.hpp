#ifndef QNMSAW_STRUCTURE_HPP
#define QNMSAW_STRUCTURE_HPP

// Geometric/material model of a strip array: an ordered list of
// constant-velocity segments, plus builders for uniform crystals,
// crystals with end mirrors and empty cavities between mirrors.
//
// Lengths are in meters. A segment's index n sets the local SAW speed
// v(x) = v0 / n, with n = 1 on the free surface (gaps) and n >= 1 under
// metallization (strips).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace qnmsaw {

inline constexpr double kDefaultV0 = 3158.0;               // m/s, ST-X quartz
inline constexpr double kDefaultStripReflectance = 0.015;  // r_s
inline constexpr double kDefaultMetallizationRatio = 0.5;  // a/p
inline constexpr double kDefaultCenterStripPeriod = 0.475e-6;
inline constexpr double kDefaultMirrorStripPeriod = 0.48e-6;

enum class SegmentKind { gap, strip };

inline const char* to_string(SegmentKind kind) { return kind == SegmentKind::gap ? "gap" : "strip"; }

struct Segment {
    double length = 0.0;
    double index = 1.0;
    SegmentKind kind = SegmentKind::gap;

    friend bool operator==(const Segment&, const Segment&) = default;
};

struct StructureSpec {
    std::vector<Segment> segments;
    double v0 = kDefaultV0;
    std::string label;

    friend bool operator==(const StructureSpec&, const StructureSpec&) = default;

    [[nodiscard]] double total_length() const {
        return std::accumulate(segments.begin(), segments.end(), 0.0,
                               [](double acc, const Segment& s) { return acc + s.length; });
    }

    [[nodiscard]] std::size_t strip_count() const {
        return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(), [](const Segment& s) {
            return s.kind == SegmentKind::strip;
        }));
    }

    // x coordinate of each amplitude node: the outer edges for the two end
    // segments, the segment midpoint for every interior one.
    [[nodiscard]] std::vector<double> node_positions() const {
        std::vector<double> x(segments.size());
        double left = 0.0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            x[i] = left + 0.5 * segments[i].length;
            left += segments[i].length;
        }
        if (!x.empty()) {
            x.front() = 0.0;
            x.back() = left;
        }
        return x;
    }

    [[nodiscard]] StructureSpec reversed() const {
        StructureSpec out = *this;
        std::reverse(out.segments.begin(), out.segments.end());
        return out;
    }

    // Same geometry with all lengths multiplied by `factor`.
    [[nodiscard]] StructureSpec scaled(double factor) const {
        StructureSpec out = *this;
        for (auto& s : out.segments) s.length *= factor;
        return out;
    }

    void validate() const {
        if (segments.empty()) throw ValidationError("segments: structure has no segments");
        if (!(v0 > 0.0) || !std::isfinite(v0)) throw ValidationError("v0: must be a positive finite speed");
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const Segment& s = segments[i];
            const std::string where = "segments[" + std::to_string(i) + "]";
            if (!(s.length > 0.0) || !std::isfinite(s.length))
                throw ValidationError(where + ".length: must be positive");
            if (s.kind == SegmentKind::gap && s.index != 1.0)
                throw ValidationError(where + ".index: gaps are free surface with index 1");
            if (s.kind == SegmentKind::strip && (!(s.index >= 1.0) || !std::isfinite(s.index)))
                throw ValidationError(where + ".index: strips need index >= 1");
            if (i > 0 && segments[i - 1].kind == s.kind)
                throw ValidationError(where + ".kind: gaps and strips must alternate");
        }
        if (segments.front().kind != SegmentKind::gap || segments.back().kind != SegmentKind::gap)
            throw ValidationError("segments: first and last segment must be gaps");
    }
};

// Index of a metallized strip relative to the free surface (n_l = 1) for a
// single-strip reflectance r_s = 2 (n_h - n_l) / (n_h + n_l).
inline double strip_index(double strip_reflectance) {
    if (!(strip_reflectance >= 0.0) || !(strip_reflectance < 2.0))
        throw ValidationError("single_strip_reflectance: must lie in [0, 2)");
    return (1.0 + 0.5 * strip_reflectance) / (1.0 - 0.5 * strip_reflectance);
}

struct CrystalRecipe {
    std::size_t n_total = 0;
    std::size_t n_mirror = 0;
    double center_strip_period = kDefaultCenterStripPeriod;
    double mirror_strip_period = kDefaultMirrorStripPeriod;
    double metallization_ratio = kDefaultMetallizationRatio;
    double single_strip_reflectance = kDefaultStripReflectance;

    friend bool operator==(const CrystalRecipe&, const CrystalRecipe&) = default;

    [[nodiscard]] double strip_index() const { return qnmsaw::strip_index(single_strip_reflectance); }

    void validate() const {
        if (n_total < 1) throw ValidationError("n_total: need at least one strip");
        if (2 * n_mirror >= n_total && n_mirror > 0)
            throw ValidationError("n_mirror: 2*n_mirror must be smaller than n_total");
        if (!(center_strip_period > 0.0) || !std::isfinite(center_strip_period))
            throw ValidationError("center_strip_period: must be positive");
        if (n_mirror > 0 && (!(mirror_strip_period > 0.0) || !std::isfinite(mirror_strip_period)))
            throw ValidationError("mirror_strip_period: must be positive");
        if (!(metallization_ratio > 0.0) || !(metallization_ratio < 1.0))
            throw ValidationError("metallization_ratio: must lie in (0, 1)");
        (void)strip_index();
    }
};

namespace detail {

// Strip cells laid out left to right; each cell is one strip centered in
// its pitch, and neighbouring cells share the gap between them half/half.
inline StructureSpec cells_to_spec(const std::vector<double>& pitches, double ratio, double n_strip, double v0,
                                   std::string label) {
    StructureSpec spec;
    spec.v0 = v0;
    spec.label = std::move(label);
    spec.segments.reserve(2 * pitches.size() + 1);
    auto half_gap = [ratio](double p) { return 0.5 * (p - ratio * p); };
    spec.segments.push_back({half_gap(pitches.front()), 1.0, SegmentKind::gap});
    for (std::size_t i = 0; i < pitches.size(); ++i) {
        spec.segments.push_back({ratio * pitches[i], n_strip, SegmentKind::strip});
        const double right = half_gap(pitches[i]);
        const double next = i + 1 < pitches.size() ? half_gap(pitches[i + 1]) : 0.0;
        spec.segments.push_back({right + next, 1.0, SegmentKind::gap});
    }
    return spec;
}

} // namespace detail

inline StructureSpec build_mirrored_crystal(const CrystalRecipe& recipe, double v0 = kDefaultV0,
                                            std::string label = {}) {
    recipe.validate();
    if (!(v0 > 0.0)) throw ValidationError("v0: must be positive");
    std::vector<double> pitches;
    pitches.reserve(recipe.n_total);
    const std::size_t n_center = recipe.n_total - 2 * recipe.n_mirror;
    pitches.insert(pitches.end(), recipe.n_mirror, recipe.mirror_strip_period);
    pitches.insert(pitches.end(), n_center, recipe.center_strip_period);
    pitches.insert(pitches.end(), recipe.n_mirror, recipe.mirror_strip_period);
    return detail::cells_to_spec(pitches, recipe.metallization_ratio, recipe.strip_index(), v0, std::move(label));
}

inline StructureSpec build_uniform_crystal(const CrystalRecipe& recipe, double v0 = kDefaultV0,
                                           std::string label = {}) {
    if (recipe.n_mirror != 0) throw ValidationError("n_mirror: uniform crystal requires n_mirror = 0");
    return build_mirrored_crystal(recipe, v0, std::move(label));
}

struct CavityRecipe {
    double gap_length = 0.0;  // free stretch between the two mirror cell boundaries
    std::size_t n_mirror = 0;
    double mirror_strip_period = kDefaultMirrorStripPeriod;
    double metallization_ratio = kDefaultMetallizationRatio;
    double single_strip_reflectance = kDefaultStripReflectance;
};

// Two mirrors separated by one metallization-free gap. The cavity gap
// segment also absorbs the half-gaps of the adjacent mirror cells, so the
// total length is 2 * n_mirror * mirror_strip_period + gap_length.
inline StructureSpec build_empty_cavity(const CavityRecipe& recipe, double v0 = kDefaultV0, std::string label = {}) {
    if (!(recipe.gap_length > 0.0) || !std::isfinite(recipe.gap_length))
        throw ValidationError("gap_length: must be positive");
    if (!(v0 > 0.0)) throw ValidationError("v0: must be positive");
    if (recipe.n_mirror == 0) return StructureSpec{{{recipe.gap_length, 1.0, SegmentKind::gap}}, v0, std::move(label)};

    CrystalRecipe mirror;
    mirror.n_total = recipe.n_mirror;
    mirror.center_strip_period = recipe.mirror_strip_period;
    mirror.metallization_ratio = recipe.metallization_ratio;
    mirror.single_strip_reflectance = recipe.single_strip_reflectance;
    const StructureSpec half = build_uniform_crystal(mirror, v0);

    StructureSpec spec;
    spec.v0 = v0;
    spec.label = std::move(label);
    spec.segments = half.segments;
    spec.segments.back().length = 2.0 * half.segments.back().length + recipe.gap_length;
    spec.segments.insert(spec.segments.end(), half.segments.begin() + 1, half.segments.end());
    return spec;
}

// The nine crystals compared in the mode survey, in survey order:
// short (N = 300), medium (N = 400) and long (N = 600), each with
// increasing mirror length.
inline std::vector<std::pair<std::string, CrystalRecipe>> recipe_catalog() {
    constexpr std::pair<std::size_t, std::size_t> sizes[] = {{300, 0},   {300, 50},  {300, 100},
                                                             {400, 0},   {400, 100}, {400, 150},
                                                             {600, 0},   {600, 200}, {600, 250}};
    std::vector<std::pair<std::string, CrystalRecipe>> out;
    int k = 1;
    for (const auto& [n, ng] : sizes) {
        CrystalRecipe r;
        r.n_total = n;
        r.n_mirror = ng;
        out.emplace_back("R" + std::to_string(k++), r);
    }
    return out;
}

inline CrystalRecipe catalog_recipe(const std::string& label) {
    for (auto& [name, recipe] : recipe_catalog())
        if (name == label) return recipe;
    throw ValidationError("catalog: unknown label '" + label + "' (expected R1..R9)");
}

inline StructureSpec build_catalog_structure(const std::string& label, double v0 = kDefaultV0) {
    return build_mirrored_crystal(catalog_recipe(label), v0, label);
}

} // namespace qnmsaw

#endif // QNMSAW_STRUCTURE_HPP
