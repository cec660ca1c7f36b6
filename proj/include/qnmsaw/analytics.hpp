#ifndef QNMSAW_ANALYTICS_HPP
#define QNMSAW_ANALYTICS_HPP

// Closed-form loss budget of SAW resonators and phononic crystals.
// A Q contribution of +inf means the channel is absent; the harmonic
// combinations below drop such channels naturally.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"

namespace qnmsaw {

inline constexpr double kInfiniteQ = std::numeric_limits<double>::infinity();

struct ResonatorGeometry {
    double d_mirror_gap = 0.0;    // m, distance between mirrors
    double wavelength0 = 0.0;     // m, lambda0 = p' at the fundamental
    double r_s = 0.0;             // single-strip reflectance
    double n_g = 0.0;             // strips per mirror
    double aperture_w = 0.0;      // m
    double gamma = 0.0;           // anisotropy parameter
    double f0 = 0.0;              // Hz
    double v = 0.0;               // m/s
    double mean_free_path = 0.0;  // m
};

struct LossBudget {
    double q_grating = kInfiniteQ;
    double q_diffraction = kInfiniteQ;
    double q_material = kInfiniteQ;
    double q_radiation = kInfiniteQ;
    double q_total = kInfiniteQ;
    std::vector<std::string> flags;
};

// Effective cavity length L_c = d + lambda0 / |2 r_s|.
inline double effective_cavity_length(const ResonatorGeometry& g) {
    return g.d_mirror_gap + g.wavelength0 / std::abs(2.0 * g.r_s);
}

inline bool has_mirror_reflectivity(const ResonatorGeometry& g) { return g.r_s != 0.0; }

// Mirror-leakage limit  Q_g = pi L_c / (lambda0 (1 - tanh(|r_s| N_g))).
// 1 - tanh(x) is evaluated as 2 / (exp(2x) + 1) so long mirrors keep
// a finite value until exp overflows.
inline double q_grating(const ResonatorGeometry& g) {
    if (!(g.wavelength0 > 0.0)) throw ValidationError("wavelength0: must be positive");
    if (!(g.d_mirror_gap >= 0.0)) throw ValidationError("d_mirror_gap: must be non-negative");
    if (!(g.n_g >= 0.0)) throw ValidationError("n_g: must be non-negative");
    if (!has_mirror_reflectivity(g)) return kInfiniteQ;
    const double x = std::abs(g.r_s) * g.n_g;
    const double transparency = 2.0 / (std::exp(2.0 * x) + 1.0);
    if (transparency == 0.0) return kInfiniteQ;
    return std::numbers::pi * effective_cavity_length(g) / (g.wavelength0 * transparency);
}

inline double q_diffraction(const ResonatorGeometry& g) {
    if (!(g.aperture_w > 0.0)) throw ValidationError("aperture_w: must be positive");
    if (!(g.wavelength0 > 0.0)) throw ValidationError("wavelength0: must be positive");
    const double denom = std::abs(1.0 + g.gamma);
    if (denom == 0.0) throw ValidationError("gamma: |1 + gamma| = 0 makes the diffraction Q diverge");
    const double ratio = g.aperture_w / g.wavelength0;
    return 5.0 * std::numbers::pi / denom * ratio * ratio;
}

inline double q_material(const ResonatorGeometry& g) {
    if (!(g.f0 >= 0.0)) throw ValidationError("f0: must be non-negative");
    if (!(g.v > 0.0)) throw ValidationError("v: must be positive");
    if (!(g.mean_free_path >= 0.0)) throw ValidationError("mean_free_path: must be non-negative");
    return std::numbers::pi * g.f0 * g.mean_free_path / g.v;
}

// (sum 1/Q_k)^-1 over positive contributions; +inf entries drop out.
inline double combine_q(std::initializer_list<double> qs) {
    double inverse = 0.0;
    for (double q : qs) {
        if (!(q > 0.0)) throw ValidationError("Q contributions must be positive or +inf");
        inverse += 1.0 / q;
    }
    return inverse == 0.0 ? kInfiniteQ : 1.0 / inverse;
}

inline double combine_resonator(double q_grating, double q_diffraction, double q_material) {
    return combine_q({q_grating, q_diffraction, q_material});
}

inline double combine_crystal(double q_radiation, double q_material) { return combine_q({q_radiation, q_material}); }

inline LossBudget resonator_budget(const ResonatorGeometry& g) {
    LossBudget b;
    b.q_grating = q_grating(g);
    if (!has_mirror_reflectivity(g)) b.flags.emplace_back("no-mirror-reflectivity");
    b.q_diffraction = q_diffraction(g);
    b.q_material = q_material(g);
    b.q_total = combine_resonator(b.q_grating, b.q_diffraction, b.q_material);
    return b;
}

inline LossBudget crystal_budget(double q_radiation, double q_material) {
    LossBudget b;
    b.q_radiation = q_radiation;
    b.q_material = q_material;
    b.q_total = combine_crystal(q_radiation, q_material);
    return b;
}

struct TransverseLimit {
    double alpha_c_deg;
    int j_max;
};

// Critical angle arcsin(1/n_eff) and the highest transverse order j whose
// incidence angle arctan(k_x / k_y), k_x = pi / strip_period,
// k_y = pi j / W, still exceeds it.
inline TransverseLimit transverse_mode_limit(double n_eff, double strip_period, double aperture_w) {
    if (!(n_eff >= 1.0)) throw ValidationError("n_eff: must be >= 1");
    if (!(strip_period > 0.0)) throw ValidationError("strip_period: must be positive");
    if (!(aperture_w > 0.0)) throw ValidationError("aperture_w: must be positive");
    const double alpha_c = std::asin(1.0 / n_eff);
    const double kx = std::numbers::pi / strip_period;
    auto confined = [&](int j) { return std::atan2(kx, std::numbers::pi * j / aperture_w) > alpha_c; };
    // arctan(kx/ky) > alpha_c  <=>  j < W / (p tan(alpha_c)); start at the
    // estimate and settle the boundary with the exact test.
    const double estimate = aperture_w / (strip_period * std::tan(alpha_c));
    int j = static_cast<int>(std::min(estimate, 1e9));
    while (j > 0 && !confined(j)) --j;
    while (confined(j + 1)) ++j;
    return {alpha_c * 180.0 / std::numbers::pi, std::max(j, 0)};
}

} // namespace qnmsaw

#endif // QNMSAW_ANALYTICS_HPP
