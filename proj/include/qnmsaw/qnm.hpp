#ifndef QNMSAW_QNM_HPP
#define QNMSAW_QNM_HPP

// Quasinormal modes of a strip array: complex roots of the characteristic
// function, node amplitudes along the array, the QNM norm
//
//   <A|A> = 2 w Int_0^d A(x)^2 / v(x)^2 dx + (i / v0) (A(0)^2 + A(d)^2)
//
// and the radiation quality factor Re(w) / (-2 Im(w)).
//
// Inside segment k the field is the two-wave form
//   A(x) = c_k exp(+i n w (x - x_k) / v0) + b_k exp(-i n w (x - x_k) / v0)
// with x_k the position of node k (see StructureSpec::node_positions).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "structure.hpp"
#include "tmm.hpp"

namespace qnmsaw {

struct NodeAmplitudes {
    std::vector<Complex> b;  // leftward
    std::vector<Complex> c;  // rightward

    [[nodiscard]] std::size_t size() const { return b.size(); }

    // max over nodes of |b| + |c|
    [[nodiscard]] double amplitude_scale() const {
        double m = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) m = std::max(m, std::abs(b[k]) + std::abs(c[k]));
        return m;
    }
};

struct QnmMode {
    ComplexFrequency omega;
    double frequency_hz = 0.0;
    double q_radiation = 0.0;
    NodeAmplitudes nodes;
    Complex norm{0.0};       // norm before the last normalization
    double residual = 0.0;   // |characteristic| / matrix scale at omega
    bool normalized = false;
    int longitudinal_order = 0;  // position in the frequency-sorted result
    int transverse_order = 0;    // always 0 for the 1D model
};

struct QnmOptions {
    double grid_points_per_fsr = 8.0;
    double refine_tol = 1e-10;
    double max_q_search = 1e7;
    int max_iterations = 100;
    unsigned threads = 1;
    TmmOptions tmm{};
};

struct ModeSearchResult {
    std::vector<QnmMode> modes;
    std::size_t grid_points = 0;
    std::size_t seeds = 0;
    std::size_t dropped_nonconvergent = 0;
    std::size_t dropped_out_of_band = 0;
    std::size_t duplicates = 0;
    std::size_t degenerate_norms = 0;

    // Mode with the largest q_radiation, if any.
    [[nodiscard]] const QnmMode* best() const {
        if (modes.empty()) return nullptr;
        return &*std::max_element(modes.begin(), modes.end(),
                                  [](const QnmMode& a, const QnmMode& b) { return a.q_radiation < b.q_radiation; });
    }
};

class NotARootError : public SolverError {
public:
    NotARootError(const std::string& what, double residual) : SolverError(what), residual_(residual) {}
    [[nodiscard]] double residual() const { return residual_; }

private:
    double residual_;
};

class DegenerateNormError : public SolverError {
public:
    explicit DegenerateNormError(const std::string& what) : SolverError(what) {}
};

// Sum of n_k * length_k: the acoustic length that sets the free spectral
// range v0 / (2 * optical_length).
inline double optical_length(const StructureSpec& spec) {
    double s = 0.0;
    for (const auto& seg : spec.segments) s += seg.index * seg.length;
    return s;
}

inline double free_spectral_range(const StructureSpec& spec) { return spec.v0 / (2.0 * optical_length(spec)); }

// Bragg frequency of the central strip pitch, v0 / (2 p); the default search
// band is [0.9, 1.1] times this value.
inline std::pair<double, double> default_band(double v0 = kDefaultV0,
                                              double center_strip_period = kDefaultCenterStripPeriod) {
    const double f_bragg = v0 / (2.0 * center_strip_period);
    return {0.9 * f_bragg, 1.1 * f_bragg};
}

// Centre of the Bragg stopband of a strip array with pitch `strip_period`:
// v0 / (2 p n_avg), n_avg the length-weighted index of one cell.
inline double stopband_center(double strip_period, double metallization_ratio, double strip_index_value,
                              double v0 = kDefaultV0) {
    const double n_avg = metallization_ratio * strip_index_value + (1.0 - metallization_ratio);
    return v0 / (2.0 * strip_period * n_avg);
}

inline double stopband_center(const CrystalRecipe& recipe, double v0 = kDefaultV0) {
    return stopband_center(recipe.center_strip_period, recipe.metallization_ratio, recipe.strip_index(), v0);
}

// Highest-Q mode on the acoustic branch, i.e. below `split_hz` (normally
// the stopband centre of the central strip region).
inline const QnmMode* acoustic_fundamental(const ModeSearchResult& result, double split_hz) {
    const QnmMode* best = nullptr;
    for (const auto& m : result.modes)
        if (m.frequency_hz < split_hz && (!best || m.q_radiation > best->q_radiation)) best = &m;
    return best;
}

namespace detail {

struct RootPolish {
    Complex omega;
    double residual = std::numeric_limits<double>::infinity();
};

// Muller iteration on the characteristic function, seeded with three
// points around `seed`. Returns the point with the smallest relative
// residual seen.
inline RootPolish muller(const StructureSpec& spec, Complex seed, Complex step, const QnmOptions& options) {
    const CharacteristicValue ref = characteristic(spec, {seed}, options.tmm);
    const double ref_log = ref.log_scale;
    RootPolish best;
    auto eval = [&](Complex w) {
        const CharacteristicValue v = characteristic(spec, {w}, options.tmm);
        const double rel = v.relative_magnitude();
        if (rel < best.residual) best = {w, rel};
        return v.mantissa * std::exp(v.log_scale - ref_log);
    };

    Complex x0 = seed - step, x1 = seed + step, x2 = seed;
    Complex f0 = eval(x0), f1 = eval(x1), f2 = eval(x2);
    int stalls = 0;
    for (int it = 0; it < options.max_iterations; ++it) {
        if (f2 == Complex(0.0)) break;
        const Complex h1 = x1 - x0, h2 = x2 - x1;
        const Complex d1 = (f1 - f0) / h1, d2 = (f2 - f1) / h2;
        const Complex a = (d2 - d1) / (h2 + h1);
        const Complex b = a * h2 + d2;
        const Complex disc = std::sqrt(b * b - 4.0 * a * f2);
        const Complex den = std::abs(b + disc) > std::abs(b - disc) ? b + disc : b - disc;
        Complex dx = den == Complex(0.0) ? step : -2.0 * f2 / den;
        if (!std::isfinite(dx.real()) || !std::isfinite(dx.imag())) break;
        const double previous = best.residual;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        x2 += dx;
        f2 = eval(x2);
        if (std::abs(dx) <= 1e-15 * std::abs(x2)) break;
        if (best.residual < options.refine_tol) {
            // converged; a couple of extra steps may still shave roundoff
            if (best.residual >= previous && ++stalls >= 2) break;
        }
    }
    return best;
}

// A simple zero grows linearly in every direction around it. Probing at a
// small fraction of the linewidth rejects points where the function is
// merely small over a wide region, e.g. the exponential tail of a
// reflectionless structure deep in the lower half plane.
inline bool is_isolated_zero(const StructureSpec& spec, Complex w, const QnmOptions& options) {
    const double at = characteristic(spec, {w}, options.tmm).log_abs();
    const double delta = 1e-3 * std::abs(w.imag());
    for (Complex dir : {Complex(1.0, 0.0), Complex(-1.0, 0.0), Complex(0.0, 1.0), Complex(0.0, -1.0)}) {
        const double around = characteristic(spec, {w + delta * dir}, options.tmm).log_abs();
        if (!(around - at > std::log(100.0))) return false;
    }
    return true;
}

inline Complex integrate_exp(Complex z, double ua, double ub) {
    // Int_{ua}^{ub} exp(z u) du
    const double width = ub - ua;
    const Complex zw = z * width;
    if (std::abs(zw) < 1e-4) {
        const Complex series = width * (1.0 + zw / 2.0 + zw * zw / 6.0 + zw * zw * zw / 24.0);
        return std::exp(z * ua) * series;
    }
    return (std::exp(z * ub) - std::exp(z * ua)) / z;
}

inline std::size_t segment_at(const StructureSpec& spec, double x) {
    double left = 0.0;
    for (std::size_t k = 0; k < spec.segments.size(); ++k) {
        left += spec.segments[k].length;
        if (x <= left) return k;
    }
    return spec.segments.size() - 1;
}

} // namespace detail

// Field of node k's two-wave form evaluated at x (normally inside segment k).
inline Complex segment_field(const StructureSpec& spec, const NodeAmplitudes& nodes, ComplexFrequency w,
                             std::size_t k, double node_x, double x) {
    const Complex phase = Complex(0.0, spec.segments[k].index * (x - node_x)) * w.omega / spec.v0;
    return nodes.c[k] * std::exp(phase) + nodes.b[k] * std::exp(-phase);
}

inline Complex field_at(const StructureSpec& spec, const NodeAmplitudes& nodes, ComplexFrequency w, double x) {
    const std::size_t k = detail::segment_at(spec, x);
    const double node_x = spec.node_positions()[k];
    return segment_field(spec, nodes, w, k, node_x, x);
}

// Node chain for c_0 = 0, b_0 = 1 propagated through every half step.
// Throws NotARootError when the right boundary condition b_2N = 0 is not
// met to 10 * tolerance relative to the largest node amplitude.
inline NodeAmplitudes reconstruct_nodes(const StructureSpec& spec, ComplexFrequency w, double tolerance = 1e-10) {
    const std::size_t n = spec.segments.size();
    NodeAmplitudes nodes{std::vector<Complex>(n), std::vector<Complex>(n)};
    nodes.b[0] = 1.0;
    nodes.c[0] = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const auto [c, b] = step_matrix(spec, k, w).apply(nodes.c[k], nodes.b[k]);
        nodes.c[k + 1] = c;
        nodes.b[k + 1] = b;
    }
    const double terminal = std::abs(nodes.b.back()) / nodes.amplitude_scale();
    if (!(terminal < 10.0 * tolerance))
        throw NotARootError("reconstruct_nodes: omega is not a mode (terminal residual " +
                                std::to_string(terminal) + ")",
                            terminal);
    return nodes;
}

// QNM norm with A^2 (not |A|^2) integrated exactly per segment.
inline Complex mode_norm(const StructureSpec& spec, ComplexFrequency w, const NodeAmplitudes& nodes) {
    const std::vector<double> xs = spec.node_positions();
    const double v0 = spec.v0;
    const Complex i(0.0, 1.0);
    Complex integral = 0.0;
    double left = 0.0;
    for (std::size_t k = 0; k < spec.segments.size(); ++k) {
        const Segment& s = spec.segments[k];
        const double ua = left - xs[k];
        const double ub = left + s.length - xs[k];
        const Complex z = 2.0 * i * s.index * w.omega / v0;
        const Complex b = nodes.b[k], c = nodes.c[k];
        const Complex seg = c * c * detail::integrate_exp(z, ua, ub) + b * b * detail::integrate_exp(-z, ua, ub) +
                            2.0 * b * c * (ub - ua);
        integral += s.index * s.index * seg;
        left += s.length;
    }
    const Complex a0 = nodes.b.front() + nodes.c.front();
    const Complex ad = nodes.b.back() + nodes.c.back();
    return 2.0 * w.omega * integral / (v0 * v0) + i / v0 * (a0 * a0 + ad * ad);
}

// Divides the amplitudes by a square root of the norm so that the norm
// becomes 1. The sign is fixed by the field at the structure midpoint
// (argument in (-pi/2, pi/2]); if the midpoint is a node of an odd mode,
// the node with the largest |A| is used instead.
inline QnmMode normalize_mode(const StructureSpec& spec, QnmMode mode) {
    const Complex norm = mode_norm(spec, mode.omega, mode.nodes);
    const double amp = mode.nodes.amplitude_scale();
    const double d = spec.total_length();
    const double reference = amp * amp * (std::abs(mode.omega.omega) * d / (spec.v0 * spec.v0) + 1.0 / spec.v0);
    if (!(std::abs(norm) > 1e-30 * reference))
        throw DegenerateNormError("normalize_mode: vanishing QNM norm (exceptional point)");

    Complex scale = 1.0 / std::sqrt(norm);
    for (auto& v : mode.nodes.b) v *= scale;
    for (auto& v : mode.nodes.c) v *= scale;

    Complex anchor = field_at(spec, mode.nodes, mode.omega, 0.5 * d);
    double peak = 0.0;
    Complex peak_value = 0.0;
    for (std::size_t k = 0; k < mode.nodes.size(); ++k) {
        const Complex a = mode.nodes.b[k] + mode.nodes.c[k];
        if (std::abs(a) > peak) {
            peak = std::abs(a);
            peak_value = a;
        }
    }
    if (std::abs(anchor) < 1e-6 * peak) anchor = peak_value;
    const double arg = std::arg(anchor);
    if (!(arg > -kPi / 2 && arg <= kPi / 2)) {
        for (auto& v : mode.nodes.b) v = -v;
        for (auto& v : mode.nodes.c) v = -v;
    }
    mode.norm = norm;
    mode.normalized = true;
    return mode;
}

// Builds a mode record (nodes, norm, normalization) for a converged root.
inline QnmMode make_mode(const StructureSpec& spec, ComplexFrequency w, double residual, double tolerance = 1e-10) {
    QnmMode mode;
    mode.omega = w;
    mode.frequency_hz = w.frequency_hz();
    mode.q_radiation = w.quality_factor();
    mode.residual = residual;
    mode.nodes = reconstruct_nodes(spec, w, tolerance);
    mode.norm = mode_norm(spec, w, mode.nodes);
    return normalize_mode(spec, std::move(mode));
}

inline ModeSearchResult find_modes(const StructureSpec& spec, double f_lo, double f_hi,
                                   const QnmOptions& options = {}) {
    spec.validate();
    if (!(f_lo > 0.0) || !(f_hi > f_lo)) throw ValidationError("band: need 0 < f_lo < f_hi");
    if (!(options.grid_points_per_fsr >= 2.0)) throw ValidationError("grid_points_per_fsr: must be >= 2");
    if (!(options.refine_tol > 0.0)) throw ValidationError("refine_tol: must be positive");
    if (!(options.max_q_search > 0.0)) throw ValidationError("max_q_search: must be positive");

    ModeSearchResult result;
    const double df = free_spectral_range(spec) / options.grid_points_per_fsr;
    const std::size_t n_grid = static_cast<std::size_t>(std::ceil((f_hi - f_lo) / df)) + 1;
    const double spacing = (f_hi - f_lo) / static_cast<double>(n_grid - 1);
    result.grid_points = n_grid;
    const Complex line(1.0, -1.0 / (2.0 * options.max_q_search));

    std::vector<Complex> grid(n_grid);
    std::vector<double> log_mag(n_grid);
    parallel_for(n_grid, options.threads, [&](std::size_t j) {
        grid[j] = 2.0 * kPi * (f_lo + spacing * static_cast<double>(j)) * line;
        log_mag[j] = characteristic(spec, {grid[j]}, options.tmm).log_abs();
    });

    std::vector<Complex> seeds;
    for (std::size_t j = 0; j < n_grid; ++j) {
        const bool lower_left = j == 0 || log_mag[j] < log_mag[j - 1];
        const bool lower_right = j + 1 == n_grid || log_mag[j] <= log_mag[j + 1];
        if (lower_left && lower_right && std::isfinite(log_mag[j])) seeds.push_back(grid[j]);
    }
    result.seeds = seeds.size();

    const Complex step = 2.0 * kPi * 0.25 * spacing;
    std::vector<detail::RootPolish> polished(seeds.size());
    parallel_for(seeds.size(), options.threads,
                 [&](std::size_t s) { polished[s] = detail::muller(spec, seeds[s], step, options); });

    std::vector<detail::RootPolish> roots;
    for (const auto& p : polished) {
        if (!(p.residual < options.refine_tol) || !(p.omega.imag() < 0.0)) {
            ++result.dropped_nonconvergent;
            continue;
        }
        const double f = p.omega.real() / (2.0 * kPi);
        if (f < f_lo || f > f_hi) {
            ++result.dropped_out_of_band;
            continue;
        }
        roots.push_back(p);
    }
    std::vector<char> isolated(roots.size(), 0);
    parallel_for(roots.size(), options.threads,
                 [&](std::size_t k) { isolated[k] = detail::is_isolated_zero(spec, roots[k].omega, options); });
    std::vector<detail::RootPolish> kept;
    for (std::size_t k = 0; k < roots.size(); ++k) {
        if (isolated[k]) kept.push_back(roots[k]);
        else ++result.dropped_nonconvergent;
    }
    roots = std::move(kept);
    std::sort(roots.begin(), roots.end(),
              [](const auto& a, const auto& b) { return a.omega.real() < b.omega.real(); });

    std::vector<detail::RootPolish> unique;
    for (const auto& r : roots) {
        auto same = std::find_if(unique.begin(), unique.end(), [&](const auto& u) {
            return std::abs(u.omega - r.omega) <= 10.0 * options.refine_tol * std::abs(r.omega);
        });
        if (same == unique.end()) {
            unique.push_back(r);
        } else {
            ++result.duplicates;
            if (r.residual < same->residual) *same = r;
        }
    }

    std::vector<std::optional<QnmMode>> built(unique.size());
    std::vector<char> degenerate(unique.size(), 0);
    parallel_for(unique.size(), options.threads, [&](std::size_t k) {
        try {
            built[k] = make_mode(spec, {unique[k].omega}, unique[k].residual, options.refine_tol);
        } catch (const DegenerateNormError&) {
            QnmMode mode;
            mode.omega = {unique[k].omega};
            mode.frequency_hz = mode.omega.frequency_hz();
            mode.q_radiation = mode.omega.quality_factor();
            mode.residual = unique[k].residual;
            mode.nodes = reconstruct_nodes(spec, mode.omega, options.refine_tol);
            mode.norm = mode_norm(spec, mode.omega, mode.nodes);
            built[k] = std::move(mode);
            degenerate[k] = 1;
        } catch (const NotARootError&) {
            // residual passed but the node chain did not close; leave empty
        }
    });
    for (std::size_t k = 0; k < built.size(); ++k) {
        if (degenerate[k]) ++result.degenerate_norms;
        if (!built[k]) {
            ++result.dropped_nonconvergent;
            continue;
        }
        built[k]->longitudinal_order = static_cast<int>(result.modes.size());
        result.modes.push_back(std::move(*built[k]));
    }
    return result;
}

struct FieldSample {
    double x;
    Complex a;
};

// Field on a uniform sub-grid of every segment (left edge inclusive), plus
// the right end point x = d.
inline std::vector<FieldSample> sample_field(const StructureSpec& spec, const QnmMode& mode,
                                             std::size_t samples_per_segment) {
    if (samples_per_segment == 0) throw ValidationError("samples_per_segment: must be at least 1");
    const std::vector<double> xs = spec.node_positions();
    std::vector<FieldSample> out;
    out.reserve(spec.segments.size() * samples_per_segment + 1);
    double left = 0.0;
    for (std::size_t k = 0; k < spec.segments.size(); ++k) {
        const double len = spec.segments[k].length;
        for (std::size_t j = 0; j < samples_per_segment; ++j) {
            const double x = left + len * static_cast<double>(j) / static_cast<double>(samples_per_segment);
            out.push_back({x, segment_field(spec, mode.nodes, mode.omega, k, xs[k], x)});
        }
        left += len;
    }
    const std::size_t last = spec.segments.size() - 1;
    out.push_back({left, segment_field(spec, mode.nodes, mode.omega, last, xs[last], left)});
    return out;
}

// Zero count of the characteristic function inside the rectangle
// Re(w)/2pi in [f_lo, f_hi], Q in [q_min, q_max] (argument principle,
// contour refined until every phase step is below pi/4). Cross-check
// for find_modes; returns -1 if the contour cannot be resolved.
inline int count_zeros(const StructureSpec& spec, double f_lo, double f_hi, double q_min, double q_max = 1e12,
                       const TmmOptions& tmm = {}) {
    const double w_lo = 2.0 * kPi * f_lo, w_hi = 2.0 * kPi * f_hi;
    // Corners follow the Q lines Im = -Re / (2Q) so the region is a
    // trapezoid in the lower half plane.
    // counter-clockwise
    const Complex corners[4] = {Complex(w_lo, -w_lo / (2 * q_min)), Complex(w_hi, -w_hi / (2 * q_min)),
                                Complex(w_hi, -w_hi / (2 * q_max)), Complex(w_lo, -w_lo / (2 * q_max))};
    auto phase = [&](Complex w) {
        const CharacteristicValue v = characteristic(spec, {w}, tmm);
        return std::arg(v.mantissa);
    };
    auto wrap = [](double d) {
        while (d > kPi) d -= 2 * kPi;
        while (d <= -kPi) d += 2 * kPi;
        return d;
    };
    double total = 0.0;
    for (int edge = 0; edge < 4; ++edge) {
        const Complex a = corners[edge], b = corners[(edge + 1) % 4];
        // adaptive bisection on each edge
        std::vector<std::pair<double, double>> stack;
        for (int piece = 63; piece >= 0; --piece) stack.push_back({piece / 64.0, (piece + 1) / 64.0});
        std::vector<std::pair<double, double>> accepted;
        int budget = 2'000'000;
        while (!stack.empty()) {
            if (--budget < 0) return -1;
            const auto [t0, t1] = stack.back();
            stack.pop_back();
            const double p0 = phase(a + (b - a) * t0), p1 = phase(a + (b - a) * t1);
            if (std::abs(wrap(p1 - p0)) < kPi / 4 || t1 - t0 < 1e-13) {
                accepted.push_back({t0, wrap(p1 - p0)});
            } else {
                const double tm = 0.5 * (t0 + t1);
                stack.push_back({tm, t1});
                stack.push_back({t0, tm});
            }
        }
        for (const auto& [t, dphi] : accepted) total += dphi;
    }
    return static_cast<int>(std::lround(total / (2.0 * kPi)));
}

} // namespace qnmsaw

#endif // QNMSAW_QNM_HPP
