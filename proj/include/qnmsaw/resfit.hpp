#ifndef QNMSAW_RESFIT_HPP
#define QNMSAW_RESFIT_HPP

// Reflection-type resonance model and least-squares fitting of measured
// S11 traces.
//
//   S11(f) = A exp(i (theta - 2 pi f tau)) *
//            [1 - (2 Qi/Qe) / ((Qe + Qi)/Qe + 2i Qi (f - f0)/f0) * exp(i phi0)]
//
// A, theta and tau describe the uncalibrated measurement chain; with
// (A, theta, tau) = (1, 0, 0) the bracket is returned unchanged.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "parallel.hpp"

namespace qnmsaw {

using Complex = std::complex<double>;

struct ResonanceModel {
    double f0 = 0.0;            // Hz
    double q_internal = 0.0;
    double q_external = 0.0;
    double phi0 = 0.0;          // rad, asymmetry
    double amplitude = 1.0;     // baseline scale
    double delay = 0.0;         // s, electrical delay
    double phase_offset = 0.0;  // rad

    void validate() const {
        if (!(f0 > 0.0)) throw ValidationError("f0: must be positive");
        if (!(q_internal > 0.0)) throw ValidationError("q_internal: must be positive");
        if (!(q_external > 0.0)) throw ValidationError("q_external: must be positive");
        if (!(amplitude > 0.0)) throw ValidationError("amplitude: must be positive");
    }

    // Qi Qe / (Qi + Qe)
    [[nodiscard]] double q_loaded() const { return q_internal * q_external / (q_internal + q_external); }
};

inline Complex model_s11(const ResonanceModel& m, double f) {
    const Complex i(0.0, 1.0);
    const double qi = m.q_internal, qe = m.q_external;
    const Complex lorentz = (2.0 * qi / qe) / ((qe + qi) / qe + i * (2.0 * qi * (f - m.f0) / m.f0));
    const Complex bare = 1.0 - lorentz * std::exp(i * m.phi0);
    if (m.amplitude == 1.0 && m.delay == 0.0 && m.phase_offset == 0.0) return bare;
    return m.amplitude * std::exp(i * (m.phase_offset - 2.0 * std::numbers::pi * f * m.delay)) * bare;
}

struct TraceMetadata {
    double power_dbm = std::numeric_limits<double>::quiet_NaN();
    double temperature_k = std::numeric_limits<double>::quiet_NaN();
    std::string label;
};

struct S11Trace {
    std::vector<double> frequencies;
    std::vector<Complex> s11;
    TraceMetadata metadata;

    void validate() const {
        if (frequencies.size() != s11.size()) throw ValidationError("trace: frequency and S11 counts differ");
        if (frequencies.size() < 8) throw ValidationError("trace: need at least 8 points");
        for (std::size_t k = 0; k < frequencies.size(); ++k) {
            if (!std::isfinite(frequencies[k]) || !std::isfinite(s11[k].real()) || !std::isfinite(s11[k].imag()))
                throw ValidationError("trace: non-finite value at row " + std::to_string(k));
            if (k > 0 && !(frequencies[k] > frequencies[k - 1]))
                throw ValidationError("trace: frequencies must be strictly increasing");
        }
        if (!(frequencies.front() > 0.0)) throw ValidationError("trace: frequencies must be positive");
    }
};

inline S11Trace synthesize_trace(const ResonanceModel& m, double f_lo, double f_hi, std::size_t points) {
    S11Trace t;
    t.frequencies.resize(points);
    t.s11.resize(points);
    for (std::size_t k = 0; k < points; ++k) {
        const double f = f_lo + (f_hi - f_lo) * static_cast<double>(k) / static_cast<double>(points - 1);
        t.frequencies[k] = f;
        t.s11[k] = model_s11(m, f);
    }
    return t;
}

struct FitOptions {
    int max_iterations = 200;
    // trace spans fewer than three loaded linewidths: fit anyway
    bool allow_partial = false;
};

// One-sigma uncertainties from the local quadratic model of the cost.
struct ModelUncertainty {
    double f0 = 0.0, q_internal = 0.0, q_external = 0.0, phi0 = 0.0, amplitude = 0.0, delay = 0.0,
           phase_offset = 0.0;
};

struct FitReport {
    double residual_norm = 0.0;  // sqrt(sum |S_data - S_model|^2)
    double noise_estimate = 0.0;
    ModelUncertainty uncertainty;
    int iterations = 0;
    bool converged = false;
    ResonanceModel initial;
};

struct FitResult {
    ResonanceModel model;
    FitReport report;
};

class NoResonanceError : public SolverError {
public:
    explicit NoResonanceError(const std::string& what) : SolverError(what) {}
};

class FitNonConvergenceError : public SolverError {
public:
    FitNonConvergenceError(const std::string& what, FitResult best) : SolverError(what), best_(std::move(best)) {}
    [[nodiscard]] const FitResult& best_so_far() const { return best_; }

private:
    FitResult best_;
};

namespace detail {

inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

// White-noise level per complex point from second differences:
// E|d2|^2 = 6 sigma^2 and the median of an exponential variable is ln 2
// times its mean.
inline double noise_estimate(const std::vector<Complex>& s) {
    std::vector<double> d2;
    for (std::size_t k = 1; k + 1 < s.size(); ++k) d2.push_back(std::norm(s[k + 1] - 2.0 * s[k] + s[k - 1]));
    return std::sqrt(median(d2) / (6.0 * std::numbers::ln2));
}

// Internal fit coordinates, scaled so every component is O(1):
//   0: (f0 - fc) / linewidth   1: ln Qi   2: ln Qe   3: phi0
//   4: ln A                    5: 2 pi tau span       6: phase at fc
struct FitFrame {
    double fc;
    double linewidth;
    double span;

    [[nodiscard]] Eigen::Matrix<double, 7, 1> encode(const ResonanceModel& m) const {
        Eigen::Matrix<double, 7, 1> p;
        p << (m.f0 - fc) / linewidth, std::log(m.q_internal), std::log(m.q_external), m.phi0, std::log(m.amplitude),
            2.0 * std::numbers::pi * m.delay * span, m.phase_offset - 2.0 * std::numbers::pi * fc * m.delay;
        return p;
    }

    [[nodiscard]] ResonanceModel decode(const Eigen::Matrix<double, 7, 1>& p) const {
        ResonanceModel m;
        m.f0 = fc + p[0] * linewidth;
        m.q_internal = std::exp(p[1]);
        m.q_external = std::exp(p[2]);
        m.phi0 = p[3];
        m.amplitude = std::exp(p[4]);
        m.delay = p[5] / (2.0 * std::numbers::pi * span);
        m.phase_offset = p[6] + 2.0 * std::numbers::pi * fc * m.delay;
        return m;
    }

    // S11 and its derivatives with respect to the 7 internal coordinates.
    void evaluate(const Eigen::Matrix<double, 7, 1>& p, double f, Complex& s, Complex (&ds)[7]) const {
        const Complex i(0.0, 1.0);
        const double f0 = fc + p[0] * linewidth;
        const double qi = std::exp(p[1]), qe = std::exp(p[2]);
        const double delta = (f - f0) / f0;
        const Complex den = qe + qi + 2.0 * i * qi * qe * delta;
        const Complex lorentz = 2.0 * qi / den;
        const Complex rot = std::exp(i * p[3]);
        const double theta = p[6] - p[5] * (f - fc) / span;
        const Complex base = std::exp(p[4]) * std::exp(i * theta);
        s = base * (1.0 - lorentz * rot);

        const Complex den2 = den * den;
        const Complex dl_dqi = 2.0 / den - 2.0 * qi * (1.0 + 2.0 * i * qe * delta) / den2;
        const Complex dl_dqe = -2.0 * qi * (1.0 + 2.0 * i * qi * delta) / den2;
        const Complex dl_df0 = -2.0 * qi * (2.0 * i * qi * qe) * (-f / (f0 * f0)) / den2;
        const Complex outer = -base * rot;
        ds[0] = outer * dl_df0 * linewidth;
        ds[1] = outer * dl_dqi * qi;
        ds[2] = outer * dl_dqe * qe;
        ds[3] = -base * lorentz * rot * i;
        ds[4] = s;
        ds[5] = i * s * (-(f - fc) / span);
        ds[6] = i * s;
    }
};

struct InitialGuess {
    ResonanceModel model;
    double noise = 0.0;
    double linewidth = 0.0;
};

// Algebraic (Kasa) circle fit; returns center and radius.
inline std::pair<Complex, double> fit_circle(const std::vector<Complex>& z) {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(z.size()), 3);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(z.size()));
    for (std::size_t k = 0; k < z.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        a(r, 0) = z[k].real();
        a(r, 1) = z[k].imag();
        a(r, 2) = 1.0;
        rhs(r) = std::norm(z[k]);
    }
    const Eigen::Vector3d sol = a.colPivHouseholderQr().solve(rhs);
    const Complex center(sol[0] / 2.0, sol[1] / 2.0);
    const double radius = std::sqrt(std::max(0.0, sol[2] + std::norm(center)));
    return {center, radius};
}

inline double edge_phase_slope(const std::vector<double>& f, const std::vector<double>& phase, std::size_t lo,
                               std::size_t hi) {
    double sf = 0, sp = 0, sff = 0, sfp = 0;
    const double n = static_cast<double>(hi - lo);
    for (std::size_t k = lo; k < hi; ++k) {
        sf += f[k];
        sp += phase[k];
        sff += f[k] * f[k];
        sfp += f[k] * phase[k];
    }
    const double den = n * sff - sf * sf;
    return den > 0.0 ? (n * sfp - sf * sp) / den : 0.0;
}

inline InitialGuess initial_guess(const S11Trace& trace, const FitOptions& options) {
    const auto& f = trace.frequencies;
    const auto& s = trace.s11;
    const std::size_t n = f.size();
    InitialGuess g;
    g.noise = noise_estimate(s);

    const std::size_t edge = std::max<std::size_t>(2, n / 10);
    std::vector<double> outer;
    for (std::size_t k = 0; k < edge; ++k) {
        outer.push_back(std::abs(s[k]));
        outer.push_back(std::abs(s[n - 1 - k]));
    }
    const double baseline = median(outer);
    std::size_t kmin = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (std::abs(s[k]) < std::abs(s[kmin])) kmin = k;
    const double dip = std::abs(s[kmin]);
    const double depth = baseline - dip;
    if (!(depth > 5.0 * g.noise) || depth <= 1e-12 * baseline)
        throw NoResonanceError("fit_trace: no resonance dip above the noise level");
    const double f0 = f[kmin];

    // Loaded linewidth from the half-depth crossings of |S|^2.
    const double level = 0.5 * (dip * dip + baseline * baseline);
    auto crossing = [&](std::ptrdiff_t dir) -> std::optional<double> {
        for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(kmin); k + dir >= 0 && k + dir < static_cast<std::ptrdiff_t>(n);
             k += dir) {
            const double a = std::norm(s[static_cast<std::size_t>(k)]);
            const double b = std::norm(s[static_cast<std::size_t>(k + dir)]);
            if (b >= level) {
                const double t = b > a ? (level - a) / (b - a) : 0.0;
                return f[static_cast<std::size_t>(k)] + t * (f[static_cast<std::size_t>(k + dir)] - f[static_cast<std::size_t>(k)]);
            }
        }
        return std::nullopt;
    };
    const auto right = crossing(+1);
    const auto left = crossing(-1);
    double fwhm;
    if (left && right) fwhm = *right - *left;
    else if (right) fwhm = 2.0 * (*right - f0);
    else if (left) fwhm = 2.0 * (f0 - *left);
    else fwhm = 0.5 * (f.back() - f.front());
    fwhm = std::max(fwhm, f[1] - f[0]);
    const double span = f.back() - f.front();
    if (span < 3.0 * fwhm && !options.allow_partial)
        throw ValidationError("trace: covers fewer than 3 linewidths (set allow_partial to fit anyway)");
    g.linewidth = fwhm;
    const double q_loaded = f0 / fwhm;

    // Electrical delay from the unwrapped phase slope in the outer parts.
    std::vector<double> phase(n);
    phase[0] = std::arg(s[0]);
    for (std::size_t k = 1; k < n; ++k) phase[k] = phase[k - 1] + wrap_angle(std::arg(s[k]) - std::arg(s[k - 1]));
    const double slope =
        0.5 * (edge_phase_slope(f, phase, 0, edge) + edge_phase_slope(f, phase, n - edge, n));
    const double delay = -slope / (2.0 * std::numbers::pi);

    // Circle geometry on the delay-corrected trace around the dip.
    std::vector<Complex> corrected(n);
    for (std::size_t k = 0; k < n; ++k)
        corrected[k] = s[k] * std::exp(Complex(0.0, 2.0 * std::numbers::pi * (f[k] - f0) * delay));
    std::vector<Complex> near;
    for (std::size_t k = 0; k < n; ++k)
        if (std::abs(f[k] - f0) <= 2.0 * fwhm) near.push_back(corrected[k]);
    if (near.size() < 5) near = corrected;
    const auto [center, radius] = fit_circle(near);
    const Complex on_resonance = corrected[kmin];
    Complex off_resonance = 2.0 * center - on_resonance;
    if (std::abs(off_resonance) == 0.0) off_resonance = baseline;
    const double amplitude = std::abs(off_resonance);
    const double k_ratio = std::clamp(2.0 * radius / amplitude, 1e-6, 1.999);  // 2 Q_L / Q_e

    ResonanceModel& m = g.model;
    m.f0 = f0;
    m.q_external = 2.0 * q_loaded / k_ratio;
    m.q_internal = 1.0 / std::max(1.0 / q_loaded - 1.0 / m.q_external, 1e-3 / q_loaded);
    m.phi0 = std::arg((off_resonance - on_resonance) / off_resonance);
    m.amplitude = amplitude;
    m.delay = delay;
    m.phase_offset = wrap_angle(std::arg(off_resonance) + 2.0 * std::numbers::pi * f0 * delay);
    return g;
}

} // namespace detail

// Unweighted complex least squares over all seven model parameters
// (Levenberg-Marquardt with Marquardt diagonal scaling).
inline FitResult fit_trace(const S11Trace& trace, const std::optional<ResonanceModel>& init = std::nullopt,
                           const FitOptions& options = {}) {
    trace.validate();
    using Vec = Eigen::Matrix<double, 7, 1>;
    using Mat = Eigen::Matrix<double, 7, 7>;

    ResonanceModel start;
    double noise = detail::noise_estimate(trace.s11);
    if (init) {
        init->validate();
        start = *init;
    } else {
        const detail::InitialGuess g = detail::initial_guess(trace, options);
        start = g.model;
        noise = g.noise;
    }
    const double span = trace.frequencies.back() - trace.frequencies.front();
    const detail::FitFrame frame{start.f0, start.f0 / start.q_loaded(), span};

    const std::size_t n = trace.frequencies.size();
    Eigen::MatrixXd jac(2 * n, 7);
    Eigen::VectorXd res(2 * n);
    auto evaluate = [&](const Vec& p, bool with_jacobian) {
        Complex s;
        Complex ds[7];
        for (std::size_t k = 0; k < n; ++k) {
            frame.evaluate(p, trace.frequencies[k], s, ds);
            const Complex r = s - trace.s11[k];
            res(static_cast<Eigen::Index>(2 * k)) = r.real();
            res(static_cast<Eigen::Index>(2 * k + 1)) = r.imag();
            if (with_jacobian)
                for (int j = 0; j < 7; ++j) {
                    jac(static_cast<Eigen::Index>(2 * k), j) = ds[j].real();
                    jac(static_cast<Eigen::Index>(2 * k + 1), j) = ds[j].imag();
                }
        }
        return res.squaredNorm();
    };

    Vec p = frame.encode(start);
    double cost = evaluate(p, true);
    double lambda = 1e-3;
    bool converged = false;
    int iteration = 0;
    for (; iteration < options.max_iterations && !converged; ++iteration) {
        const Mat jtj = jac.transpose() * jac;
        const Vec grad = jac.transpose() * res;
        bool accepted = false;
        while (!accepted) {
            Mat a = jtj;
            for (int j = 0; j < 7; ++j) a(j, j) += lambda * std::max(jtj(j, j), 1e-30);
            const Vec step = a.ldlt().solve(-grad);
            const Vec trial = p + step;
            const double trial_cost = evaluate(trial, false);
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                const double drop = cost - trial_cost;
                p = trial;
                lambda = std::max(lambda / 3.0, 1e-12);
                bool small_step = true;
                for (int j = 0; j < 7; ++j)
                    if (std::abs(step[j]) > 1e-11 * std::max(1.0, std::abs(p[j]))) small_step = false;
                converged = small_step || drop <= 1e-15 * cost || trial_cost == 0.0;
                cost = evaluate(p, true);
                accepted = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) {
                    // no downhill step left: at the minimum to working precision
                    evaluate(p, true);
                    converged = true;
                    break;
                }
            }
        }
    }

    FitResult out;
    out.model = frame.decode(p);
    out.model.phi0 = detail::wrap_angle(out.model.phi0);
    out.model.phase_offset = detail::wrap_angle(out.model.phase_offset);
    out.report.residual_norm = std::sqrt(cost);
    out.report.noise_estimate = noise;
    out.report.iterations = iteration;
    out.report.converged = converged;
    out.report.initial = start;

    const double dof = std::max<double>(1.0, static_cast<double>(2 * n) - 7.0);
    const Mat jtj = jac.transpose() * jac;
    const Mat cov = jtj.completeOrthogonalDecomposition().pseudoInverse() * (cost / dof);
    const ResonanceModel& m = out.model;
    const double two_pi_span = 2.0 * std::numbers::pi * span;
    ModelUncertainty& u = out.report.uncertainty;
    u.f0 = std::sqrt(cov(0, 0)) * frame.linewidth;
    u.q_internal = std::sqrt(cov(1, 1)) * m.q_internal;
    u.q_external = std::sqrt(cov(2, 2)) * m.q_external;
    u.phi0 = std::sqrt(cov(3, 3));
    u.amplitude = std::sqrt(cov(4, 4)) * m.amplitude;
    u.delay = std::sqrt(cov(5, 5)) / two_pi_span;
    const double g = frame.fc / span;  // d(phase_offset)/d(p5)
    u.phase_offset = std::sqrt(std::max(0.0, cov(6, 6) + g * g * cov(5, 5) + 2.0 * g * cov(5, 6)));

    if (!converged)
        throw FitNonConvergenceError("fit_trace: no convergence after " + std::to_string(iteration) + " iterations",
                                     out);
    if (!(m.q_internal > 0.0 && m.q_external > 0.0 && m.amplitude > 0.0 && m.f0 > 0.0))
        throw FitNonConvergenceError("fit_trace: fit left the valid parameter region", out);
    return out;
}

struct BatchRow {
    TraceMetadata metadata;
    std::optional<FitResult> fit;
    std::string error;
};

// Fits every trace; failures are recorded per row. Rows are ordered by
// (temperature, power, label), unknown values last, ties by input order.
inline std::vector<BatchRow> batch_fit(const std::vector<S11Trace>& traces, const FitOptions& options = {},
                                       unsigned threads = 1) {
    if (traces.empty()) throw ValidationError("batch_fit: no traces");
    std::vector<BatchRow> rows(traces.size());
    parallel_for(traces.size(), threads, [&](std::size_t k) {
        rows[k].metadata = traces[k].metadata;
        try {
            rows[k].fit = fit_trace(traces[k], std::nullopt, options);
        } catch (const std::exception& e) {
            rows[k].error = e.what();
        }
    });
    auto key_less = [](double a, double b) {
        if (std::isnan(a) || std::isnan(b)) return !std::isnan(a) && std::isnan(b);
        return a < b;
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const BatchRow& a, const BatchRow& b) {
        if (key_less(a.metadata.temperature_k, b.metadata.temperature_k)) return true;
        if (key_less(b.metadata.temperature_k, a.metadata.temperature_k)) return false;
        if (key_less(a.metadata.power_dbm, b.metadata.power_dbm)) return true;
        if (key_less(b.metadata.power_dbm, a.metadata.power_dbm)) return false;
        return a.metadata.label < b.metadata.label;
    });
    return rows;
}

} // namespace qnmsaw

#endif // QNMSAW_RESFIT_HPP
