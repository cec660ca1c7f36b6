#ifndef QNMSAW_TMM_HPP
#define QNMSAW_TMM_HPP

// Half-cell transfer matrices of the reflecting-array model, their chained
// product across a structure, and the characteristic function whose zeros
// in the lower half plane are the quasinormal-mode frequencies.
//
// Conventions: time dependence exp(-i w t); a rightward wave c carries
// exp(+i n w x / v0), a leftward wave b carries exp(-i n w x / v0). Every
// matrix here maps the column (c, b) at one node to (c, b) at the next
// node to the right. Outgoing boundary conditions c_0 = 0, b_2N = 0 then
// reduce to a vanishing (2,2) entry of the full product.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>

#include "structure.hpp"

namespace qnmsaw {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

struct ComplexFrequency {
    Complex omega;  // rad/s

    [[nodiscard]] double frequency_hz() const { return omega.real() / (2.0 * kPi); }
    // Re(w) / (-2 Im(w)); positive for decaying modes.
    [[nodiscard]] double quality_factor() const { return omega.real() / (-2.0 * omega.imag()); }

    static ComplexFrequency from_hz(double f, double q = std::numeric_limits<double>::infinity()) {
        const double w = 2.0 * kPi * f;
        return {Complex(w, std::isinf(q) ? 0.0 : -w / (2.0 * q))};
    }
};

struct TransferMatrix {
    Complex m11{1.0}, m12{0.0}, m21{0.0}, m22{1.0};

    static TransferMatrix identity() { return {}; }

    [[nodiscard]] Complex det() const { return m11 * m22 - m12 * m21; }

    [[nodiscard]] double max_abs() const {
        return std::max({std::abs(m11), std::abs(m12), std::abs(m21), std::abs(m22)});
    }

    // Applies the matrix to the column (c, b).
    [[nodiscard]] std::pair<Complex, Complex> apply(Complex c, Complex b) const {
        return {m11 * c + m12 * b, m21 * c + m22 * b};
    }

    friend TransferMatrix operator*(const TransferMatrix& a, const TransferMatrix& b) {
        return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
                a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22};
    }

    TransferMatrix& operator*=(double s) {
        m11 *= s;
        m12 *= s;
        m21 *= s;
        m22 *= s;
        return *this;
    }
};

// Interface reflection and transmission between two indices. Diagnostic
// only; the matrices below are built from the indices directly.
struct InterfaceCoefficients {
    double r;
    double t;
};

inline InterfaceCoefficients interface_coefficients(double n_low, double n_high) {
    const double sum = n_high + n_low;
    return {(n_high - n_low) / sum, std::sqrt(4.0 * n_high * n_low) / sum};
}

// Phase factor over half a segment: exp(i (length / 2) n w / v0).
inline Complex half_phase(const Segment& s, ComplexFrequency w, double v0) {
    return std::exp(Complex(0.0, 0.5 * s.length * s.index) * w.omega / v0);
}

// Node at the middle of `from` to the node at the middle of `to`, where
// `to` is the right neighbour of `from`. The determinant equals
// n_from / n_to.
inline TransferMatrix half_step_matrix(ComplexFrequency w, const Segment& from, const Segment& to, double v0) {
    const Complex e_from = half_phase(from, w, v0);
    const Complex e_to = half_phase(to, w, v0);
    const double n_from = from.index;
    const double n_to = to.index;
    const double sum = (n_to + n_from) / (2.0 * n_to);
    const double diff = (n_to - n_from) / (2.0 * n_to);
    return {e_to * e_from * sum, e_to * diff / e_from, e_from * diff / e_to, sum / (e_to * e_from)};
}

struct TmmOptions {
    // Once any running-product entry exceeds this magnitude the product is
    // renormalized and the factor moved into a log scale.
    double rescale_threshold = 1e100;
};

// True product = matrix * exp(log_scale).
struct ScaledTransferMatrix {
    TransferMatrix matrix;
    double log_scale = 0.0;
};

namespace detail {

// The end segments are halves of virtual full gaps centred on x = 0 and
// x = d, so their node sits on the outer edge and the half step uses the
// whole segment length.
inline Segment step_segment(const StructureSpec& spec, std::size_t i) {
    Segment s = spec.segments[i];
    if (i == 0 || i + 1 == spec.segments.size()) s.length *= 2.0;
    return s;
}

} // namespace detail

inline TransferMatrix step_matrix(const StructureSpec& spec, std::size_t i, ComplexFrequency w) {
    return half_step_matrix(w, detail::step_segment(spec, i), detail::step_segment(spec, i + 1), spec.v0);
}

inline ScaledTransferMatrix total_matrix(const StructureSpec& spec, ComplexFrequency w,
                                         const TmmOptions& options = {}) {
    ScaledTransferMatrix out;
    for (std::size_t i = 0; i + 1 < spec.segments.size(); ++i) {
        out.matrix = step_matrix(spec, i, w) * out.matrix;
        const double scale = out.matrix.max_abs();
        if (scale > options.rescale_threshold) {
            out.matrix *= 1.0 / scale;
            out.log_scale += std::log(scale);
        }
    }
    return out;
}

// Characteristic value (prod M)_{2,2}. `mantissa * exp(log_scale)` is the
// true value; `matrix_scale` is the largest entry magnitude of the
// mantissa matrix and serves as the reference for relative residuals.
struct CharacteristicValue {
    Complex mantissa;
    double log_scale = 0.0;
    double matrix_scale = 1.0;

    [[nodiscard]] Complex value() const { return log_scale == 0.0 ? mantissa : mantissa * std::exp(log_scale); }
    [[nodiscard]] double relative_magnitude() const { return std::abs(mantissa) / matrix_scale; }
    [[nodiscard]] double log_abs() const { return std::log(std::abs(mantissa)) + log_scale; }
};

inline CharacteristicValue characteristic(const StructureSpec& spec, ComplexFrequency w,
                                          const TmmOptions& options = {}) {
    const ScaledTransferMatrix product = total_matrix(spec, w, options);
    return {product.matrix.m22, product.log_scale, product.matrix.max_abs()};
}

} // namespace qnmsaw

#endif // QNMSAW_TMM_HPP
