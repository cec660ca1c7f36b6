#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include <qnmsaw/resfit.hpp>

using namespace qnmsaw;

namespace {

ResonanceModel reference_model() {
    ResonanceModel m;
    m.f0 = 3.27e9;
    m.q_internal = 61000;
    m.q_external = 30000;
    m.phi0 = 0.12;
    m.amplitude = 0.037;
    m.delay = 48e-9;
    m.phase_offset = 1.1;
    return m;
}

S11Trace trace_over_linewidths(const ResonanceModel& m, double linewidths, std::size_t points) {
    const double lw = m.f0 / m.q_loaded();
    return synthesize_trace(m, m.f0 - 0.5 * linewidths * lw, m.f0 + 0.5 * linewidths * lw, points);
}

// 40 dB: noise power 1e-4 of the off-resonance signal power, split
// equally between the real and imaginary parts.
S11Trace with_noise(S11Trace t, double baseline, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.01 * baseline / std::sqrt(2.0));
    for (auto& s : t.s11) s += Complex(n(rng), n(rng));
    return t;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

void expect_model_near(const ResonanceModel& got, const ResonanceModel& want, double tol) {
    EXPECT_LT(rel(got.f0, want.f0), tol);
    EXPECT_LT(rel(got.q_internal, want.q_internal), tol);
    EXPECT_LT(rel(got.q_external, want.q_external), tol);
    EXPECT_LT(std::abs(got.phi0 - want.phi0), tol * std::max(1.0, std::abs(want.phi0)));
    EXPECT_LT(rel(got.amplitude, want.amplitude), tol);
    if (want.delay != 0.0) {
        EXPECT_LT(rel(got.delay, want.delay), tol);
    }
    EXPECT_LT(std::abs(detail::wrap_angle(got.phase_offset - want.phase_offset)),
              tol * std::max(1.0, std::abs(want.phase_offset)));
}

} // namespace

TEST(ModelS11, ReducesToBareFormula) {
    ResonanceModel m;
    m.f0 = 3.27e9;
    m.q_internal = 61000;
    m.q_external = 30000;
    m.phi0 = 0.0;
    for (double df : {-1e5, 0.0, 2.3e4, 7e6}) {
        const double f = m.f0 + df;
        const Complex i(0.0, 1.0);
        const Complex bare = 1.0 - (2.0 * 61000.0 / 30000.0) /
                                       ((30000.0 + 61000.0) / 30000.0 + i * 2.0 * 61000.0 * (f - m.f0) / m.f0);
        EXPECT_EQ(model_s11(m, f), bare);
    }
    EXPECT_NEAR(model_s11(m, m.f0).real(), 1.0 - 2.0 * 61000.0 / 91000.0, 1e-15);
    EXPECT_NEAR(model_s11(m, m.f0).real(), -0.340659340659, 1e-12);
    EXPECT_EQ(model_s11(m, m.f0).imag(), 0.0);
}

TEST(ModelS11, CriticalCouplingAndBaseline) {
    ResonanceModel m;
    m.f0 = 1e9;
    m.q_internal = m.q_external = 5000;
    EXPECT_NEAR(std::abs(model_s11(m, m.f0)), 0.0, 1e-15);
    m.amplitude = 0.5;
    m.delay = 30e-9;
    m.phase_offset = -0.4;
    const double far = 1e12;
    const Complex expected = 0.5 * std::exp(Complex(0.0, -0.4 - 2.0 * std::numbers::pi * far * 30e-9));
    EXPECT_LT(std::abs(model_s11(m, far) - expected), 1e-6);
}

TEST(ModelS11, DepthIdentity) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> lq(std::log(1e2), std::log(1e7));
    for (int trial = 0; trial < 300; ++trial) {
        ResonanceModel m;
        m.f0 = 3e9;
        m.q_internal = std::exp(lq(rng));
        m.q_external = std::exp(lq(rng));
        const double expected = std::abs(m.q_external - m.q_internal) / (m.q_external + m.q_internal);
        EXPECT_NEAR(std::abs(model_s11(m, m.f0)), expected, 1e-12);
    }
}

TEST(ModelS11, MinimumAtResonance) {
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> lq(std::log(1e3), std::log(1e6));
    for (int trial = 0; trial < 50; ++trial) {
        ResonanceModel m;
        m.f0 = 3.27e9;
        m.q_internal = std::exp(lq(rng));
        m.q_external = std::exp(lq(rng));
        const double lw = m.f0 / m.q_loaded();
        const int n = 2001;
        int arg = 0;
        double best = INFINITY;
        for (int k = 0; k < n; ++k) {
            const double v = std::abs(model_s11(m, m.f0 + lw * (k - n / 2) / 200.0));
            if (v < best) {
                best = v;
                arg = k;
            }
        }
        EXPECT_EQ(arg, n / 2);
    }
}

TEST(FitFrame, JacobianMatchesFiniteDifferences) {
    const ResonanceModel m = reference_model();
    const detail::FitFrame frame{m.f0 * (1 + 2e-6), m.f0 / m.q_loaded(), 10 * m.f0 / m.q_loaded()};
    const auto p = frame.encode(m);
    for (double f : {m.f0 - 3e5, m.f0, m.f0 + 1.7e4}) {
        Complex s, ds[7];
        frame.evaluate(p, f, s, ds);
        EXPECT_LT(std::abs(s - model_s11(m, f)), 1e-12);
        for (int j = 0; j < 7; ++j) {
            const double h = 1e-6;
            auto q = p;
            q[j] += h;
            Complex sp, sm, tmp[7];
            frame.evaluate(q, f, sp, tmp);
            q[j] -= 2 * h;
            frame.evaluate(q, f, sm, tmp);
            const Complex fd = (sp - sm) / (2 * h);
            EXPECT_LT(std::abs(fd - ds[j]), 1e-7 * std::max(1.0, std::abs(ds[j]))) << "param " << j << " f " << f;
        }
    }
}

TEST(FitFrame, EncodeDecodeRoundTrip) {
    const ResonanceModel m = reference_model();
    const detail::FitFrame frame{m.f0 + 1234.0, 1e5, 1e6};
    const ResonanceModel back = frame.decode(frame.encode(m));
    expect_model_near(back, m, 1e-12);
}

TEST(FitTrace, NoiselessRoundTrip) {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> lq(std::log(2e3), std::log(3e5)), u(-1.0, 1.0);
    std::vector<ResonanceModel> models{reference_model()};
    for (int k = 0; k < 20; ++k) {
        ResonanceModel m;
        m.f0 = 3e9 * (1 + 0.1 * u(rng));
        m.q_internal = std::exp(lq(rng));
        m.q_external = std::exp(lq(rng));
        m.phi0 = 0.4 * u(rng);
        m.amplitude = std::pow(10.0, 2 * u(rng));
        m.delay = 60e-9 * u(rng);
        m.phase_offset = 3.0 * u(rng);
        models.push_back(m);
    }
    for (const auto& m : models) {
        const FitResult r = fit_trace(trace_over_linewidths(m, 10, 401));
        EXPECT_TRUE(r.report.converged);
        expect_model_near(r.model, m, 1e-6);
        EXPECT_LT(r.report.residual_norm, 1e-9 * m.amplitude);
        EXPECT_GT(r.report.iterations, 0);
    }
}

TEST(FitTrace, ExactModelIsFixedPoint) {
    const ResonanceModel m = reference_model();
    const FitResult r = fit_trace(trace_over_linewidths(m, 10, 401), m);
    expect_model_near(r.model, m, 1e-10);
}

// Starting points perturbed by up to 20% of each parameter's natural
// scale: the loaded linewidth for f0, the value itself for Q, amplitude
// and delay, 0.2 rad for angles. The phase is perturbed where it is
// observed, at the resonance, not at f = 0.
TEST(FitTrace, ConvergesFromPerturbedInit) {
    const ResonanceModel m = reference_model();
    const S11Trace t = trace_over_linewidths(m, 10, 401);
    const double lw = m.f0 / m.q_loaded();
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int trial = 0; trial < 50; ++trial) {
        ResonanceModel init = m;
        init.f0 += u(rng) * lw;
        init.q_internal *= 1 + u(rng);
        init.q_external *= 1 + u(rng);
        init.phi0 += u(rng);
        init.amplitude *= 1 + u(rng);
        init.delay *= 1 + u(rng);
        init.phase_offset += u(rng) + 2.0 * std::numbers::pi * m.f0 * (init.delay - m.delay);
        const FitResult r = fit_trace(t, init);
        expect_model_near(r.model, m, 1e-4);
    }
}

TEST(FitTrace, NoisyMonteCarlo) {
    ResonanceModel m = reference_model();
    m.phi0 = 0.05;
    m.amplitude = 1.0;
    const int seeds = 120;
    std::vector<double> qi, qe;
    int covered = 0;
    for (int seed = 0; seed < seeds; ++seed) {
        const S11Trace t = with_noise(trace_over_linewidths(m, 10, 401), m.amplitude, static_cast<unsigned>(seed));
        const FitResult r = fit_trace(t);
        qi.push_back(r.model.q_internal);
        qe.push_back(r.model.q_external);
        if (std::abs(r.model.q_internal - m.q_internal) <= 2.0 * r.report.uncertainty.q_internal) ++covered;
        EXPECT_NEAR(r.report.noise_estimate, 0.01, 0.002);
    }
    const double med_qi = detail::median(qi), med_qe = detail::median(qe);
    EXPECT_LT(rel(med_qi, m.q_internal), 0.01);
    EXPECT_LT(rel(med_qe, m.q_external), 0.01);
    // the reported uncertainty means something: ~95% inside 2 sigma
    EXPECT_GT(covered, seeds * 85 / 100);
}

TEST(FitTrace, FlatTraceHasNoResonance) {
    S11Trace t;
    for (int k = 0; k < 101; ++k) {
        t.frequencies.push_back(3e9 + 1e4 * k);
        t.s11.push_back(1.0);
    }
    EXPECT_THROW(fit_trace(t), NoResonanceError);
}

TEST(FitTrace, NarrowTraceNeedsPartialFlag) {
    const ResonanceModel m = reference_model();
    const S11Trace t = trace_over_linewidths(m, 1.5, 101);
    EXPECT_THROW(fit_trace(t), ValidationError);
    FitOptions o;
    o.allow_partial = true;
    EXPECT_NO_THROW(fit_trace(t, m, o));
}

TEST(FitTrace, InvalidTraces) {
    S11Trace t = trace_over_linewidths(reference_model(), 10, 401);
    S11Trace bad = t;
    bad.s11.pop_back();
    EXPECT_THROW(fit_trace(bad), ValidationError);
    bad = t;
    std::swap(bad.frequencies[3], bad.frequencies[4]);
    EXPECT_THROW(fit_trace(bad), ValidationError);
    bad = t;
    bad.s11[10] = Complex(std::nan(""), 0.0);
    EXPECT_THROW(fit_trace(bad), ValidationError);
    bad = trace_over_linewidths(reference_model(), 10, 7);
    EXPECT_THROW(fit_trace(bad), ValidationError);
}

TEST(FitTrace, IterationCapReportsBestSoFar) {
    const ResonanceModel m = reference_model();
    ResonanceModel init = m;
    init.q_internal *= 1.15;
    FitOptions o;
    o.max_iterations = 1;
    try {
        fit_trace(trace_over_linewidths(m, 10, 401), init, o);
        FAIL() << "expected FitNonConvergenceError";
    } catch (const FitNonConvergenceError& e) {
        EXPECT_EQ(e.best_so_far().report.iterations, 1);
        EXPECT_FALSE(e.best_so_far().report.converged);
    }
}

TEST(BatchFit, OrderingAndErrors) {
    ResonanceModel warm = reference_model(), cold = reference_model();
    warm.q_internal = 20000;
    cold.q_internal = 61000;
    S11Trace a = trace_over_linewidths(warm, 10, 401);
    a.metadata.temperature_k = 4.0;
    a.metadata.label = "warm";
    S11Trace b = trace_over_linewidths(cold, 10, 401);
    b.metadata.temperature_k = 0.015;
    b.metadata.label = "cold";
    S11Trace flat = a;
    std::fill(flat.s11.begin(), flat.s11.end(), Complex(1.0));
    flat.metadata.label = "flat";
    flat.metadata.temperature_k = std::nan("");

    const auto rows = batch_fit({a, flat, b}, {}, 2);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].metadata.label, "cold");
    EXPECT_EQ(rows[1].metadata.label, "warm");
    EXPECT_EQ(rows[2].metadata.label, "flat");
    ASSERT_TRUE(rows[0].fit && rows[1].fit);
    EXPECT_FALSE(rows[2].fit);
    EXPECT_FALSE(rows[2].error.empty());
    EXPECT_EQ(rows[0].fit->model.q_internal, fit_trace(b).model.q_internal);
    EXPECT_EQ(rows[1].fit->model.q_internal, fit_trace(a).model.q_internal);
    EXPECT_THROW(batch_fit({}), ValidationError);
}

TEST(BatchFit, TemperatureSweepKeepsMonotoneQi) {
    std::vector<S11Trace> traces;
    const double temps[] = {0.8, 0.015, 0.3, 0.05, 0.1};
    for (double t : temps) {
        ResonanceModel m = reference_model();
        m.q_internal = 61000.0 / (1.0 + 5.0 * t);
        S11Trace tr = trace_over_linewidths(m, 10, 401);
        tr.metadata.temperature_k = t;
        tr.metadata.power_dbm = -120;
        traces.push_back(tr);
    }
    const auto rows = batch_fit(traces);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        EXPECT_LT(rows[k - 1].metadata.temperature_k, rows[k].metadata.temperature_k);
        EXPECT_GT(rows[k - 1].fit->model.q_internal, rows[k].fit->model.q_internal);
    }
}
