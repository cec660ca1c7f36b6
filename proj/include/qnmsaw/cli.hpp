#ifndef QNMSAW_CLI_HPP
#define QNMSAW_CLI_HPP

// The qnmsaw command line: catalog, solve, field, sweep, analytics, fit.
//
// Exit codes: 0 success (also when nothing was found), 2 bad configuration
// or arguments, 3 solver or fit failure, 4 file errors.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "analytics.hpp"
#include "config.hpp"
#include "io.hpp"
#include "qnm.hpp"
#include "resfit.hpp"
#include "version.hpp"

namespace qnmsaw::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kSolverError = 3, kIoError = 4 };

namespace detail {

inline std::pair<double, double> parse_band(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ValidationError("band: expected lo:hi, got '" + text + "'");
    const double lo = qnmsaw::detail::parse_number(qnmsaw::detail::trim(text.substr(0, colon)), "band");
    const double hi = qnmsaw::detail::parse_number(qnmsaw::detail::trim(text.substr(colon + 1)), "band");
    if (!(lo > 0.0) || !(hi > lo)) throw ValidationError("band: need 0 < lo < hi");
    return {lo, hi};
}

inline std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    for (const auto& cell : qnmsaw::detail::split_csv_line(text)) out.push_back(qnmsaw::detail::parse_number(cell, "values"));
    if (out.empty()) throw ValidationError("values: empty list");
    return out;
}

// start:stop:count, count >= 1, endpoints included
inline std::vector<double> parse_range(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(qnmsaw::detail::trim(p));
    if (parts.size() != 3) throw ValidationError("range: expected start:stop:count");
    const double a = qnmsaw::detail::parse_number(parts[0], "range");
    const double b = qnmsaw::detail::parse_number(parts[1], "range");
    const double n = qnmsaw::detail::parse_number(parts[2], "range");
    if (!(n >= 1.0) || n != std::floor(n) || n > 1e6) throw ValidationError("range: count must be a positive integer");
    if (n == 1.0 && a != b) throw ValidationError("range: a single value needs start == stop");
    const auto count = static_cast<std::size_t>(n);
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = count == 1 ? a : a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1);
    return out;
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline void write_sidecar(const std::string& out_path, const std::string& command) {
    nlohmann::json meta;
    meta["tool"] = "qnmsaw";
    meta["version"] = kVersion;
    meta["command"] = command;
    std::ofstream f(out_path + ".meta.json");
    if (!f) throw IoError("cannot write '" + out_path + ".meta.json'");
    f << meta.dump(2) << '\n';
}

// Writes `text` to `path`, or to `fallback` when path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& fallback, const std::string& command) {
    if (path.empty()) {
        fallback << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << text;
    f.close();
    if (!f) throw IoError("error writing '" + path + "'");
    write_sidecar(path, command);
}

struct Source {
    std::string catalog;
    std::string config;

    void add(CLI::App* app) {
        auto* a = app->add_option("--catalog", catalog, "Catalog structure label (R1..R9)");
        auto* b = app->add_option("--config", config, "Structure config file (JSON)");
        a->excludes(b);
    }

    [[nodiscard]] StructureConfig load() const {
        if (!catalog.empty()) return catalog_config(catalog);
        if (!config.empty()) return load_structure_config(config);
        throw ValidationError("need --catalog or --config");
    }
};

struct SolverFlags {
    std::string band;
    double grid_per_fsr = QnmOptions{}.grid_points_per_fsr;
    double refine_tol = QnmOptions{}.refine_tol;
    double max_q = QnmOptions{}.max_q_search;

    void add(CLI::App* app) {
        app->add_option("--band", band, "Search band lo:hi in Hz (default 0.9..1.1 x Bragg frequency)");
        app->add_option("--grid-per-fsr", grid_per_fsr, "Scan points per free spectral range");
        app->add_option("--refine-tol", refine_tol, "Root residual tolerance");
        app->add_option("--max-q", max_q, "Largest Q the scan line is tuned for");
    }

    [[nodiscard]] QnmOptions options(unsigned threads) const {
        QnmOptions o;
        o.grid_points_per_fsr = grid_per_fsr;
        o.refine_tol = refine_tol;
        o.max_q_search = max_q;
        o.threads = threads;
        return o;
    }

    [[nodiscard]] std::pair<double, double> band_for(const StructureConfig& c) const {
        if (!band.empty()) return parse_band(band);
        return default_band(c.v0, c.reference_period());
    }
};

inline std::string label_of(const StructureConfig& c) { return c.label.empty() ? "structure" : c.label; }

// Modes ranked by descending Q (ties by frequency).
inline std::vector<const QnmMode*> ranked(const ModeSearchResult& r) {
    std::vector<const QnmMode*> out;
    for (const auto& m : r.modes) out.push_back(&m);
    std::stable_sort(out.begin(), out.end(),
                     [](const QnmMode* a, const QnmMode* b) { return a->q_radiation > b->q_radiation; });
    return out;
}

inline nlohmann::json budget_json(const LossBudget& b) {
    nlohmann::json j;
    j["q_grating"] = number_or_null(b.q_grating);
    j["q_diffraction"] = number_or_null(b.q_diffraction);
    j["q_material"] = number_or_null(b.q_material);
    j["q_radiation"] = number_or_null(b.q_radiation);
    j["q_total"] = number_or_null(b.q_total);
    j["flags"] = b.flags;
    return j;
}

inline nlohmann::json model_json(const ResonanceModel& m) {
    nlohmann::json j;
    j["f0_hz"] = m.f0;
    j["q_internal"] = m.q_internal;
    j["q_external"] = m.q_external;
    j["q_loaded"] = m.q_loaded();
    j["phi0_rad"] = m.phi0;
    j["amplitude"] = m.amplitude;
    j["delay_s"] = m.delay;
    j["phase_offset_rad"] = m.phase_offset;
    return j;
}

inline nlohmann::json fit_json(const FitResult& r, const std::string& label) {
    nlohmann::json j;
    j["label"] = label;
    j["model"] = model_json(r.model);
    const ModelUncertainty& u = r.report.uncertainty;
    j["uncertainty"] = {{"f0_hz", u.f0},           {"q_internal", u.q_internal}, {"q_external", u.q_external},
                        {"phi0_rad", u.phi0},      {"amplitude", u.amplitude},   {"delay_s", u.delay},
                        {"phase_offset_rad", u.phase_offset}};
    j["residual_norm"] = r.report.residual_norm;
    j["noise_estimate"] = r.report.noise_estimate;
    j["iterations"] = r.report.iterations;
    j["converged"] = r.report.converged;
    j["initial"] = model_json(r.report.initial);
    return j;
}

} // namespace detail

// Runs the command line; all output goes to `out` and `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Quasinormal modes and loss budgets of SAW phononic crystals", "qnmsaw"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand
    app.set_version_flag("--version", std::string(kVersion));
    unsigned threads = 1;
    app.add_option("--threads", threads, "Worker threads (default 1)")->check(CLI::PositiveNumber);

    // catalog
    auto* catalog = app.add_subcommand("catalog", "List the built-in structures");
    std::string catalog_out;
    catalog->add_option("--out", catalog_out, "Output CSV (default stdout)");

    // solve
    auto* solve = app.add_subcommand("solve", "Find the QNMs of a structure in a band");
    detail::Source solve_src;
    detail::SolverFlags solve_flags;
    std::string solve_out;
    std::size_t top = 5;
    solve_src.add(solve);
    solve_flags.add(solve);
    solve->add_option("--out", solve_out, "Output modes CSV (default stdout)");
    solve->add_option("--top", top, "Number of modes in the printed summary");

    // field
    auto* field = app.add_subcommand("field", "Export the normalized field of one mode");
    detail::Source field_src;
    detail::SolverFlags field_flags;
    std::string field_out;
    std::size_t mode_rank = 0, samples = 8;
    field_src.add(field);
    field_flags.add(field);
    field->add_option("--mode", mode_rank, "Mode rank by descending Q (0 = highest Q)");
    field->add_option("--samples", samples, "Samples per segment")->check(CLI::PositiveNumber);
    field->add_option("--out", field_out, "Output field CSV (default stdout)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Best Q across a family of structures");
    detail::Source sweep_src;
    detail::SolverFlags sweep_flags;
    bool catalog_all = false;
    std::string vary, values, range, sweep_out;
    sweep_src.add(sweep);
    sweep_flags.add(sweep);
    sweep->add_flag("--catalog-all", catalog_all, "Sweep over the nine catalog structures");
    sweep->add_option("--vary", vary, "Field to vary")->check(CLI::IsMember(sweepable_fields()));
    auto* values_opt = sweep->add_option("--values", values, "Comma-separated values");
    auto* range_opt = sweep->add_option("--range", range, "start:stop:count");
    values_opt->excludes(range_opt);
    sweep->add_option("--out", sweep_out, "Output CSV (default stdout)");

    // analytics
    auto* analytics = app.add_subcommand("analytics", "Closed-form loss budget");
    std::optional<double> qr, qm, qg, qd;
    std::optional<double> g_d, g_lambda, g_rs, g_ng, g_w, g_gamma, g_f0, g_v, g_l;
    std::optional<double> n_eff, strip_period;
    std::string analytics_out;
    analytics->add_option("--qr", qr, "Radiation Q");
    analytics->add_option("--qm", qm, "Material Q");
    analytics->add_option("--qg", qg, "Mirror-leakage Q");
    analytics->add_option("--qd", qd, "Diffraction Q");
    analytics->add_option("--d-m", g_d, "Distance between mirrors (m)");
    analytics->add_option("--wavelength-m", g_lambda, "Resonant wavelength (m)");
    analytics->add_option("--rs", g_rs, "Single-strip reflectance");
    analytics->add_option("--ng", g_ng, "Strips per mirror");
    analytics->add_option("--aperture-m", g_w, "Aperture W (m)");
    analytics->add_option("--gamma", g_gamma, "Anisotropy parameter");
    analytics->add_option("--f0-hz", g_f0, "Resonance frequency (Hz)");
    analytics->add_option("--v-m-per-s", g_v, "SAW velocity (m/s)");
    analytics->add_option("--mfp-m", g_l, "Phonon mean free path (m)");
    analytics->add_option("--n-eff", n_eff, "Effective index for the transverse-mode limit");
    analytics->add_option("--strip-period-m", strip_period, "Strip pitch for the transverse-mode limit (m)");
    analytics->add_option("--out", analytics_out, "Output JSON (default stdout)");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit S11 traces");
    std::string fit_input, fit_manifest, fit_out;
    bool polar = false, allow_partial = false;
    int max_iterations = FitOptions{}.max_iterations;
    auto* in_opt = fit->add_option("--input", fit_input, "Trace CSV");
    auto* man_opt = fit->add_option("--manifest", fit_manifest, "Batch manifest CSV");
    in_opt->excludes(man_opt);
    fit->add_flag("--polar", polar, "Trace columns are frequency_hz,mag_db,phase_deg");
    fit->add_flag("--allow-partial", allow_partial, "Fit traces narrower than three linewidths");
    fit->add_option("--max-iterations", max_iterations, "Iteration cap")->check(CLI::PositiveNumber);
    fit->add_option("--out", fit_out, "Output JSON (single trace) or CSV (manifest)");

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e, out, err);
            return code == 0 ? kOk : kConfigError;
        }

        if (catalog->parsed()) {
            std::ostringstream csv;
            csv << "label,n_total,n_mirror,center_strip_period_m,mirror_strip_period_m\n";
            for (const auto& [label, r] : recipe_catalog())
                csv << label << ',' << r.n_total << ',' << r.n_mirror << ',' << format_number(r.center_strip_period)
                    << ',' << format_number(r.mirror_strip_period) << '\n';
            detail::emit(catalog_out, csv.str(), out, "catalog");
            return kOk;
        }

        if (solve->parsed()) {
            const StructureConfig cfg = solve_src.load();
            const StructureSpec spec = cfg.build();
            const auto [lo, hi] = solve_flags.band_for(cfg);
            const ModeSearchResult r = find_modes(spec, lo, hi, solve_flags.options(threads));
            std::ostringstream csv;
            write_modes_csv(csv, detail::label_of(cfg), r.modes);
            detail::emit(solve_out, csv.str(), out, "solve");
            std::ostream& summary = solve_out.empty() ? err : out;
            summary << detail::label_of(cfg) << ": " << r.modes.size() << " modes in [" << format_number(lo) << ", "
                    << format_number(hi) << "] Hz\n";
            const auto order = detail::ranked(r);
            for (std::size_t k = 0; k < std::min(top, order.size()); ++k) {
                char line[160];
                std::snprintf(line, sizeof line, "  #%zu  f = %.9g Hz  Q = %.6g  residual = %.2g\n", k,
                              order[k]->frequency_hz, order[k]->q_radiation, order[k]->residual);
                summary << line;
            }
            return kOk;
        }

        if (field->parsed()) {
            const StructureConfig cfg = field_src.load();
            const StructureSpec spec = cfg.build();
            const auto [lo, hi] = field_flags.band_for(cfg);
            const ModeSearchResult r = find_modes(spec, lo, hi, field_flags.options(threads));
            const auto order = detail::ranked(r);
            if (order.empty()) throw SolverError("field: no modes in the band");
            if (mode_rank >= order.size())
                throw ValidationError("mode: rank " + std::to_string(mode_rank) + " out of range (" +
                                      std::to_string(order.size()) + " modes found)");
            std::ostringstream csv;
            write_field_csv(csv, sample_field(spec, *order[mode_rank], samples));
            detail::emit(field_out, csv.str(), out, "field");
            return kOk;
        }

        if (sweep->parsed()) {
            std::vector<std::pair<std::string, StructureConfig>> cases;
            if (catalog_all) {
                if (!vary.empty() || !sweep_src.catalog.empty() || !sweep_src.config.empty())
                    throw ValidationError("sweep: --catalog-all takes no structure or --vary");
                for (const auto& [label, r] : recipe_catalog()) cases.emplace_back(label, catalog_config(label));
            } else {
                if (vary.empty()) throw ValidationError("sweep: need --catalog-all or --vary");
                const StructureConfig base = sweep_src.load();
                std::vector<double> vs;
                if (!values.empty()) vs = detail::parse_values(values);
                else if (!range.empty()) vs = detail::parse_range(range);
                else throw ValidationError("sweep: need --values or --range");
                for (double v : vs) cases.emplace_back(format_number(v), with_field(base, vary, v));
            }
            struct Row {
                double best_q = std::numeric_limits<double>::quiet_NaN();
                double f0 = std::numeric_limits<double>::quiet_NaN();
            };
            std::vector<Row> rows(cases.size());
            // structures are validated up front so a bad value is a config error
            std::vector<StructureSpec> specs;
            for (const auto& c : cases) specs.push_back(c.second.build());
            parallel_for(cases.size(), threads, [&](std::size_t k) {
                const auto [lo, hi] = sweep_flags.band_for(cases[k].second);
                const ModeSearchResult r = find_modes(specs[k], lo, hi, sweep_flags.options(1));
                if (const QnmMode* m = r.best()) rows[k] = {m->q_radiation, m->frequency_hz};
            });
            std::ostringstream csv;
            csv << "param,best_q,f0_hz\n";
            for (std::size_t k = 0; k < cases.size(); ++k)
                csv << cases[k].first << ',' << format_number(rows[k].best_q) << ',' << format_number(rows[k].f0)
                    << '\n';
            detail::emit(sweep_out, csv.str(), out, "sweep");
            return kOk;
        }

        if (analytics->parsed()) {
            const std::optional<double> geometry[] = {g_d, g_lambda, g_rs, g_ng, g_w, g_gamma, g_f0, g_v, g_l};
            // the aperture alone belongs to the transverse limit
            const bool any_geometry = std::any_of(std::begin(geometry), std::end(geometry),
                                                  [&](const auto& v) { return v.has_value() && &v != &geometry[4]; });
            const bool all_geometry = std::all_of(std::begin(geometry), std::end(geometry),
                                                  [](const auto& v) { return v.has_value(); });
            LossBudget budget;
            if (any_geometry) {
                if (!all_geometry)
                    throw ValidationError("analytics: geometry needs --d-m --wavelength-m --rs --ng --aperture-m "
                                          "--gamma --f0-hz --v-m-per-s --mfp-m");
                if (qg || qd || qm) throw ValidationError("analytics: give geometry or explicit Q values, not both");
                ResonatorGeometry g{*g_d, *g_lambda, *g_rs, *g_ng, *g_w, *g_gamma, *g_f0, *g_v, *g_l};
                budget = resonator_budget(g);
                if (qr) {
                    budget.q_radiation = *qr;
                    budget.q_total = combine_q({budget.q_total, *qr});
                }
            } else {
                if (!qr && !qm && !qg && !qd && !n_eff)
                    throw ValidationError("analytics: give Q values, geometry flags or --n-eff");
                budget.q_radiation = qr.value_or(kInfiniteQ);
                budget.q_material = qm.value_or(kInfiniteQ);
                budget.q_grating = qg.value_or(kInfiniteQ);
                budget.q_diffraction = qd.value_or(kInfiniteQ);
                budget.q_total =
                    combine_q({budget.q_radiation, budget.q_material, budget.q_grating, budget.q_diffraction});
            }
            nlohmann::json j = detail::budget_json(budget);
            if (n_eff || strip_period) {
                if (!n_eff || !strip_period || !g_w)
                    throw ValidationError("analytics: the transverse limit needs --n-eff, --strip-period-m and "
                                          "--aperture-m");
                const TransverseLimit t = transverse_mode_limit(*n_eff, *strip_period, *g_w);
                j["transverse"] = {{"alpha_c_deg", t.alpha_c_deg}, {"j_max", t.j_max}};
            }
            detail::emit(analytics_out, j.dump(2) + "\n", out, "analytics");
            return kOk;
        }

        if (fit->parsed()) {
            FitOptions options;
            options.allow_partial = allow_partial;
            options.max_iterations = max_iterations;
            if (!fit_input.empty()) {
                const S11Trace trace = read_trace_csv(fit_input, polar);
                const FitResult r = fit_trace(trace, std::nullopt, options);
                detail::emit(fit_out, detail::fit_json(r, trace.metadata.label).dump(2) + "\n", out, "fit");
                return kOk;
            }
            if (fit_manifest.empty()) throw ValidationError("fit: need --input or --manifest");
            std::vector<S11Trace> traces;
            for (const auto& e : read_manifest_csv(fit_manifest)) {
                S11Trace t = read_trace_csv(e.file, polar);
                t.metadata = e.metadata;
                traces.push_back(std::move(t));
            }
            const auto rows = batch_fit(traces, options, threads);
            std::ostringstream csv;
            csv << "label,temperature_k,power_dbm,f0_hz,q_internal,q_external,q_loaded,phi0_rad,amplitude,delay_s,"
                   "phase_offset_rad,residual_norm,error\n";
            for (const auto& row : rows) {
                csv << row.metadata.label << ',' << format_number(row.metadata.temperature_k) << ','
                    << format_number(row.metadata.power_dbm) << ',';
                if (row.fit) {
                    const ResonanceModel& m = row.fit->model;
                    for (double v : {m.f0, m.q_internal, m.q_external, m.q_loaded(), m.phi0, m.amplitude, m.delay,
                                     m.phase_offset, row.fit->report.residual_norm})
                        csv << format_number(v) << ',';
                    csv << '\n';
                } else {
                    std::string msg = row.error;
                    std::replace(msg.begin(), msg.end(), ',', ';');
                    std::replace(msg.begin(), msg.end(), '\n', ' ');
                    csv << "nan,nan,nan,nan,nan,nan,nan,nan,nan," << msg << '\n';
                }
            }
            detail::emit(fit_out, csv.str(), out, "fit");
            return kOk;
        }
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const SolverError& e) {
        err << "error: " << e.what() << '\n';
        return kSolverError;
    }
    return kConfigError;
}

} // namespace qnmsaw::cli

#endif // QNMSAW_CLI_HPP
