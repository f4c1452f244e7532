#pragma once

// Command-line front end. run() returns the process exit code:
// 0 success, 1 invalid input, 2 verification failure, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "urq/urq.hpp"

namespace urq::cli {

enum ExitCode : int { kOk = 0, kInvalid = 1, kVerifyFailed = 2, kNumerical = 3 };

namespace detail {

struct ParamFlags {
    std::optional<std::string> file;
    std::optional<double> lambda, mu, alpha, beta, p, C;
    std::string model = "model1";
};

inline void add_param_flags(CLI::App* app, ParamFlags& f) {
    app->add_option("--params", f.file, "JSON parameter file");
    app->add_option("--lambda", f.lambda, "arrival rate");
    app->add_option("--mu", f.mu, "service rate");
    app->add_option("--alpha", f.alpha, "breakdown rate");
    app->add_option("--beta", f.beta, "repair rate");
    app->add_option("--p", f.p, "departure probability after server 1");
    app->add_option("--C", f.C, "uniformization constant (default: smallest admissible)");
    app->add_option("--model", f.model, "model1, model2 or rsrd");
}

/// Parameter file first, explicit flags on top, then validation.
inline ParsedParams resolve(const ParamFlags& f, const CLI::App& sub) {
    Json j = Json::object();
    if (f.file) {
        std::ifstream in(*f.file);
        if (!in) throw InvalidParameter("cannot open parameter file " + *f.file);
        try {
            in >> j;
        } catch (const Json::parse_error& e) {
            throw InvalidParameter("parameter file is not valid JSON: " + std::string(e.what()));
        }
        if (!j.is_object()) throw InvalidParameter("parameter file must hold a JSON object");
        // a C chosen for another model would be misleading once flags change the rates
        if (f.lambda || f.mu || f.alpha || f.beta) j.erase("C");
    }
    const auto put = [&](const char* key, const std::optional<double>& v) {
        if (v) j[key] = *v;
    };
    put("lambda", f.lambda);
    put("mu", f.mu);
    put("alpha", f.alpha);
    put("beta", f.beta);
    put("p", f.p);
    put("C", f.C);
    if (sub.count("--model") > 0 || !j.contains("model")) j["model"] = f.model;
    return params_from_json(j);
}

inline std::filesystem::path prepare_out(const std::string& dir) {
    std::filesystem::path p(dir);
    std::filesystem::create_directories(p);
    return p;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw Error("cannot write " + p.string());
    return out;
}

inline Meta make_meta(const std::string& command, const ParsedParams& pp, std::optional<std::uint64_t> seed) {
    Meta m;
    m.command = command;
    m.params = pp.params;
    m.model = pp.model;
    m.seed = seed;
    return m;
}

inline Json with_meta(const Meta& meta, Json body) {
    body["meta"] = to_json(meta);
    return body;
}

} // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Tail asymptotics of unreliable queues"};
    app.require_subcommand(1);
    std::string out_dir = "./out";
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    detail::ParamFlags pf;

    // analyze
    auto* analyze = app.add_subcommand("analyze", "spectral data, twist, tail asymptotics, stability");
    detail::add_param_flags(analyze, pf);
    bool with_limits = false;
    std::string eta_method = "lattice";
    std::int64_t x_max = 60, y_max = 60, samples = 200'000;
    std::uint64_t seed = 1;
    analyze->add_flag("--alpha-limits", with_limits, "add the alpha -> 0 limit record");
    analyze->add_option("--eta-method", eta_method, "model2 eta: lattice or mc")->check(CLI::IsMember({"lattice", "mc"}));
    analyze->add_option("--x-max", x_max, "truncation in x for model2");
    analyze->add_option("--y-max", y_max, "truncation in y for model2");
    analyze->add_option("--samples", samples, "Monte Carlo samples for model2 eta");
    analyze->add_option("--seed", seed, "master seed");
    analyze->add_option("--out", out_dir, "output directory");

    // simulate
    auto* sim = app.add_subcommand("simulate", "seeded trajectory and occupation table");
    detail::add_param_flags(sim, pf);
    std::int64_t steps = 70'000, burn_in = 0, thin = 1, start_x = 0, start_y = 0;
    std::string start_status = "U";
    sim->add_option("--steps", steps, "number of steps");
    sim->add_option("--seed", seed, "seed");
    sim->add_option("--burn-in", burn_in, "steps discarded from the occupation table");
    sim->add_option("--thin", thin, "keep every thin-th state in the trajectory CSV");
    sim->add_option("--start-x", start_x);
    sim->add_option("--start-y", start_y);
    sim->add_option("--start-status", start_status);
    sim->add_option("--out", out_dir, "output directory");

    // ldpath
    auto* ld = app.add_subcommand("ldpath", "large-deviation excursions and regime verdict");
    detail::add_param_flags(ld, pf);
    std::int64_t level = 30, base = 2;
    ld->add_option("--steps", steps, "number of steps");
    ld->add_option("--seed", seed, "seed");
    ld->add_option("--level", level, "target level K");
    ld->add_option("--base", base, "base level");
    ld->add_option("--out", out_dir, "output directory");

    // tailfit
    auto* tf = app.add_subcommand("tailfit", "geometric fit of a stationary tail");
    detail::add_param_flags(tf, pf);
    std::int64_t k_min = 100, k_max = 300, fit_y = 0;
    std::string sigma = "U";
    tf->add_option("--k-min", k_min);
    tf->add_option("--k-max", k_max);
    tf->add_option("--sigma", sigma, "U or D");
    tf->add_option("--y", fit_y, "server-2 queue length for two-queue models");
    tf->add_option("--x-max", x_max, "truncation in x for model2/rsrd");
    tf->add_option("--y-max", y_max, "truncation in y for model2/rsrd");
    tf->add_option("--out", out_dir, "output directory");

    // compare-mm1
    auto* mm1 = app.add_subcommand("compare-mm1", "decay rate against the M/M/1 queue of equal effective rates");
    detail::add_param_flags(mm1, pf);
    mm1->add_option("--out", out_dir, "output directory");

    // verify
    auto* ver = app.add_subcommand("verify", "run the invariant suite on a random grid");
    std::int64_t grid = 200;
    ver->add_option("--grid", grid, "grid size");
    ver->add_option("--seed", seed, "grid seed");
    ver->add_option("--out", out_dir, "output directory");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (ver->parsed()) {
            if (grid < 1) throw InvalidParameter("grid must be >= 1");
            const auto dir = detail::prepare_out(out_dir);
            const auto results = run_invariant_suite(grid, seed);
            bool all = true;
            Json props = Json::array();
            for (const auto& r : results) {
                all = all && r.passed;
                out << (r.passed ? "PASS " : "FAIL ") << r.name << " (checked " << r.checked << ", worst "
                    << fmt17(r.worst) << ", tol " << r.tolerance << ")";
                if (!r.passed) out << " first failure: " << r.detail;
                out << '\n';
                props.push_back({{"name", r.name}, {"passed", r.passed}, {"checked", r.checked},
                                 {"worst", r.worst}, {"tolerance", r.tolerance}, {"detail", r.detail}});
            }
            Json meta{{"version", std::string(kVersion)}, {"command", "verify"}, {"grid", grid},
                      {"seed", seed}, {"rng", std::string(kRngIdentity)}, {"params", nullptr}};
            write_json_file((dir / "verify.json").string(), Json{{"meta", meta}, {"properties", props}, {"passed", all}});
            return all ? kOk : kVerifyFailed;
        }

        const ParsedParams pp = detail::resolve(pf, *app.get_subcommands().front());
        const auto& P = pp.params;
        const auto dir = detail::prepare_out(out_dir);

        if (analyze->parsed()) {
            Json report;
            const auto spec = characteristic_roots(P);
            const auto verdict = stability(P, pp.model);
            report["gamma_1"] = spec.gamma_p;
            report["spectral"] = to_json(spec);
            report["stability"] = to_json(verdict);
            if (pp.model == Model::Model1) {
                const auto blocks = qbd_blocks(P);
                report["neuts_stable"] = neuts_stability(blocks);
                if (verdict.stable) {
                    const auto R = rate_matrix_closed_form(P);
                    const auto [big, small] = rate_matrix_spectrum(R);
                    report["rate_matrix"] = {{"R", {{R(0, 0), R(0, 1)}, {R(1, 0), R(1, 1)}}},
                                             {"eig_large", big}, {"eig_small", small}};
                    report["mm1"] = to_json(mm1_comparison(P));
                }
            }
            if (pp.model != Model::RsRd && verdict.stable) {
                if (P.p == 1.0) report["twist"] = to_json(twist_summary(P, pp.model, 0));
                else {
                    const auto h = harmonic(P, pp.model);
                    report["twist"] = {{"harmonic", {{"base", h.base}, {"up_weight", h.up_weight},
                                                     {"down_weight", h.down_weight}}}};
                }
                Model2EtaOptions eo;
                eo.x_max = x_max;
                eo.y_max = y_max;
                eo.samples = samples;
                eo.seed = seed;
                eo.method = eta_method == "mc" ? EtaMethod::MonteCarlo : EtaMethod::Lattice;
                report["tail"] = to_json(prefactors(P, pp.model, eo));
            }
            if (pp.model == Model::RsRd) {
                const double rho = P.lambda / (P.mu * P.p);
                report["rs_rd"] = {{"rho", rho}, {"product_form", rho < 1.0},
                                   {"normalization", rho < 1.0 ? (1.0 - rho) * (1.0 - rho) : 0.0}};
            }
            if (with_limits) report["alpha_limits"] = to_json(alpha_limits(P.lambda, P.mu, P.beta, P.p, pp.model));
            report = detail::with_meta(detail::make_meta("analyze", pp, seed), report);
            write_json_file((dir / "analyze.json").string(), report);
            out << report.dump(2) << '\n';
            return kOk;
        }

        if (sim->parsed()) {
            SimulationConfig cfg;
            cfg.steps = steps;
            cfg.seed = seed;
            cfg.thin = thin;
            cfg.start = State{pp.model, start_x, pp.model == Model::Model1 ? 0 : start_y, parse_status(start_status)};
            const auto traj = simulate(P, pp.model, cfg);
            const auto meta = detail::make_meta("simulate", pp, seed);
            {
                auto f = detail::open_out(dir / "trajectory.csv");
                write_trajectory_csv(f, traj, meta);
            }
            const auto occ = occupation(P, pp.model, cfg, burn_in);
            {
                auto f = detail::open_out(dir / "empirical.csv");
                write_table_csv(f, occ.table, meta);
            }
            out << "steps " << steps << ", counted " << occ.counted_steps << ", up marginal "
                << fmt17(up_marginal(occ.table)) << (occ.transience.suspect_transient ? ", suspect transient" : "")
                << '\n';
            return kOk;
        }

        if (ld->parsed()) {
            const auto traj = simulate(P, pp.model, steps, seed);
            const auto ex = ld_excursions(traj, level, base);
            const auto vote = regime_vote(ex);
            const auto meta = detail::make_meta("ldpath", pp, seed);
            {
                auto f = detail::open_out(dir / "excursions.csv");
                write_excursions_csv(f, ex, meta);
            }
            Json report{{"vote", to_json(vote)}, {"level", level}, {"base", base}, {"steps", steps}};
            std::string predicted = "degenerate";
            try {
                predicted = std::string(to_string(regime_prediction(P, pp.model)));
            } catch (const InvalidParameter&) {
            }
            report["predicted"] = predicted;
            if (pp.model != Model::RsRd && P.p == 1.0 && is_stable(P))
                report["drift_per_step"] = horizontal_drift(P, pp.model).closed_form;
            write_json_file((dir / "ldpath.json").string(), detail::with_meta(meta, report));
            out << "excursions " << vote.excursions << " (up " << vote.up_dominated << ", down "
                << vote.down_dominated << ")\n";
            out << "verdict " << (vote.verdict ? std::string(to_string(*vote.verdict)) : std::string("none")) << '\n';
            out << "predicted " << predicted << '\n';
            return kOk;
        }

        if (tf->parsed()) {
            const ServerStatus s = parse_status(sigma);
            StationaryTable table;
            if (pp.model == Model::Model1) table = exact_stationary_model1(P, k_max);
            else table = truncated_stationary(P, pp.model, std::max(x_max, k_max), y_max);
            const auto fit = tail_fit(table, s, k_min, k_max, fit_y);
            std::optional<TailAsymptotic> theory;
            if (pp.model != Model::RsRd && P.p == 1.0) {
                Model2EtaOptions eo;
                eo.x_max = x_max;
                eo.y_max = y_max;
                eo.method = EtaMethod::Lattice;
                theory = prefactors(P, pp.model, eo);
            }
            std::vector<TailFitRow> rows;
            for (std::int64_t k = k_min; k <= k_max; ++k) {
                const double pi = table.at(k, fit_y, s);
                const double pred = theory ? theory->predict(k, fit_y, s)
                                           : fit.prefactor_est() * std::pow(fit.gamma_est, static_cast<double>(k));
                rows.push_back({k, pi, pred});
            }
            auto meta = detail::make_meta("tailfit", pp, std::nullopt);
            meta.extra = {{"prediction", theory ? "closed-form prefactor" : "fitted line"},
                          {"sigma", sigma}, {"y", fit_y}};
            {
                auto f = detail::open_out(dir / "tailfit.csv");
                write_tailfit_csv(f, rows, meta);
            }
            Json report{{"fit", to_json(fit)}, {"gamma_p", characteristic_roots(P).gamma_p}};
            write_json_file((dir / "tailfit.json").string(), detail::with_meta(meta, report));
            out << "gamma_est " << fmt17(fit.gamma_est) << " gamma_p " << fmt17(characteristic_roots(P).gamma_p)
                << '\n';
            return kOk;
        }

        if (mm1->parsed()) {
            const auto c = mm1_comparison(P);
            const Json report = detail::with_meta(detail::make_meta("compare-mm1", pp, std::nullopt), to_json(c));
            write_json_file((dir / "compare-mm1.json").string(), report);
            out << report.dump(2) << '\n';
            return kOk;
        }
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const Error& e) {
        err << "invalid input: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "invalid input: " << e.what() << '\n';
        return kInvalid;
    }
    return kInvalid;
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}

} // namespace urq::cli
