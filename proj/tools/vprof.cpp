// vprof: viscous profiles of one-dimensional conservation laws.
//
// Subcommands compute spectral splittings, invariant-manifold charts,
// traveling waves, boundary layers, wave-fan curves and Riemann samples,
// hypothesis reports for singular systems dV/dt = F(V)/zeta(V), guarded
// singular integration, and slow/fast decompositions. Results are written as
// JSON (structured) and CSV (curves) under --out.
//
// Exit codes: 0 success; 2 negative result (no connection, inadmissible
// boundary datum, failed hypotheses); 1 runtime error; 64 usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "vprof/catalog.hpp"
#include "vprof/io.hpp"
#include "vprof/ns.hpp"

using namespace vprof;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNegative = 2;
constexpr int kExitUsage = 64;

// JSON config support: a flat object whose keys mirror the subcommand's long
// option names, e.g. {"system": "burgers", "s": -0.5}. The file is expanded
// into ordinary flags in place of --config; flags given later on the command
// line override it (options use a take-last policy).
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        std::string tok = argv[i];
        std::string path;
        if (tok == "--config" && i + 1 < argc) {
            path = argv[++i];
        } else if (tok.rfind("--config=", 0) == 0) {
            path = tok.substr(9);
        } else {
            args.push_back(tok);
            continue;
        }
        std::ifstream in(path);
        if (!in) fail(ErrorKind::Io, "cannot read config '" + path + "'");
        nlohmann::json j;
        in >> j;
        if (!j.is_object()) fail(ErrorKind::InvalidInput, "config must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            auto push = [&](const nlohmann::json& v) {
                args.push_back("--" + it.key());
                args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            };
            if (it.value().is_array())
                for (const auto& v : it.value()) push(v);
            else
                push(it.value());
        }
    }
    return args;
}

Vec parse_vec(const std::string& csv, int expect = -1) {
    std::vector<double> vals;
    std::string token;
    std::stringstream ss(csv);
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        vals.push_back(std::stod(token));
    }
    if (expect >= 0 && static_cast<int>(vals.size()) != expect)
        fail(ErrorKind::InvalidInput, "expected " + std::to_string(expect) +
                                          " comma-separated values, got " +
                                          std::to_string(vals.size()));
    Vec v(static_cast<int>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) v(static_cast<int>(i)) = vals[i];
    return v;
}

std::map<std::string, double> parse_params(const std::vector<std::string>& kvs) {
    std::map<std::string, double> out;
    for (const auto& kv : kvs) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::InvalidInput, "--param expects key=value, got '" + kv + "'");
        out[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    return out;
}

std::string out_path(const std::string& dir, const std::string& file) {
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / file).string();
}

// The ODE field a chart subcommand works on: linear examples as-is, singular
// systems in desingularized tau-time, flux systems through the augmented
// traveling-wave system at (ubar, 0, lambda_family).
SmoothField chart_field(const CatalogEntry& entry, const std::string& ubar_csv, int family) {
    switch (entry.kind) {
        case SystemKind::LinearOde: return *entry.ode;
        case SystemKind::Singular: return entry.singular->tau_field();
        case SystemKind::Flux: {
            Vec ubar = ubar_csv.empty() ? Vec(Vec::Zero(entry.flux->N))
                                        : parse_vec(ubar_csv, entry.flux->N);
            return build_tw_system(*entry.flux, ubar, family - 1).field;
        }
    }
    fail(ErrorKind::InvalidInput, "unsupported system kind");
}

struct CommonArgs {
    std::string system;
    std::vector<std::string> params;
    std::string out = ".";
    int jobs = 1;
    unsigned seed = 12345;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_system = true) {
    auto* sys = cmd->add_option("--system", args.system, "catalog system name");
    if (needs_system) sys->required();
    cmd->add_option("--param", args.params, "system parameter key=value (repeatable)")
        ->take_all();
    cmd->add_option("--out", args.out, "output directory")->capture_default_str();
    cmd->add_option("--jobs", args.jobs, "worker threads for independent queries")
        ->capture_default_str();
    cmd->add_option("--seed", args.seed, "random seed for sample clouds")
        ->capture_default_str();
    std::string dummy;
    cmd->add_option("--config", dummy,
                    "JSON file whose keys mirror this subcommand's flags (expanded before "
                    "parsing; later flags override)");
}

int run_catalog() {
    auto desc = catalog_descriptions();
    for (const auto& name : catalog_names())
        std::cout << name << "  -  " << desc[name] << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"viscous profiles of conservation laws and singular ODE analysis"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // --- spectrum ---------------------------------------------------------
    auto* c_spec = app.add_subcommand("spectrum",
                                      "stable/unstable/center splitting of the linearization");
    CommonArgs a_spec;
    add_common(c_spec, a_spec);
    double spec_tol_zero = -1.0;
    std::string spec_ubar;
    int spec_family = 1;
    c_spec->add_option("--tol-zero", spec_tol_zero, "center-band tolerance (default 1e-9 |A|)");
    c_spec->add_option("--ubar", spec_ubar, "base state for flux systems (comma-separated)");
    c_spec->add_option("--family", spec_family, "characteristic family (1-based, flux systems)");

    // --- center-chart / stable-chart ---------------------------------------
    auto* c_cc = app.add_subcommand("center-chart", "center-manifold chart at the equilibrium");
    auto* c_sc = app.add_subcommand("stable-chart", "stable-manifold chart at the equilibrium");
    CommonArgs a_cc, a_sc;
    struct ChartArgs {
        double delta = 0.1, eta = 0.0, horizon = 0.0, fp_tol = 1e-10, h_target = 0.02;
        int grid_n = 0, max_iter = 250, pts = 5;
        bool richardson = false;
        std::string ubar;
        int family = 1;
    } g_cc, g_sc;
    for (auto [cmd, args, ch] : {std::tuple{c_cc, &a_cc, &g_cc}, std::tuple{c_sc, &a_sc, &g_sc}}) {
        add_common(cmd, *args);
        cmd->add_option("--delta", ch->delta, "chart radius")->capture_default_str();
        cmd->add_option("--eta", ch->eta, "weighted-norm rate (0 = auto)");
        cmd->add_option("--horizon", ch->horizon, "truncation horizon T (0 = auto)");
        cmd->add_option("--grid-n", ch->grid_n, "time grid points (0 = auto)");
        cmd->add_option("--h-target", ch->h_target, "target time step")->capture_default_str();
        cmd->add_option("--fp-tol", ch->fp_tol, "fixed-point tolerance")->capture_default_str();
        cmd->add_option("--max-iter", ch->max_iter, "iteration cap")->capture_default_str();
        cmd->add_option("--pts", ch->pts, "grid points per base axis")->capture_default_str();
        cmd->add_flag("--richardson", ch->richardson, "extrapolate the quadrature");
        cmd->add_option("--ubar", ch->ubar, "base state for flux systems");
        cmd->add_option("--family", ch->family, "characteristic family (flux systems)");
    }

    // --- traveling-wave ----------------------------------------------------
    auto* c_tw = app.add_subcommand("traveling-wave", "viscous profile joining u- to u+");
    CommonArgs a_tw;
    add_common(c_tw, a_tw);
    std::string tw_um, tw_up;
    double tw_sigma = 0.0, tw_horizon = 50.0, tw_tol = 1e-8;
    c_tw->add_option("--uminus", tw_um, "left state (comma-separated)")->required();
    c_tw->add_option("--uplus", tw_up, "right state (comma-separated)")->required();
    c_tw->add_option("--sigma", tw_sigma, "wave speed")->capture_default_str();
    c_tw->add_option("--horizon", tw_horizon, "shooting horizon")->capture_default_str();
    c_tw->add_option("--tol", tw_tol, "connection tolerance")->capture_default_str();

    // --- boundary-layer ----------------------------------------------------
    auto* c_bl = app.add_subcommand("boundary-layer", "steady layer U(0) = ub, U(inf) = u0");
    CommonArgs a_bl;
    add_common(c_bl, a_bl);
    std::string bl_u0, bl_ub;
    double bl_horizon = 50.0, bl_tol = 1e-8, bl_a = std::nan("");
    c_bl->add_option("--u0", bl_u0, "interior state (comma-separated)")->required();
    c_bl->add_option("--ub", bl_ub, "boundary state (comma-separated)")->required();
    c_bl->add_option("--a", bl_a, "shortcut for --param a=<v> (scalar-linear-bl)");
    c_bl->add_option("--horizon", bl_horizon, "shooting horizon")->capture_default_str();
    c_bl->add_option("--tol", bl_tol, "connection tolerance")->capture_default_str();

    // --- wave-fan ----------------------------------------------------------
    auto* c_wf = app.add_subcommand("wave-fan", "i-wave fan curve T_i(u-, s) and classification");
    CommonArgs a_wf;
    add_common(c_wf, a_wf);
    std::string wf_um;
    int wf_family = 1, wf_grid = 512;
    std::vector<double> wf_s;
    double wf_fp_tol = 1e-10, wf_contact = -1.0, wf_rh = 1e-8, wf_delta = 0.1;
    c_wf->add_option("--uminus", wf_um, "left state (comma-separated)")->required();
    c_wf->add_option("--family", wf_family, "characteristic family (1-based)")
        ->capture_default_str();
    c_wf->add_option("--s", wf_s, "signed strength (repeatable for a sweep)")
        ->required()
        ->take_all();
    c_wf->add_option("--grid-n", wf_grid, "tau grid points")->capture_default_str();
    c_wf->add_option("--fp-tol", wf_fp_tol, "fixed-point tolerance")->capture_default_str();
    c_wf->add_option("--contact-tol", wf_contact, "contact tolerance (-1 = auto)");
    c_wf->add_option("--rh-tol", wf_rh, "Rankine-Hugoniot tolerance")->capture_default_str();
    c_wf->add_option("--chart-delta", wf_delta, "chart radius for systems")
        ->capture_default_str();

    // --- riemann-sample ----------------------------------------------------
    auto* c_rs = app.add_subcommand("riemann-sample", "sample the self-similar fan solution");
    CommonArgs a_rs;
    add_common(c_rs, a_rs);
    std::string rs_um;
    int rs_family = 1, rs_nx = 201, rs_grid = 512;
    double rs_s = 0.0, rs_t = 1.0, rs_xmin = -2.0, rs_xmax = 2.0;
    c_rs->add_option("--uminus", rs_um, "left state")->required();
    c_rs->add_option("--family", rs_family, "characteristic family")->capture_default_str();
    c_rs->add_option("--s", rs_s, "signed strength")->required();
    c_rs->add_option("--t", rs_t, "sample time (> 0)")->capture_default_str();
    c_rs->add_option("--xmin", rs_xmin, "left end")->capture_default_str();
    c_rs->add_option("--xmax", rs_xmax, "right end")->capture_default_str();
    c_rs->add_option("--nx", rs_nx, "sample count")->capture_default_str();
    c_rs->add_option("--grid-n", rs_grid, "tau grid points")->capture_default_str();

    // --- hypotheses ---------------------------------------------------------
    auto* c_hy = app.add_subcommand("hypotheses", "check the singular-ODE hypotheses H1-H6");
    CommonArgs a_hy;
    add_common(c_hy, a_hy);
    double hy_radius = 0.1, hy_tol = 1e-8, hy_angle = 1e-3;
    int hy_samples = 200;
    c_hy->add_option("--radius", hy_radius, "sample-cloud radius")->capture_default_str();
    c_hy->add_option("--samples", hy_samples, "sample-cloud size")->capture_default_str();
    c_hy->add_option("--tol", hy_tol, "residual tolerance")->capture_default_str();
    c_hy->add_option("--tol-angle", hy_angle, "transversality angle")->capture_default_str();

    // --- singular-integrate --------------------------------------------------
    auto* c_si = app.add_subcommand("singular-integrate",
                                    "integrate dV/dt = F/zeta with a singular-set guard");
    CommonArgs a_si;
    add_common(c_si, a_si);
    std::string si_v0;
    double si_tend = 1.0, si_guard = -1.0, si_rtol = 1e-10;
    c_si->add_option("--v0", si_v0, "initial state (comma-separated)")->required();
    c_si->add_option("--t-end", si_tend, "integration horizon")->capture_default_str();
    c_si->add_option("--guard-tol", si_guard, "singular guard (-1 = 1e-8 (1+|V0|))");
    c_si->add_option("--rtol", si_rtol, "relative tolerance")->capture_default_str();

    // --- slow-fast -----------------------------------------------------------
    auto* c_sf = app.add_subcommand("slow-fast",
                                    "slow/fast decomposition on the uniformly stable chart");
    CommonArgs a_sf;
    add_common(c_sf, a_sf);
    std::string sf_coords;
    double sf_delta = 0.2, sf_nested = 0.05;
    c_sf->add_option("--coords", sf_coords,
                     "chart coordinates (S0 base..., stable...), comma-separated")
        ->required();
    c_sf->add_option("--delta", sf_delta, "slow-chart radius")->capture_default_str();
    c_sf->add_option("--nested-delta", sf_nested, "nested chart radius")->capture_default_str();

    // --- catalog -------------------------------------------------------------
    auto* c_cat = app.add_subcommand("catalog", "list the named systems");
    CommonArgs a_cat;
    add_common(c_cat, a_cat, /*needs_system=*/false);

    std::vector<std::string> tokens{argv[0]};
    try {
        for (auto& t : expand_config(argc, argv)) tokens.push_back(std::move(t));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    std::vector<const char*> cargv;
    cargv.reserve(tokens.size());
    for (auto& t : tokens) cargv.push_back(t.c_str());

    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (c_cat->parsed()) return run_catalog();

        if (c_spec->parsed()) {
            CatalogEntry entry = make_system(a_spec.system, parse_params(a_spec.params));
            SmoothField f = chart_field(entry, spec_ubar, spec_family);
            Mat A = f.jacobian(f.equilibrium);
            SpectralSplit split = classify_spectrum(A, spec_tol_zero);
            Json j = to_json(split);
            j["system"] = a_spec.system;
            write_json(out_path(a_spec.out, "spectrum.json"), j);
            std::cout << "spectrum: dims (s,u,c) = (" << split.dim_s() << "," << split.dim_u()
                      << "," << split.dim_c() << ")\n";
            return kExitOk;
        }

        for (auto [cmd, args, ch, center] :
             {std::tuple{c_cc, &a_cc, &g_cc, true}, std::tuple{c_sc, &a_sc, &g_sc, false}}) {
            if (!cmd->parsed()) continue;
            CatalogEntry entry = make_system(args->system, parse_params(args->params));
            SmoothField f = chart_field(entry, ch->ubar, ch->family);
            SpectralSplit split = classify_spectrum(f.jacobian(f.equilibrium));
            ChartParams p;
            p.delta = ch->delta;
            p.eta = ch->eta;
            p.horizon = ch->horizon;
            p.grid_n = ch->grid_n;
            p.h_target = ch->h_target;
            p.fp_tol = ch->fp_tol;
            p.max_iter = ch->max_iter;
            p.pts_per_axis = ch->pts;
            p.richardson = ch->richardson;
            p.jobs = args->jobs;
            ManifoldChart chart = center ? center_chart(f, split, p) : stable_chart(f, split, p);
            Json j = to_json(chart);
            j["system"] = args->system;
            write_json(out_path(args->out, center ? "center_chart.json" : "stable_chart.json"),
                       j);
            std::cout << (center ? "center" : "stable") << " chart: base dim "
                      << chart.base_dim() << ", tangency residual " << chart.tangency_residual
                      << ", contraction ratio " << chart.contraction_ratio << "\n";
            return kExitOk;
        }

        if (c_tw->parsed()) {
            CatalogEntry entry = make_system(a_tw.system, parse_params(a_tw.params));
            if (entry.kind != SystemKind::Flux)
                fail(ErrorKind::InvalidInput, "traveling-wave needs a flux system");
            ShootOptions so;
            so.horizon = tw_horizon;
            so.tol = tw_tol;
            Vec um = parse_vec(tw_um, entry.flux->N), up = parse_vec(tw_up, entry.flux->N);
            ConnectionResult res = solve_traveling_wave(*entry.flux, um, up, tw_sigma, so);
            Json j;
            j["system"] = a_tw.system;
            j["report"] = to_json(res.report);
            if (res.profile) {
                j["profile"] = profile_metadata(*res.profile);
                write_profile_csv(out_path(a_tw.out, "profile.csv"), *res.profile);
            }
            write_json(out_path(a_tw.out, "profile.json"), j);
            if (!res.report.connected) {
                std::cout << "no connection: " << res.report.detail << "\n";
                return kExitNegative;
            }
            std::cout << "traveling wave found (" << res.profile->y.size() << " points)\n";
            return kExitOk;
        }

        if (c_bl->parsed()) {
            auto params = parse_params(a_bl.params);
            if (!std::isnan(bl_a)) params["a"] = bl_a;
            CatalogEntry entry = make_system(a_bl.system, params);
            if (entry.kind != SystemKind::Flux)
                fail(ErrorKind::InvalidInput, "boundary-layer needs a flux system");
            ShootOptions so;
            so.horizon = bl_horizon;
            so.tol = bl_tol;
            Vec u0 = parse_vec(bl_u0, entry.flux->N), ub = parse_vec(bl_ub, entry.flux->N);
            BoundaryLayerResult res = boundary_layer_connect(*entry.flux, u0, ub, so);
            Json j;
            j["system"] = a_bl.system;
            j["admissible_dim"] = res.admissible_dim;
            j["report"] = to_json(res.report);
            if (res.profile) {
                j["profile"] = profile_metadata(*res.profile);
                write_profile_csv(out_path(a_bl.out, "boundary_layer.csv"), *res.profile);
            }
            write_json(out_path(a_bl.out, "boundary_layer.json"), j);
            if (!res.report.connected) {
                std::cout << "not admissible: " << res.report.detail << "\n";
                return kExitNegative;
            }
            std::cout << "boundary layer found (admissible dimension " << res.admissible_dim
                      << ")\n";
            return kExitOk;
        }

        if (c_wf->parsed()) {
            CatalogEntry entry = make_system(a_wf.system, parse_params(a_wf.params));
            if (entry.kind != SystemKind::Flux)
                fail(ErrorKind::InvalidInput, "wave-fan needs a flux system");
            Vec um = parse_vec(wf_um, entry.flux->N);
            WaveFanOptions wo;
            wo.grid_n = wf_grid;
            wo.fp_tol = wf_fp_tol;
            wo.contact_tol = wf_contact;
            wo.chart.delta = wf_delta;
            std::vector<Json> results(wf_s.size());
            std::vector<std::string> errors(wf_s.size());
            parallel_for(wf_s.size(), a_wf.jobs, [&](std::size_t i) {
                try {
                    WaveFanCurve curve =
                        wave_fan_fixed_point(*entry.flux, um, wf_family - 1, wf_s[i], wo);
                    WaveFan fan = classify_segments(*entry.flux, curve, wf_contact, wf_rh);
                    Json j = to_json(fan);
                    j["iterations"] = curve.iterations;
                    j["final_change"] = curve.final_change;
                    results[i] = j;
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            });
            for (const auto& err : errors)
                if (!err.empty()) fail(ErrorKind::NumericFailure, err);
            if (wf_s.size() == 1) {
                write_json(out_path(a_wf.out, "fan.json"), results[0]);
                WaveFanCurve curve =
                    wave_fan_fixed_point(*entry.flux, um, wf_family - 1, wf_s[0], wo);
                std::vector<std::string> header{"tau"};
                for (int i = 0; i < entry.flux->N; ++i) header.push_back("u" + std::to_string(i + 1));
                header.push_back("v");
                header.push_back("sigma");
                std::vector<std::vector<double>> rows;
                for (std::size_t k = 0; k < curve.tau.size(); ++k) {
                    std::vector<double> row{curve.tau[k]};
                    for (int i = 0; i < entry.flux->N; ++i) row.push_back(curve.u[k](i));
                    row.push_back(curve.v[k]);
                    row.push_back(curve.sigma[k]);
                    rows.push_back(std::move(row));
                }
                write_csv(out_path(a_wf.out, "fan_curve.csv"), header, rows);
                std::cout << "wave fan: " << results[0]["segments"].size() << " segment(s)\n";
            } else {
                Json sweep = Json::array();
                for (auto& r : results) sweep.push_back(r);
                write_json(out_path(a_wf.out, "fan.json"), sweep);
                std::cout << "wave-fan sweep over " << wf_s.size() << " strengths\n";
            }
            return kExitOk;
        }

        if (c_rs->parsed()) {
            CatalogEntry entry = make_system(a_rs.system, parse_params(a_rs.params));
            if (entry.kind != SystemKind::Flux)
                fail(ErrorKind::InvalidInput, "riemann-sample needs a flux system");
            Vec um = parse_vec(rs_um, entry.flux->N);
            WaveFanOptions wo;
            wo.grid_n = rs_grid;
            WaveFanCurve curve = wave_fan_fixed_point(*entry.flux, um, rs_family - 1, rs_s, wo);
            WaveFan fan = classify_segments(*entry.flux, curve, -1.0, 1e-8);
            std::vector<std::string> header{"t", "x"};
            for (int i = 0; i < entry.flux->N; ++i) header.push_back("u" + std::to_string(i + 1));
            std::vector<std::vector<double>> rows;
            for (int k = 0; k < rs_nx; ++k) {
                double x = rs_xmin + (rs_xmax - rs_xmin) * k / std::max(1, rs_nx - 1);
                Vec u = sample_solution(fan, curve, rs_t, x);
                std::vector<double> row{rs_t, x};
                for (int i = 0; i < entry.flux->N; ++i) row.push_back(u(i));
                rows.push_back(std::move(row));
            }
            write_csv(out_path(a_rs.out, "riemann_samples.csv"), header, rows);
            std::cout << "sampled " << rs_nx << " points at t = " << rs_t << "\n";
            return kExitOk;
        }

        if (c_hy->parsed()) {
            CatalogEntry entry = make_system(a_hy.system, parse_params(a_hy.params));
            if (entry.kind != SystemKind::Singular)
                fail(ErrorKind::InvalidInput, "hypotheses needs a singular system");
            HypothesisTols tols;
            tols.tol = hy_tol;
            tols.tol_angle = hy_angle;
            tols.seed = a_hy.seed;
            HypothesisReport rep = check_hypotheses(*entry.singular, hy_radius, hy_samples, tols);
            Json j = to_json(rep);
            j["system"] = a_hy.system;
            write_json(out_path(a_hy.out, "hypotheses.json"), j);
            for (int i = 1; i <= 6; ++i) {
                const auto& h = rep[i];
                std::cout << "H" << i << ": "
                          << (h.status == HypStatus::Pass ? "pass"
                              : h.status == HypStatus::Fail ? "FAIL"
                                                            : "untestable")
                          << " (residual " << h.residual << ")"
                          << (h.note.empty() ? "" : " - " + h.note) << "\n";
            }
            return rep.all_pass() ? kExitOk : kExitNegative;
        }

        if (c_si->parsed()) {
            CatalogEntry entry = make_system(a_si.system, parse_params(a_si.params));
            if (entry.kind != SystemKind::Singular)
                fail(ErrorKind::InvalidInput, "singular-integrate needs a singular system");
            Vec v0 = parse_vec(si_v0, entry.dim);
            SingularIntegrateOptions so;
            so.guard_tol = si_guard;
            so.rtol = si_rtol;
            SingularTrajectory out = integrate_singular(*entry.singular, v0, si_tend, so);
            std::vector<std::string> header{"t"};
            for (int i = 0; i < entry.dim; ++i) header.push_back("v" + std::to_string(i + 1));
            std::vector<std::vector<double>> rows;
            for (std::size_t k = 0; k < out.traj.times.size(); ++k) {
                std::vector<double> row{out.traj.times[k]};
                for (int i = 0; i < entry.dim; ++i) row.push_back(out.traj.states[k](i));
                rows.push_back(std::move(row));
            }
            write_csv(out_path(a_si.out, "trajectory.csv"), header, rows);
            Json j;
            j["system"] = a_si.system;
            j["steps"] = out.traj.stats.steps;
            j["t_end"] = out.traj.times.back();
            if (out.event) {
                j["singular_hit"] = true;
                j["hit_time"] = out.event->hit_time;
                j["derivative_growth"] = out.event->derivative_growth;
                Json st = Json::array();
                for (int i = 0; i < entry.dim; ++i) st.push_back(out.event->state(i));
                j["hit_state"] = st;
                std::cout << "singular hit at t = " << fmt17(out.event->hit_time) << "\n";
            } else {
                j["singular_hit"] = false;
                std::cout << "no singular hit up to t = " << fmt17(out.traj.times.back()) << "\n";
            }
            write_json(out_path(a_si.out, "event.json"), j);
            return kExitOk;
        }

        if (c_sf->parsed()) {
            CatalogEntry entry = make_system(a_sf.system, parse_params(a_sf.params));
            if (entry.kind != SystemKind::Singular)
                fail(ErrorKind::InvalidInput, "slow-fast needs a singular system");
            if (!entry.singular->equilibria)
                fail(ErrorKind::InvalidInput, "system has no equilibrium curve");
            SlowManifoldOptions so;
            so.chart.delta = sf_delta;
            so.chart.pts_per_axis = 3;
            so.chart.jobs = a_sf.jobs;
            ChartParams nested;
            nested.delta = sf_nested;
            nested.build_grid = false;
            SingularUsChart us =
                singular_us_chart(*entry.singular, *entry.singular->equilibria, so, nested);
            Vec coords = parse_vec(sf_coords, us.chart.base_dim());
            SlowFastDecomposition dec = us.decompose(coords);
            std::vector<std::string> header{"tau"};
            if (!dec.t.empty()) header.push_back("t");
            for (const char* part : {"total", "slow", "fast", "cross"})
                for (int i = 0; i < entry.dim; ++i)
                    header.push_back(std::string(part) + std::to_string(i + 1));
            std::vector<std::vector<double>> rows;
            for (std::size_t k = 0; k < dec.tau.size(); ++k) {
                std::vector<double> row{dec.tau[k]};
                if (!dec.t.empty()) row.push_back(dec.t[k]);
                for (const auto* arr : {&dec.total, &dec.slow, &dec.fast, &dec.cross})
                    for (int i = 0; i < entry.dim; ++i) row.push_back((*arr)[k](i));
                rows.push_back(std::move(row));
            }
            write_csv(out_path(a_sf.out, "slow_fast.csv"), header, rows);
            Json j;
            j["system"] = a_sf.system;
            j["fast_rate"] = dec.fast_rate;
            j["base_dim"] = us.chart.base_dim();
            j["physical_time_available"] = !dec.t.empty();
            write_json(out_path(a_sf.out, "slow_fast.json"), j);
            std::cout << "slow/fast decomposition: fast rate " << dec.fast_rate << "\n";
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}
