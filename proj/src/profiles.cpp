#include "vprof/profiles.hpp"

#include <algorithm>
#include <cmath>

namespace vprof {

namespace {

// d/dU [ (Df(U) - sigma I) p ] by central differences of Df.
Mat dDf_p(const FluxSystem& flux, const Vec& U, const Vec& p) {
    const int N = flux.N;
    Mat out(N, N);
    double h = 1e-6 * (1.0 + U.norm());
    Vec up = U, um = U;
    for (int j = 0; j < N; ++j) {
        up(j) += h;
        um(j) -= h;
        out.col(j) = ((flux.Df(up) - flux.Df(um)) * p) / (2.0 * h);
        up(j) = U(j);
        um(j) = U(j);
    }
    return out;
}

double fit_tail_rate(const std::vector<double>& y, const std::vector<Vec>& U, const Vec& limit,
                     bool at_right) {
    const std::size_t n = y.size();
    if (n < 8) return 0.0;
    std::size_t k = n / 5;
    std::vector<double> ts, ds;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t idx = at_right ? n - k + i : i;
        ts.push_back(y[idx]);
        ds.push_back((U[idx] - limit).norm());
    }
    return fit_exponential_rate(ts, ds);
}

} // namespace

TravelingWaveSystem build_tw_system(const FluxSystem& flux, const Vec& ubar, int family) {
    if (family < 0 || family >= flux.N)
        fail(ErrorKind::InvalidInput, "build_tw_system: family index out of range");
    EigenData ed = flux.eigen_data(ubar); // throws on hyperbolicity violation

    TravelingWaveSystem tw;
    tw.flux = flux;
    tw.family = family;
    tw.ubar = ubar;
    tw.lambda_bar = ed.lambda(family);
    tw.r_bar = ed.r.col(family);

    const int N = flux.N;
    const int d = 2 * N + 1;
    FluxSystem fx = flux;
    auto value = [fx, N](const Vec& V) {
        Vec U = V.head(N), p = V.segment(N, N);
        double sigma = V(2 * N);
        Vec out(V.size());
        out.head(N) = p;
        out.segment(N, N) = (fx.Df(U) - sigma * Mat::Identity(N, N)) * p;
        out(2 * N) = 0.0;
        return out;
    };
    auto jacobian = [fx, N](const Vec& V) {
        Vec U = V.head(N), p = V.segment(N, N);
        double sigma = V(2 * N);
        Mat J = Mat::Zero(V.size(), V.size());
        J.block(0, N, N, N) = Mat::Identity(N, N);
        J.block(N, 0, N, N) = dDf_p(fx, U, p);
        J.block(N, N, N, N) = fx.Df(U) - sigma * Mat::Identity(N, N);
        J.block(N, 2 * N, N, 1) = -p;
        return J;
    };
    Vec eq(d);
    eq.head(N) = ubar;
    eq.segment(N, N).setZero();
    eq(2 * N) = tw.lambda_bar;
    tw.field = make_field(d, value, jacobian, eq);
    return tw;
}

ReducedDirection reduced_direction(const TravelingWaveSystem& tw, const ManifoldChart& chart) {
    if (chart.kind != ChartKind::Center)
        fail(ErrorKind::InvalidInput, "reduced_direction: a center chart is required");
    if (tw.flux.N > 1 && chart.ambient_dim != tw.dim())
        fail(ErrorKind::InvalidInput, "reduced_direction: chart dimension mismatch");
    ReducedDirection rd;
    rd.tw = std::make_shared<TravelingWaveSystem>(tw);
    rd.chart = std::make_shared<ManifoldChart>(chart);
    return rd;
}

Vec ReducedDirection::operator()(const Vec& U, double v, double sigma) const {
    const int N = tw->flux.N;
    if (N == 1) return Vec::Ones(1); // exact scalar reduction

    // Locate the manifold point with u-component U, sigma-component sigma and
    // |p| = |v|. The chart is a graph over the center space, so the iteration
    // x_u += U - U', a *= |v|/|p'| converges at the rate of the quadratic
    // corrections.
    const double probe = 1e-4;
    bool tiny = std::abs(v) < 1e-6;

    auto solve_dir = [&](double a_req) {
        Vec xu = U - tw->ubar;
        double xs = sigma - tw->lambda_bar;
        double a = a_req;
        Vec p_out;
        for (int it = 0; it < 8; ++it) {
            Vec x(tw->dim());
            x.head(N) = xu;
            x.segment(N, N) = a * tw->r_bar;
            x(2 * N) = xs;
            Vec point = chart->phi_exact(chart->base_coords(Vec(chart->equilibrium + x)));
            Vec Up = point.head(N);
            p_out = point.segment(N, N);
            double sp = point(2 * N);
            double pn = p_out.norm();
            if (pn < 1e-300) fail(ErrorKind::NumericFailure, "reduced_direction: vanishing p");
            double unorm = (Up - U).norm() + std::abs(sp - sigma);
            double scale_err = std::abs(pn - std::abs(a_req)) / std::max(1e-12, std::abs(a_req));
            xu += U - Up;
            xs += sigma - sp;
            a *= std::abs(a_req) / pn;
            if (unorm <= 1e-12 && scale_err <= 1e-12) break;
        }
        return Vec(p_out / p_out.norm() * (a_req >= 0 ? 1.0 : -1.0));
    };

    if (!tiny) return solve_dir(v);
    // At v ~ 0 use two probes and extrapolate the O(a) dependence away.
    Vec r1 = solve_dir(probe);
    Vec r2 = solve_dir(probe / 2);
    Vec r = 2.0 * r2 - r1;
    return r / r.norm();
}

double generalized_eigenvalue(const TravelingWaveSystem& tw, const ReducedDirection& rdir,
                              const Vec& U, double v, double sigma) {
    Vec r = rdir(U, v, sigma);
    return (tw.flux.Df(U) * r).dot(r);
}

Vec Profile::sample(double y_query) const {
    if (!dense) fail(ErrorKind::InvalidInput, "profile has no dense data");
    double t = y_query + y_shift;
    double lo = std::min(dense->t_begin(), dense->t_end());
    double hi = std::max(dense->t_begin(), dense->t_end());
    if (t <= lo) return dense->t_begin() <= dense->t_end() ? dense->states.front()
                                                          : dense->states.back();
    if (t >= hi) return dense->t_begin() <= dense->t_end() ? dense->states.back()
                                                           : dense->states.front();
    return dense_eval(*dense, t);
}

Vec Profile::sample_derivative(double y_query) const {
    double h = 5e-3;
    return (-sample(y_query + 2 * h) + 8.0 * sample(y_query + h) - 8.0 * sample(y_query - h) +
            sample(y_query - 2 * h)) /
           (12.0 * h);
}

namespace {

// Build a Profile from a dense integration of the profile ODE, normalizing
// the translation so that U_1(0) is the average of the endpoint first
// components.
Profile finalize_profile(const IntegrationResult& res, const Vec& u_left, const Vec& u_right,
                         double sigma, const std::function<Vec(const Vec&)>& deriv,
                         int n_grid = 801) {
    Profile prof;
    prof.u_left = u_left;
    prof.u_right = u_right;
    prof.sigma = sigma;

    double t0 = res.t_begin(), t1 = res.t_end();
    double mid = 0.5 * (u_left(0) + u_right(0));
    // First crossing of the midpoint, located on the dense output.
    double tstar = 0.5 * (t0 + t1);
    bool found = false;
    const int scan = 4000;
    double prev_t = t0;
    double prev_g = res.states.front()(0) - mid;
    for (int i = 1; i <= scan; ++i) {
        double t = t0 + (t1 - t0) * i / scan;
        double g = dense_eval(res, t)(0) - mid;
        if (prev_g == 0.0 || prev_g * g < 0.0) {
            double a = prev_t, b = t, ga = prev_g;
            for (int it = 0; it < 80; ++it) {
                double m = 0.5 * (a + b);
                double gm = dense_eval(res, m)(0) - mid;
                if (ga * gm <= 0) b = m;
                else { a = m; ga = gm; }
            }
            tstar = 0.5 * (a + b);
            found = true;
            break;
        }
        prev_t = t;
        prev_g = g;
    }
    if (!found) tstar = 0.5 * (t0 + t1);

    prof.y_shift = tstar;
    auto shared = std::make_shared<IntegrationResult>(res);
    prof.dense = shared;

    prof.y.resize(n_grid);
    prof.U.resize(n_grid);
    prof.p.resize(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        double t = t0 + (t1 - t0) * i / (n_grid - 1);
        prof.y[i] = t - tstar;
        prof.U[i] = dense_eval(res, t);
        prof.p[i] = deriv(prof.U[i]);
    }
    prof.rate_left = fit_tail_rate(prof.y, prof.U, u_left, false);
    prof.rate_right = fit_tail_rate(prof.y, prof.U, u_right, true);
    return prof;
}

Profile constant_profile(const Vec& u, double sigma) {
    Profile prof;
    prof.u_left = u;
    prof.u_right = u;
    prof.sigma = sigma;
    const int n = 9;
    for (int i = 0; i < n; ++i) {
        prof.y.push_back(-4.0 + i);
        prof.U.push_back(u);
        prof.p.push_back(Vec::Zero(u.size()));
    }
    return prof;
}

struct ShotOutcome {
    double miss = std::numeric_limits<double>::infinity();
    bool connected = false;
    IntegrationResult res;
};

// Integrate the profile field from a seed near the source equilibrium and
// measure the closest approach to the target.
ShotOutcome shoot(const OdeField& rhs, const Vec& seed, const Vec& target, double horizon,
                  double tol, double rtol, double blow_up, double h_max = 0.0) {
    ShotOutcome out;
    std::vector<Event> events;
    events.push_back({[&target, tol](double, const Vec& y) {
                          return (y - target).norm() - 0.2 * tol;
                      },
                      true, "arrive"});
    events.push_back({[blow_up](double, const Vec& y) { return y.norm() - blow_up; }, true,
                      "blow-up"});
    IntegrateOptions opt;
    opt.rtol = rtol;
    opt.atol = 1e-14;
    opt.h_max = h_max;
    double H = horizon;
    for (int attempt = 0; attempt < 4; ++attempt) {
        IntegrationResult res;
        try {
            res = integrate(rhs, seed, 0.0, H, opt, events);
        } catch (const Error&) {
            break; // stiffness or step failure: treat as a miss
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < res.states.size(); ++i)
            best = std::min(best, (res.states[i] - target).norm());
        if (best < out.miss) {
            out.miss = best;
            out.res = res;
        }
        if (res.event && res.event->name == "arrive") {
            out.connected = true;
            out.res = res;
            return out;
        }
        if (res.event && res.event->name == "blow-up") return out;
        H *= 2.0;
    }
    return out;
}

} // namespace

ConnectionResult solve_traveling_wave(const FluxSystem& flux, const Vec& um, const Vec& up,
                                      double sigma, const ShootOptions& opt) {
    const int N = flux.N;
    if (um.size() != N || up.size() != N)
        fail(ErrorKind::InvalidInput, "solve_traveling_wave: state dimension mismatch");
    flux.eigen_data(um);
    flux.eigen_data(up);

    ConnectionResult out;
    out.report.rh_residual = rankine_hugoniot_residual(flux, um, up, sigma);
    if (out.report.rh_residual > opt.tol) {
        out.report.detail = "Rankine-Hugoniot residual above tolerance";
        out.report.miss_distance = out.report.rh_residual;
        return out;
    }

    // First integral of the traveling-wave equation.
    Vec c = flux.f(um) - sigma * um;
    FluxSystem fx = flux;
    auto W = [fx, sigma, c](const Vec& U) { return Vec(fx.f(U) - sigma * U - c); };
    OdeField rhs = [W](double, const Vec& y) { return W(y); };

    if ((up - um).norm() <= opt.tol) {
        out.profile = constant_profile(um, sigma);
        out.report.connected = true;
        out.report.detail = "constant profile";
        return out;
    }

    // Unstable directions of the profile field at u-: eigenvalues of
    // Df(u-) - sigma I with positive real part.
    EigenData edm = flux.eigen_data(um);
    std::vector<int> unstable;
    for (int i = 0; i < N; ++i)
        if (edm.lambda(i) - sigma > 1e-10 * (1.0 + std::abs(sigma))) unstable.push_back(i);
    if (unstable.empty()) {
        out.report.detail = "no unstable directions at u-";
        out.report.miss_distance = (up - um).norm();
        return out;
    }

    double blow_up = 10.0 * (um.norm() + up.norm() + 1.0);
    ShotOutcome best;
    if (unstable.size() == 1) {
        // One-dimensional unstable manifold: trace both ends.
        Vec dir = edm.r.col(unstable[0]);
        for (double sgn : {1.0, -1.0}) {
            Vec seed = um + sgn * opt.seed_offset * dir;
            ShotOutcome shot =
                shoot(rhs, seed, up, opt.horizon, opt.tol, opt.rtol, blow_up, opt.h_max);
            if (shot.connected || shot.miss < best.miss) best = std::move(shot);
            if (best.connected) break;
        }
    } else {
        // Coordinate search over directions in the unstable subspace.
        Mat B(N, static_cast<int>(unstable.size()));
        for (std::size_t j = 0; j < unstable.size(); ++j) B.col(j) = edm.r.col(unstable[j]);
        int k = static_cast<int>(unstable.size());
        Vec theta = Vec::Zero(k);
        theta(0) = 1.0;
        auto miss_of = [&](const Vec& th) {
            Vec d = B * th;
            if (d.norm() < 1e-12) return std::numeric_limits<double>::infinity();
            Vec seed = um + opt.seed_offset * d / d.norm();
            ShotOutcome shot =
                shoot(rhs, seed, up, opt.horizon, opt.tol, opt.rtol, blow_up, opt.h_max);
            if (shot.connected || shot.miss < best.miss) best = std::move(shot);
            return best.connected ? 0.0 : shot.miss;
        };
        double step = 1.0;
        miss_of(theta);
        for (int round = 0; round < 24 && !best.connected; ++round) {
            bool improved = false;
            for (int j = 0; j < k && !best.connected; ++j) {
                for (double s : {step, -step}) {
                    Vec cand = theta;
                    cand(j) += s;
                    double m = miss_of(cand);
                    if (m < best.miss || best.connected) {
                        theta = cand;
                        improved = true;
                        break;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
    }

    out.report.miss_distance = best.connected ? 0.0 : best.miss;
    if (!best.connected) {
        out.report.detail = "no connection: closest approach " + fmt17(best.miss);
        return out;
    }
    out.report.connected = true;
    out.profile = finalize_profile(best.res, um, up, sigma, W);
    return out;
}

BoundaryLayerResult boundary_layer_connect(const FluxSystem& flux, const Vec& u0, const Vec& ub,
                                           const ShootOptions& opt) {
    const int N = flux.N;
    if (u0.size() != N || ub.size() != N)
        fail(ErrorKind::InvalidInput, "boundary_layer_connect: state dimension mismatch");
    EigenData ed = flux.eigen_data(u0);
    double scale = 1.0 + ed.lambda.cwiseAbs().maxCoeff();
    for (int i = 0; i < N; ++i)
        if (std::abs(ed.lambda(i)) <= 1e-8 * scale)
            fail(ErrorKind::DegenerateEigenvalue,
                 "boundary_layer_connect: eigenvalue " + fmt17(ed.lambda(i)) +
                     " at u0 is numerically zero");

    BoundaryLayerResult out;
    for (int i = 0; i < N; ++i)
        if (ed.lambda(i) < 0) ++out.admissible_dim;

    FluxSystem fx = flux;
    Vec f0 = flux.f(u0);
    auto W = [fx, f0](const Vec& U) { return Vec(fx.f(U) - f0); };
    OdeField rhs = [W](double, const Vec& y) { return W(y); };

    if ((ub - u0).norm() <= opt.tol) {
        out.profile = constant_profile(u0, 0.0);
        out.profile->u_left = ub;
        out.report.connected = true;
        out.report.detail = "constant profile";
        return out;
    }
    if (out.admissible_dim == 0) {
        out.report.detail = "no stable directions at u0";
        out.report.miss_distance = (ub - u0).norm();
        return out;
    }

    double blow_up = 10.0 * (u0.norm() + ub.norm() + 1.0);
    ShotOutcome shot = shoot(rhs, ub, u0, opt.horizon, opt.tol, opt.rtol, blow_up, opt.h_max);
    if (!shot.connected) {
        out.report.miss_distance = shot.miss;
        out.report.detail = "u_b is not on the stable manifold of u0 (closest approach " +
                            fmt17(shot.miss) + ")";
        return out;
    }

    // Build the profile on [0, X]; translation is fixed by the data U(0)=ub.
    Profile prof;
    prof.u_left = ub;
    prof.u_right = u0;
    prof.sigma = 0.0;
    auto shared = std::make_shared<IntegrationResult>(shot.res);
    prof.dense = shared;
    prof.y_shift = 0.0;
    const int n_grid = 801;
    double t1 = shot.res.t_end();
    for (int i = 0; i < n_grid; ++i) {
        double t = t1 * i / (n_grid - 1);
        prof.y.push_back(t);
        prof.U.push_back(dense_eval(shot.res, t));
        prof.p.push_back(W(prof.U.back()));
    }
    prof.rate_right = fit_tail_rate(prof.y, prof.U, u0, true);
    prof.rate_left = prof.rate_right;
    out.profile = std::move(prof);
    out.report.connected = true;
    return out;
}

} // namespace vprof
