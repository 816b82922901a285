#include <doctest.h>

#include <cmath>
#include <random>

#include "vprof/riemann.hpp"

using namespace vprof;

namespace {

FluxSystem burgers() {
    return make_flux(
        1, [](const Vec& u) { return Vec(0.5 * u.array().square().matrix()); },
        [](const Vec& u) { return Mat(Mat::Constant(1, 1, u(0))); });
}

Vec scal(double x) { return Vec::Constant(1, x); }

// O(n^2) oracle: the convex envelope value at grid point k is the minimum
// over all chords (i <= k <= j) of their value at tau_k (including the
// degenerate chord i = j = k).
std::vector<double> chord_envelope_oracle(const std::vector<double>& tau,
                                          const std::vector<double>& f) {
    const int n = static_cast<int>(tau.size());
    std::vector<double> env(n);
    for (int k = 0; k < n; ++k) {
        double best = f[k];
        for (int i = 0; i <= k; ++i)
            for (int j = k; j < n; ++j) {
                if (i == j) continue;
                double w = (tau[k] - tau[i]) / (tau[j] - tau[i]);
                best = std::min(best, f[i] + w * (f[j] - f[i]));
            }
        env[k] = best;
    }
    return env;
}

// Classical scalar Riemann solution built directly from the envelope of the
// flux between u- and u+ (independent of the wave-fan machinery). The value
// at xi = x/t minimizes env(u) - xi u over [u-, u+] (maximizes it for the
// concave branch); on contact pieces the grid argmin is refined by Newton on
// the exact characteristic equation f'(u) = xi.
struct ScalarClassical {
    std::vector<double> ugrid, envv, vals;
    std::function<double(double)> f;
    double um, up;
    bool increasing = true;

    static ScalarClassical build(const std::function<double(double)>& f, double um, double up,
                                 int n) {
        ScalarClassical sc;
        sc.f = f;
        sc.um = um;
        sc.up = up;
        sc.increasing = um < up;
        double lo = std::min(um, up), hi = std::max(um, up);
        sc.ugrid.resize(n);
        sc.vals.resize(n);
        for (int i = 0; i < n; ++i) {
            sc.ugrid[i] = lo + (hi - lo) * i / (n - 1.0);
            sc.vals[i] = f(sc.ugrid[i]);
        }
        if (sc.increasing) {
            sc.envv = chord_envelope_oracle(sc.ugrid, sc.vals);
        } else {
            std::vector<double> neg(n);
            for (int i = 0; i < n; ++i) neg[i] = -sc.vals[i];
            sc.envv = chord_envelope_oracle(sc.ugrid, neg);
            for (int i = 0; i < n; ++i) sc.envv[i] = -sc.envv[i];
        }
        return sc;
    }

    double eval(double t, double x) const {
        double xi = x / t;
        int n = static_cast<int>(ugrid.size());
        int best = 0;
        double bestval = envv[0] - xi * ugrid[0];
        for (int i = 1; i < n; ++i) {
            double o = envv[i] - xi * ugrid[i];
            bool better = increasing ? (o < bestval) : (o > bestval);
            if (better) {
                bestval = o;
                best = i;
            }
        }
        if (best == 0) return increasing ? um : up;
        if (best == n - 1) return increasing ? up : um;
        // Interior optimum on a contact piece: refine f'(u) = xi by Newton.
        if (std::abs(envv[best] - vals[best]) <= 1e-10 * (1.0 + std::abs(vals[best]))) {
            double u = ugrid[best];
            double cell = ugrid[1] - ugrid[0];
            for (int it = 0; it < 60; ++it) {
                double h = 1e-6;
                double fp = (f(u + h) - f(u - h)) / (2 * h);
                double fpp = (f(u + h) - 2 * f(u) + f(u - h)) / (h * h);
                if (std::abs(fpp) < 1e-12) break;
                double step = (fp - xi) / fpp;
                step = std::clamp(step, -cell, cell);
                u -= step;
                if (std::abs(step) < 1e-13) break;
            }
            return u;
        }
        return ugrid[best];
    }
};

} // namespace

TEST_SUITE("riemann") {

TEST_CASE("envelope of a convex sample is the sample itself") {
    int n = 101;
    std::vector<double> tau(n), f(n);
    for (int i = 0; i < n; ++i) {
        tau[i] = i / (n - 1.0);
        f[i] = tau[i] * tau[i];
    }
    EnvelopeResult env = convex_envelope(tau, f, -1.0);
    for (int i = 0; i < n; ++i) {
        CHECK(std::abs(env.env[i] - f[i]) <= 1e-12);
        CHECK(env.contact[i]);
    }
}

TEST_CASE("envelope of a concave sample is the chord, contact only at the ends") {
    int n = 101;
    double s = 1.0;
    std::vector<double> tau(n), f(n);
    for (int i = 0; i < n; ++i) {
        tau[i] = s * i / (n - 1.0);
        f[i] = -(tau[i] - s / 2) * (tau[i] - s / 2);
    }
    EnvelopeResult env = convex_envelope(tau, f, -1.0);
    double fa = f.front(), fb = f.back();
    for (int i = 0; i < n; ++i)
        CHECK(std::abs(env.env[i] - (fa + (fb - fa) * tau[i] / s)) <= 1e-12);
    CHECK(env.contact.front());
    CHECK(env.contact.back());
    for (int i = 1; i + 1 < n; ++i) CHECK_FALSE(env.contact[i]);
}

TEST_CASE("envelope matches the O(n^2) chord oracle on random piecewise data") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> ur(-1.0, 1.0);
    const int n = 200;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> tau(n), f(n);
        // Random piecewise-linear-plus-kinks sample.
        int n_knots = 5 + static_cast<int>(8 * (0.5 + 0.5 * ur(rng)));
        std::vector<double> kx(n_knots), ky(n_knots);
        for (int j = 0; j < n_knots; ++j) {
            kx[j] = j / (n_knots - 1.0);
            ky[j] = ur(rng);
        }
        for (int i = 0; i < n; ++i) {
            tau[i] = i / (n - 1.0);
            int j = std::min(n_knots - 2, static_cast<int>(tau[i] * (n_knots - 1)));
            double w = tau[i] * (n_knots - 1) - j;
            f[i] = ky[j] + w * (ky[j + 1] - ky[j]);
        }
        EnvelopeResult env = convex_envelope(tau, f, -1.0);
        std::vector<double> oracle = chord_envelope_oracle(tau, f);
        double scale = 1.0;
        for (int i = 0; i < n; ++i) {
            CHECK(std::abs(env.env[i] - oracle[i]) <= 1e-12);
            CHECK(env.env[i] <= f[i] + 1e-12 * scale);
        }
        // Discrete convexity of the envelope.
        for (int i = 1; i + 1 < n; ++i)
            CHECK(env.env[i + 1] - 2 * env.env[i] + env.env[i - 1] >= -1e-12);
        // Equality at both endpoints.
        CHECK(env.env.front() == f.front());
        CHECK(env.env.back() == f.back());

        // Bit-exact idempotency.
        EnvelopeResult env2 = convex_envelope(tau, env.env, -1.0);
        for (int i = 0; i < n; ++i) CHECK(env2.env[i] == env.env[i]);
    }
}

TEST_CASE("envelope input validation") {
    CHECK_THROWS_AS(convex_envelope({0.0}, {1.0}, -1.0), Error);
    CHECK_THROWS_AS(convex_envelope({0.0, 1.0}, {1.0, std::nan("")}, -1.0), Error);
    CHECK_THROWS_AS(convex_envelope({0.0, 1.0, 1.5}, {1.0, 2.0, 3.0}, -1.0), Error);
}

TEST_CASE("Burgers wave fan, s = 1: pure rarefaction with sigma = tau") {
    FluxSystem fx = burgers();
    WaveFanCurve curve = wave_fan_fixed_point(fx, scal(0.0), 0, 1.0);
    double sup_u = 0.0, sup_sigma = 0.0, sup_v = 0.0;
    for (std::size_t k = 0; k < curve.tau.size(); ++k) {
        sup_u = std::max(sup_u, std::abs(curve.u[k](0) - curve.tau[k]));
        sup_sigma = std::max(sup_sigma, std::abs(curve.sigma[k] - curve.tau[k]));
        sup_v = std::max(sup_v, std::abs(curve.v[k]));
    }
    CHECK(sup_u <= 1e-6);
    CHECK(sup_sigma <= 1e-6);
    CHECK(sup_v <= 1e-10);

    WaveFan fan = classify_segments(fx, curve, -1.0, 1e-8);
    REQUIRE(fan.segments.size() == 1);
    CHECK_FALSE(fan.segments[0].is_jump);
    CHECK(fan.segments[0].rarefaction.speed_from == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(fan.segments[0].rarefaction.speed_to == doctest::Approx(1.0).epsilon(1e-6));

    // Inside the fan the solution is x/t.
    CHECK(sample_solution(fan, curve, 1.0, 0.5)(0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(sample_solution(fan, curve, 1.0, -5.0)(0) == 0.0); // far left
    CHECK(sample_solution(fan, curve, 1.0, 5.0)(0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Burgers wave fan, s = -1: one jump at speed -1/2") {
    FluxSystem fx = burgers();
    WaveFanCurve curve = wave_fan_fixed_point(fx, scal(0.0), 0, -1.0);
    WaveFan fan = classify_segments(fx, curve, -1.0, 1e-8);
    REQUIRE(fan.segments.size() == 1);
    REQUIRE(fan.segments[0].is_jump);
    const Jump& j = fan.segments[0].jump;
    CHECK(j.speed == doctest::Approx(-0.5).epsilon(1e-8));
    CHECK(j.u_from(0) == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(j.u_to(0) == doctest::Approx(-1.0).epsilon(1e-8));
    CHECK(j.rh_residual <= 1e-8);

    // Shock at x = -t/2: left of it u-, right of it u(s).
    CHECK(sample_solution(fan, curve, 2.0, -1.2)(0) == doctest::Approx(0.0));
    CHECK(sample_solution(fan, curve, 2.0, -0.8)(0) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(sample_solution(fan, curve, -1.0, 0.0), Error);
}

TEST_CASE("zero strength collapses to the base state with no segments") {
    FluxSystem fx = burgers();
    WaveFanCurve curve = wave_fan_fixed_point(fx, scal(0.3), 0, 0.0);
    CHECK(curve.u[0](0) == 0.3);
    WaveFan fan = classify_segments(fx, curve, -1.0, 1e-8);
    CHECK(fan.segments.empty());
    CHECK(wave_fan_curve_value(fx, scal(0.3), 0, 0.0)(0) == 0.3);
}

TEST_CASE("scalar wave-fan curve is T(0, s) = s for both signs") {
    FluxSystem fx = burgers();
    for (double s : {-0.5, -0.2, 0.1, 0.35, 0.5}) {
        Vec T = wave_fan_curve_value(fx, scal(0.0), 0, s);
        CHECK(T(0) == doctest::Approx(s).epsilon(1e-8));
    }
    // Continuity in s along a sampled grid.
    double prev = -0.5;
    Vec prevT = wave_fan_curve_value(fx, scal(0.0), 0, prev);
    for (double s = -0.45; s <= 0.5; s += 0.05) {
        Vec T = wave_fan_curve_value(fx, scal(0.0), 0, s);
        CHECK((T - prevT).norm() <= 2.0 * std::abs(s - prev) + 1e-8);
        prevT = T;
        prev = s;
    }
}

TEST_CASE("linear flux: T_i(u-, s) = u- + s r_i and lambda~ constant") {
    Mat L(2, 2);
    L << 0, 1, 1, 0; // eigenvalues -1, 1
    FluxSystem fx = make_flux(2, [L](const Vec& u) { return Vec(L * u); },
                              [L](const Vec&) { return L; });
    Vec um(2);
    um << 0.02, -0.01;
    EigenData ed = fx.eigen_data(um);
    WaveFanOptions opt;
    opt.grid_n = 65;
    opt.chart.delta = 0.12;
    opt.chart.fp_tol = 1e-11;
    for (double s : {-0.05, 0.04}) {
        for (int family : {0, 1}) {
            Vec T = wave_fan_curve_value(fx, um, family, s, opt);
            Vec expect = um + s * ed.r.col(family);
            CHECK((T - expect).norm() <= 1e-6);
        }
    }
    // A linear f_i has envelope equal to itself: single rarefaction.
    WaveFanCurve curve = wave_fan_fixed_point(fx, um, 1, 0.05, opt);
    WaveFan fan = classify_segments(fx, curve, -1.0, 1e-6);
    REQUIRE(fan.segments.size() == 1);
    CHECK_FALSE(fan.segments[0].is_jump);
    // |u'(tau)| = 1: the curve is traced by a unit field.
    for (std::size_t k = 0; k + 1 < curve.tau.size(); ++k) {
        double speed = (curve.u[k + 1] - curve.u[k]).norm() /
                       std::abs(curve.tau[k + 1] - curve.tau[k]);
        CHECK(speed == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("scalar pipeline agrees with the classical envelope construction") {
    // Non-convex flux so that the fan mixes rarefactions and shocks.
    auto fcubic = [](double u) { return u * u * u / 3.0 + 0.1 * u; };
    FluxSystem fx = make_flux(
        1, [fcubic](const Vec& u) { return Vec(Vec::Constant(1, fcubic(u(0)))); },
        [](const Vec& u) { return Mat(Mat::Constant(1, 1, u(0) * u(0) + 0.1)); });

    std::mt19937 rng(7);
    std::uniform_real_distribution<double> ur(0.05, 0.9);
    for (int trial = 0; trial < 3; ++trial) {
        double um = -0.6 + 0.3 * trial;
        double s = (trial % 2 == 0 ? 1.0 : -1.0) * ur(rng);
        WaveFanOptions opt;
        opt.grid_n = 2048;
        WaveFanCurve curve = wave_fan_fixed_point(fx, scal(um), 0, s, opt);
        WaveFan fan = classify_segments(fx, curve, -1.0, 1e-7);
        double up = fan.u_plus(0);
        ScalarClassical oracle = ScalarClassical::build(fcubic, um, up, 1000);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            double t = 0.5 + (i % 7) * 0.35;
            double x = -2.0 + 4.0 * i / 999.0;
            double mine = sample_solution(fan, curve, t, x)(0);
            double ref = oracle.eval(t, x);
            // Skip points near segment-boundary speeds: the oracle resolves
            // shock positions and contact boundaries only to its u-grid.
            bool near_boundary = false;
            for (const auto& seg : fan.segments) {
                double lo = seg.is_jump ? seg.jump.speed : seg.rarefaction.speed_from;
                double hi = seg.is_jump ? seg.jump.speed : seg.rarefaction.speed_to;
                if (std::abs(x / t - lo) < 5e-3 || std::abs(x / t - hi) < 5e-3)
                    near_boundary = true;
            }
            if (!near_boundary) worst = std::max(worst, std::abs(mine - ref));
        }
        CHECK(worst <= 2e-6);
    }
}

TEST_CASE("nonlinear 2x2 flux: reduced direction and wave fan") {
    // f(u1,u2) = (u2 + u1^2/2, u1 + u2^2/2): Df = [[u1, 1], [1, u2]] has real
    // distinct eigenvalues everywhere near 0 (Df(0) eigenvalues -1, 1).
    FluxSystem fx = make_flux(
        2,
        [](const Vec& u) {
            Vec f(2);
            f << u(1) + 0.5 * u(0) * u(0), u(0) + 0.5 * u(1) * u(1);
            return f;
        },
        [](const Vec& u) {
            Mat J(2, 2);
            J << u(0), 1, 1, u(1);
            return J;
        });
    Vec um = Vec::Zero(2);
    TravelingWaveSystem tw = build_tw_system(fx, um, 0);
    CHECK(tw.lambda_bar == doctest::Approx(-1.0));
    SpectralSplit split = classify_spectrum(tw.field.jacobian(tw.field.equilibrium));
    REQUIRE(split.dim_c() == 4); // N + 2
    REQUIRE(split.dim_u() == 1);

    ChartParams p;
    p.delta = 0.1;
    p.build_grid = false;
    p.fp_tol = 1e-10;
    p.h_target = 0.04;
    p.richardson = true;
    ManifoldChart chart = center_chart(tw.field, split, p);
    ReducedDirection rd = reduced_direction(tw, chart);

    // Tangency at the base point and unit length away from it.
    CHECK((rd(um, 0.0, tw.lambda_bar) - tw.r_bar).norm() <= 1e-6);
    Vec U(2);
    U << 0.02, -0.01;
    Vec r = rd(U, 0.03, tw.lambda_bar + 0.02);
    CHECK(std::abs(r.norm() - 1.0) <= 1e-12);

    // The chart point (U, v r~, sigma) lies on a locally invariant surface:
    // integrating the augmented field keeps the trajectory on the chart.
    double v = 0.03, sigma = tw.lambda_bar + 0.02;
    Vec amb(5);
    amb.head(2) = U - um;
    amb.segment(2, 2) = v * r;
    amb(4) = sigma - tw.lambda_bar;
    Vec x = chart.base_coords(Vec(chart.equilibrium + amb));
    Vec start = chart.phi_exact(x);
    OdeField rhs = [&tw](double, const Vec& y) { return tw.field.value(y); };
    IntegrateOptions io;
    io.rtol = 1e-12;
    io.atol = 1e-14;
    auto res = integrate(rhs, start, 0.0, 0.5, io);
    CHECK(chart.distance_to(res.y_end()) <= 1e-8);

    // Wave fan through the nonlinear reduction: generic invariants.
    WaveFanOptions wo;
    wo.grid_n = 33;
    wo.fp_tol = 1e-9;
    wo.chart = p;
    wo.chart.richardson = false;
    for (double s : {0.04, -0.04}) {
        WaveFanCurve curve = wave_fan_fixed_point(fx, um, 0, s, wo);
        for (std::size_t k = 0; k + 1 < curve.sigma.size(); ++k)
            CHECK(curve.sigma[k + 1] >= curve.sigma[k] - 1e-9);
        for (std::size_t k = 0; k + 1 < curve.tau.size(); ++k) {
            double speed = (curve.u[k + 1] - curve.u[k]).norm() /
                           std::abs(curve.tau[k + 1] - curve.tau[k]);
            CHECK(std::abs(speed - 1.0) <= 1e-4); // traced by a unit field
        }
        WaveFan fan = classify_segments(fx, curve, -1.0, 1e-6);
        CHECK(!fan.segments.empty());
        // First family, convex-ish f_1 along the curve: s > 0 rarefies,
        // s < 0 produces a jump satisfying Rankine-Hugoniot.
        for (const auto& seg : fan.segments)
            if (seg.is_jump) CHECK(seg.jump.rh_residual <= 1e-6);
        Vec T = wave_fan_curve_value(fx, um, 0, s, wo);
        CHECK((T - curve.u.back()).norm() <= 1e-12);
    }
}

TEST_CASE("speed monotonicity along converged curves") {
    FluxSystem fx = burgers();
    for (double s : {1.0, -1.0, 0.6, -0.3}) {
        WaveFanCurve curve = wave_fan_fixed_point(fx, scal(0.1), 0, s);
        for (std::size_t k = 0; k + 1 < curve.sigma.size(); ++k)
            CHECK(curve.sigma[k + 1] >= curve.sigma[k] - 1e-12);
    }
}

} // TEST_SUITE
