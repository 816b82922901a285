#include <doctest.h>

#include <cmath>

#include "vprof/manifolds.hpp"
#include "vprof/odeint.hpp"

using namespace vprof;

namespace {

// Planar test field x' = x y, y' = -y - x^2.
SmoothField planar_field() {
    return make_field(
        2,
        [](const Vec& v) {
            Vec f(2);
            f << v(0) * v(1), -v(1) - v(0) * v(0);
            return f;
        },
        [](const Vec& v) {
            Mat J(2, 2);
            J << v(1), v(0), -2 * v(0), -1;
            return J;
        });
}

// Independent oracle: power-series solution of the invariance equation
// phi'(x) (x phi(x)) = -phi(x) - x^2 for the planar field, phi = sum a_k x^k.
// Matching powers gives a_2 = -1, a_3 = 0, and for k >= 4
//   a_k = - sum_{j+l=k, j,l>=2} j a_j a_l   (from the x*phi term).
std::vector<double> planar_series(int order) {
    std::vector<double> a(order + 1, 0.0);
    a[2] = -1.0;
    for (int k = 3; k <= order; ++k) {
        double s = 0.0;
        for (int j = 2; j <= k - 2; ++j) {
            int l = k - j;
            if (l >= 2) s += j * a[j] * a[l];
        }
        a[k] = -s;
    }
    return a;
}

double planar_series_eval(const std::vector<double>& a, double x) {
    double y = 0.0;
    for (int k = static_cast<int>(a.size()) - 1; k >= 2; --k) y = (y + a[k]) * x;
    y *= x;
    return y;
}

SmoothField example3_field() {
    Mat A = Mat::Zero(4, 4);
    A(0, 0) = 2.0;
    A(1, 1) = -1.0;
    A(2, 3) = -3.0;
    A(3, 2) = 3.0;
    return make_field(4, [A](const Vec& v) { return Vec(A * v); },
                      [A](const Vec&) { return A; });
}

} // namespace

TEST_SUITE("manifolds") {

TEST_CASE("cutoff: zero for linear fields, zero outside support, quadratic bound") {
    SmoothField lin = example3_field();
    CutoffNonlinearity cl = make_cutoff(lin, 0.2);
    CHECK(cl(Vec::Constant(4, 0.05)).norm() <= 1e-12);
    CHECK(cl.c0_bound <= 1e-12);

    SmoothField f = make_field(2, [](const Vec& v) {
        Vec out(2);
        out << -v(0) + v(1) * v(1), v(1);
        return out;
    });
    double delta = 0.1;
    CutoffNonlinearity c = make_cutoff(f, delta);
    // Outside the support.
    Vec far(2);
    far << 3 * delta, 0.0;
    CHECK(c(far).norm() == 0.0);
    // Measured sup bound <= 4 C delta^2 with C re-measured on the cloud.
    CHECK(c.c0_bound <= 4.0 * c.c_quad * delta * delta + 1e-12);
    // Bounds shrink with delta.
    CutoffNonlinearity c2 = make_cutoff(f, delta / 4);
    CHECK(c2.c0_bound < c.c0_bound);

    // Field not vanishing at the origin is rejected by make_field already;
    // make_cutoff re-checks through a raw SmoothField.
    SmoothField bad;
    bad.dim = 1;
    bad.value = [](const Vec& v) { return Vec(Vec::Constant(1, 1.0 + v(0))); };
    bad.jacobian = [](const Vec&) { return Mat(Mat::Identity(1, 1)); };
    bad.equilibrium = Vec::Zero(1);
    CHECK_THROWS_AS(make_cutoff(bad, 0.1), Error);
}

TEST_CASE("center chart of the linear example is the center subspace") {
    SmoothField f = example3_field();
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(4)));
    ChartParams p;
    p.delta = 0.2;
    p.pts_per_axis = 3;
    ManifoldChart chart = center_chart(f, split, p);
    CHECK(chart.base_dim() == 2);
    CHECK(chart.contraction_ratio == 0.0); // p_delta = 0, fixed point in one sweep
    CHECK(chart.tangency_residual <= 1e-8);
    // phi(x) = x for every base point.
    for (double a : {-0.2, -0.07, 0.0, 0.13}) {
        Vec coords(2);
        coords << a, 0.4 * a;
        Vec on = chart.phi_exact(coords);
        CHECK((on - chart.base * coords).norm() <= 1e-10);
        // projection consistency
        CHECK((chart.base_coords(on) - coords).norm() <= 1e-10);
    }
    CHECK((chart.phi(Vec::Zero(2))).norm() <= 1e-10);
}

TEST_CASE("planar center chart reproduces the series coefficients") {
    SmoothField f = planar_field();
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    REQUIRE(split.dim_c() == 1);
    REQUIRE(split.dim_s() == 1);
    ChartParams p;
    p.delta = 0.15;
    p.fp_tol = 1e-11;
    p.h_target = 0.02;
    p.richardson = true;
    p.build_grid = false;
    ManifoldChart chart = center_chart(f, split, p);
    CHECK(chart.tangency_residual <= 1e-6);

    auto series = planar_series(8);
    CHECK(series[2] == -1.0);
    CHECK(series[3] == 0.0);
    CHECK(series[4] == -2.0);

    // The base direction may be +/- e1; evaluate in chart coordinates.
    double sgn = chart.base(0, 0) > 0 ? 1.0 : -1.0;
    auto chart_y = [&](double x) {
        Vec coords(1);
        coords << sgn * x;
        Vec on = chart.phi_exact(coords);
        CHECK(on(0) == doctest::Approx(x).epsilon(1e-9));
        return on(1);
    };
    for (double x : {-0.05, 0.05})
        CHECK(std::abs(chart_y(x) - planar_series_eval(series, x)) <= 1e-6);

    // Quadratic coefficient, with the x^4 term removed by extrapolation
    // across |x| = 0.05 and 0.025 (even part first to drop odd orders).
    auto c_at = [&](double x) { return 0.5 * (chart_y(x) + chart_y(-x)) / (x * x); };
    double a2 = (4.0 * c_at(0.025) - c_at(0.05)) / 3.0;
    CHECK(std::abs(a2 - (-1.0)) <= 1e-3);
}

TEST_CASE("confinement: a trajectory staying in B(0, delta/2) lies on the chart") {
    SmoothField f = planar_field();
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    ChartParams p;
    p.delta = 0.15;
    p.fp_tol = 1e-11;
    p.h_target = 0.02;
    p.richardson = true;
    p.build_grid = false;
    ManifoldChart chart = center_chart(f, split, p);

    // Start on the chart; the center dynamics x' = x phi(x) ~ -x^3 keeps the
    // trajectory confined, so it must stay within the chart surface.
    Vec coords(1);
    coords << 0.05 * (chart.base(0, 0) > 0 ? 1.0 : -1.0);
    Vec start = chart.phi_exact(coords);
    OdeField rhs = [&f](double, const Vec& y) { return f.value(y); };
    IntegrateOptions opt;
    opt.rtol = 1e-12;
    opt.atol = 1e-14;
    auto res = integrate(rhs, start, 0.0, 10.0, opt);
    for (double t = 0.0; t <= 10.0; t += 2.0) {
        Vec w = dense_eval(res, t);
        CHECK(w.norm() <= p.delta / 2);
        CHECK(chart.distance_to(w) <= 1e-7);
    }
}

TEST_CASE("two bump profiles agree on confined trajectories") {
    SmoothField f = planar_field();
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    ChartParams p;
    p.delta = 0.15;
    p.fp_tol = 1e-11;
    p.h_target = 0.02;
    p.richardson = true;
    p.build_grid = false;
    ManifoldChart c1 = center_chart(f, split, p);
    p.bump = BumpProfile::Septic;
    ManifoldChart c2 = center_chart(f, split, p);
    // Trajectories through |x| <= delta/2 base points stay confined here, so
    // the two charts agree there (no assertion away from the confined zone).
    for (double x : {-0.06, -0.02, 0.03, 0.07}) {
        Vec coords(1);
        coords << x;
        CHECK((c1.phi_exact(coords) - c2.phi_exact(coords)).norm() <= 1e-8);
    }
}

TEST_CASE("stable chart of the linear example and its decay") {
    SmoothField f = example3_field();
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(4)));
    ChartParams p;
    p.delta = 0.2;
    p.pts_per_axis = 3;
    ManifoldChart chart = stable_chart(f, split, p);
    CHECK(chart.base_dim() == 1);
    CHECK(chart.tangency_residual <= 1e-8);
    Vec coords(1);
    coords << 0.1;
    Vec on = chart.phi_exact(coords);
    CHECK((on - chart.base * coords).norm() <= 1e-12);

    // Trajectory from (0, y0, 0, 0) is y0 e^{-t}; |V(t)| e^{t/2} must decrease
    // to <= fp_tol at the horizon.
    WeightedTrajectory traj = chart_trajectory(chart, coords);
    double y0 = std::abs(on(1));
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < traj.t.size(); i += traj.t.size() / 16) {
        double t = traj.t[i];
        CHECK(std::abs(traj.states[i](1)) ==
              doctest::Approx(y0 * std::exp(-t)).epsilon(1e-6));
        double weighted = traj.states[i].norm() * std::exp(0.5 * t);
        CHECK(weighted <= prev * (1.0 + 1e-9));
        prev = weighted;
    }
    CHECK(traj.states.back().norm() * std::exp(0.5 * traj.t.back()) <= chart.fp_tol);
}

TEST_CASE("saddle field: stable chart is the x-axis") {
    // x' = -x + y^2, y' = y.
    SmoothField f = make_field(2, [](const Vec& v) {
        Vec out(2);
        out << -v(0) + v(1) * v(1), v(1);
        return out;
    });
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    ChartParams p;
    p.delta = 0.1;
    p.build_grid = false;
    ManifoldChart chart = stable_chart(f, split, p);
    for (double x : {-0.08, 0.03, 0.09}) {
        Vec coords(1);
        coords << x;
        Vec on = chart.phi_exact(coords);
        CHECK(std::abs(on(1)) <= 1e-9);
        CHECK(on(0) == doctest::Approx(x * chart.base(0, 0)).epsilon(1e-9));
    }
}

TEST_CASE("local invariance of the planar center chart") {
    SmoothField f = planar_field();
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    ChartParams p;
    p.delta = 0.15;
    p.fp_tol = 1e-9;
    p.h_target = 0.01;
    p.richardson = true;
    p.build_grid = false;
    ManifoldChart chart = center_chart(f, split, p);
    OdeField rhs = [&f](double, const Vec& y) { return f.value(y); };
    for (double x : {-0.06, 0.04}) {
        Vec coords(1);
        coords << x;
        Vec start = chart.phi_exact(coords);
        IntegrateOptions opt;
        opt.rtol = 1e-12;
        opt.atol = 1e-14;
        auto res = integrate(rhs, start, 0.0, 1.0, opt);
        CHECK(chart.distance_to(res.y_end()) <= 10 * p.fp_tol);
    }
}

TEST_CASE("uniformly stable chart of the linear slow system") {
    // v1' = -5 v1, v3' = -v4, v4' = v3, eps' = 0; E = eps-axis.
    Mat A = Mat::Zero(4, 4);
    A(0, 0) = -5.0;
    A(1, 2) = -1.0;
    A(2, 1) = 1.0;
    SmoothField f = make_field(4, [A](const Vec& v) { return Vec(A * v); },
                               [A](const Vec&) { return A; });
    EquilibriumCurve E;
    E.point = [](double s) {
        Vec p = Vec::Zero(4);
        p(3) = s;
        return p;
    };
    E.s_min = -0.5;
    E.s_max = 0.5;
    SpectralSplit split = classify_spectrum(A);
    ChartParams p;
    p.delta = 0.2;
    p.build_grid = false;
    ManifoldChart chart = uniformly_stable_chart(f, E, split, p);
    CHECK(chart.base_dim() == 2);
    // Chart = {(v1, 0, 0, eps)}.
    Vec coords(2);
    coords << 0.1, 0.15;
    Vec on = chart.phi_exact(coords);
    CHECK(std::abs(on(1)) <= 1e-10);
    CHECK(std::abs(on(2)) <= 1e-10);
    CHECK(std::abs(on(0)) == doctest::Approx(0.1).epsilon(1e-8));
    CHECK(on(3) == doctest::Approx(0.15).epsilon(1e-8));

    // Base point on E: constant trajectory.
    Vec on_curve(2);
    on_curve << 0.0, 0.12;
    Vec pt = chart.phi_exact(on_curve);
    CHECK((pt - E.point(0.12)).norm() <= 1e-10);

    // Not-a-curve-of-equilibria is rejected.
    EquilibriumCurve badE = E;
    badE.point = [](double s) {
        Vec p = Vec::Zero(4);
        p(0) = s; // v1-axis is not equilibria for v1' = -5 v1... except v1=0
        return p;
    };
    CHECK_THROWS_AS(uniformly_stable_chart(f, badE, split, p), Error);
}

TEST_CASE("uniformly stable chart converges to a point of E (perturbed field)") {
    // v1' = -5 v1 + eps v1^2, rotation in (v3, v4), eps' = 0.
    SmoothField f = make_field(4, [](const Vec& v) {
        Vec out(4);
        out << -5.0 * v(0) + v(3) * v(0) * v(0), -v(2), v(1), 0.0;
        return out;
    });
    EquilibriumCurve E;
    E.point = [](double s) {
        Vec p = Vec::Zero(4);
        p(3) = s;
        return p;
    };
    E.s_min = -0.5;
    E.s_max = 0.5;
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(4)));
    ChartParams p;
    p.delta = 0.2;
    p.build_grid = false;
    ManifoldChart chart = uniformly_stable_chart(f, E, split, p);

    Vec coords(2);
    coords << 0.01, 0.1;
    UsLimit lim = us_chart_limit(f, E, chart, coords, 12.0, *split.beta_minus, 1e-6);
    CHECK(lim.v_inf.norm() <= 0.1 + 1e-6);
    // Exponential decay at rate >= 2 (c/2 = 2.5 here).
    CHECK(lim.rate >= 2.0);

    // Independent check of the limit point by a long reference integration.
    Vec start = chart.phi_exact(coords);
    OdeField rhs = [&f](double, const Vec& y) { return f.value(y); };
    IntegrateOptions opt;
    opt.rtol = 1e-12;
    opt.atol = 1e-14;
    auto res = integrate(rhs, start, 0.0, 30.0, opt);
    CHECK((res.y_end() - lim.v_inf).norm() <= 1e-8);
}

TEST_CASE("slaving chart decomposition on the extended toy system") {
    // tau-time toy field: (-5 v1 eps, -v2, -v4 eps, v3 eps, 0).
    SmoothField f = make_field(5, [](const Vec& v) {
        Vec out(5);
        out << -5.0 * v(0) * v(4), -v(1), -v(2) * v(4) * 0.0 - v(3) * v(4), v(2) * v(4), 0.0;
        return out;
    });
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(5)));
    REQUIRE(split.dim_s() == 1);
    REQUIRE(split.dim_c() == 4);

    // Base manifold: the invariant plane {(v1, 0, 0, 0, eps)} presented as a
    // chart (it is a submanifold of the center manifold {v2 = 0}).
    ManifoldChart base;
    base.kind = ChartKind::Center;
    base.ambient_dim = 5;
    base.equilibrium = Vec::Zero(5);
    base.base = Mat::Zero(5, 2);
    base.base(0, 0) = 1.0;
    base.base(4, 1) = 1.0;
    base.delta = 0.2;
    base.solve_point = [](const Vec& c) {
        Vec v = Vec::Zero(5);
        v(0) = c(0);
        v(4) = c(1);
        return v;
    };

    ChartParams p;
    p.delta = 0.3;
    p.build_grid = false;
    SlavingChart sl = slaving_chart(f, base, split, p);
    CHECK(sl.chart.base_dim() == 3);

    // Trajectory (v1, v2, 0, 0, eps): V0 = (v1,0,0,0,eps), Vf = (0,v2,0,0,0),
    // Vp = 0 exactly.
    Vec coords(3);
    coords << 0.1, 0.15, 0.05; // (x0 = (v1, eps=0.05)... order: base coords then ys
    // base chart coords are (v1, eps); stable coord is v2.
    Vec c2(3);
    c2 << 0.1, 0.05, 0.15;
    SlavingDecomposition dec = sl.decompose(c2);
    double vp_max = 0.0, residual = 0.0;
    for (std::size_t j = 0; j < dec.t.size(); ++j) {
        vp_max = std::max(vp_max, dec.cross[j].norm());
        residual = std::max(residual,
                            (dec.total[j] - dec.base[j] - dec.fast[j] - dec.cross[j]).norm());
        CHECK(std::abs(dec.base[j](1)) <= 1e-14);
    }
    CHECK(vp_max <= 1e-12);
    CHECK(residual == 0.0); // decomposition is complete by construction
    CHECK(dec.fast_rate == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(std::abs(dec.fast.front()(1)) == doctest::Approx(0.15).epsilon(1e-9));

    // Starting on the base chart: Vf = Vp = 0.
    Vec c0(3);
    c0 << 0.1, 0.05, 0.0;
    SlavingDecomposition dec0 = sl.decompose(c0);
    for (std::size_t j = 0; j < dec0.t.size(); j += 50) {
        CHECK(dec0.fast[j].norm() <= 1e-12);
        CHECK(dec0.cross[j].norm() <= 1e-12);
    }
}

TEST_CASE("slaving chart: weak coupling produces a small interaction term") {
    // Couple the fast variable into a center direction with strength 1e-2.
    double kappa = 1e-2;
    SmoothField f = make_field(5, [kappa](const Vec& v) {
        Vec out(5);
        out << -5.0 * v(0) * v(4), -v(1), -v(3) * v(4) + kappa * v(1) * v(1), v(2) * v(4), 0.0;
        return out;
    });
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(5)));
    ManifoldChart base;
    base.kind = ChartKind::Center;
    base.ambient_dim = 5;
    base.equilibrium = Vec::Zero(5);
    base.base = Mat::Zero(5, 2);
    base.base(0, 0) = 1.0;
    base.base(4, 1) = 1.0;
    base.delta = 0.2;
    base.solve_point = [](const Vec& c) {
        Vec v = Vec::Zero(5);
        v(0) = c(0);
        v(4) = c(1);
        return v;
    };
    ChartParams p;
    p.delta = 0.3;
    p.build_grid = false;
    SlavingChart sl = slaving_chart(f, base, split, p);
    Vec c(3);
    c << 1e-2, 5e-3, 1e-2; // (v1, eps, v2-offset), initial data of size 1e-2
    SlavingDecomposition dec = sl.decompose(c);
    double vf0 = dec.fast.front().norm();
    double vp = 0.0;
    for (auto& w : dec.cross) vp = std::max(vp, w.norm());
    CHECK(vp <= 1e-2 * vf0);
}

TEST_CASE("slaving chart rejects a non-invariant base manifold") {
    SmoothField f = make_field(2, [](const Vec& v) {
        Vec out(2);
        out << v(1), -v(1) - v(0) * v(0); // x' = y: the x-axis is not invariant
        return out;
    });
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    ManifoldChart base;
    base.kind = ChartKind::Center;
    base.ambient_dim = 2;
    base.equilibrium = Vec::Zero(2);
    base.base = Mat::Zero(2, 1);
    base.base(0, 0) = 1.0;
    base.delta = 0.2;
    base.solve_point = [](const Vec& c) {
        Vec v = Vec::Zero(2);
        v(0) = c(0);
        return v;
    };
    ChartParams p;
    p.delta = 0.2;
    p.build_grid = false;
    CHECK_THROWS_AS(slaving_chart(f, base, split, p), Error);
}

TEST_CASE("center chart with both stable and unstable directions present") {
    // Example-3 linear part plus a quadratic coupling; the chart over the
    // rotation block exercises the causal and anticausal integral terms
    // together.
    Mat A = Mat::Zero(4, 4);
    A(0, 0) = 2.0;
    A(1, 1) = -1.0;
    A(2, 3) = -3.0;
    A(3, 2) = 3.0;
    SmoothField f = make_field(4, [A](const Vec& v) {
        Vec q(4);
        q << v(1) * v(1) + v(2) * v(3), v(0) * v(2), -v(0) * v(1), v(2) * v(2) - v(3) * v(3);
        return Vec(A * v + q);
    });
    SpectralSplit split = classify_spectrum(A);
    ChartParams p;
    p.delta = 0.05;
    p.fp_tol = 1e-9;
    p.h_target = 0.02;
    p.richardson = true;
    p.build_grid = false;
    ManifoldChart chart = center_chart(f, split, p);
    CHECK(chart.base_dim() == 2);
    CHECK(chart.tangency_residual <= 1e-6);

    OdeField rhs = [&f](double, const Vec& y) { return f.value(y); };
    for (double a : {-0.03, 0.02}) {
        Vec coords(2);
        coords << a, -0.5 * a;
        Vec on = chart.phi_exact(coords);
        // Projection consistency through the oblique coordinates.
        CHECK((chart.base_coords(on) - coords).norm() <= 1e-9);
        // Local invariance under the full flow.
        IntegrateOptions opt;
        opt.rtol = 1e-12;
        opt.atol = 1e-14;
        auto res = integrate(rhs, on, 0.0, 0.3, opt);
        CHECK(chart.distance_to(res.y_end()) <= 10 * p.fp_tol);
    }
}

TEST_CASE("center chart requires a nontrivial center space") {
    SmoothField f = make_field(2, [](const Vec& v) {
        Vec out(2);
        out << -v(0), -2 * v(1);
        return out;
    });
    SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(2)));
    ChartParams p;
    CHECK_THROWS_AS(center_chart(f, split, p), Error);
}

} // TEST_SUITE
