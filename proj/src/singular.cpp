#include "vprof/singular.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace vprof {

double SingularSystem::G_fn(const Vec& V) const {
    double z = zeta(V);
    if (std::abs(z) > g_tol) return grad_zeta(V).dot(F(V)) / z;
    // One-sided quadratic extrapolation along grad zeta toward growing |zeta|.
    Vec n = grad_zeta(V);
    double nn = n.norm();
    if (nn < 1e-14) fail(ErrorKind::SingularReduction, "G_fn: grad zeta vanishes");
    n /= nn;
    double h = std::max(1e-3 * (1.0 + V.norm()), 10.0 * g_tol / nn);
    auto q = [&](double t) {
        Vec W = V + t * n;
        double zw = zeta(W);
        if (std::abs(zw) <= g_tol)
            fail(ErrorKind::SingularReduction, "G_fn: extrapolation samples stay singular");
        return grad_zeta(W).dot(F(W)) / zw;
    };
    double side = (zeta(Vec(V + h * n)) - z >= 0) ? 1.0 : -1.0;
    // zeta grows along `side`; sample at h, 2h, 3h and extrapolate to 0.
    double q1 = q(side * h), q2 = q(side * 2 * h), q3 = q(side * 3 * h);
    return 3.0 * q1 - 3.0 * q2 + q3;
}

SmoothField SingularSystem::tau_field() const {
    SmoothField f;
    f.dim = dim;
    f.value = F;
    f.jacobian = jacobian_F;
    f.equilibrium = Vec::Zero(dim);
    return f;
}

Vec SingularSystem::singular_rhs(const Vec& V) const { return Vec(F(V) / zeta(V)); }

SingularSystem make_singular_system(int dim, std::function<Vec(const Vec&)> F,
                                    std::function<double(const Vec&)> zeta,
                                    std::function<Vec(const Vec&)> grad_zeta,
                                    std::function<Mat(const Vec&)> jacobian_F,
                                    std::optional<EquilibriumCurve> equilibria) {
    SingularSystem sys;
    sys.dim = dim;
    sys.F = std::move(F);
    sys.zeta = std::move(zeta);
    if (grad_zeta) {
        sys.grad_zeta = std::move(grad_zeta);
    } else {
        auto z = sys.zeta;
        sys.grad_zeta = [z, dim](const Vec& V) {
            double h = 1e-6 * (1.0 + V.norm());
            Vec g(dim);
            Vec vp = V, vm = V;
            for (int j = 0; j < dim; ++j) {
                vp(j) += h;
                vm(j) -= h;
                g(j) = (z(vp) - z(vm)) / (2 * h);
                vp(j) = V(j);
                vm(j) = V(j);
            }
            return g;
        };
    }
    if (jacobian_F) {
        sys.jacobian_F = std::move(jacobian_F);
    } else {
        auto Ff = sys.F;
        sys.jacobian_F = [Ff](const Vec& V) { return fd_jacobian(Ff, V); };
    }
    sys.equilibria = std::move(equilibria);

    Vec zero = Vec::Zero(dim);
    double f0 = sys.F(zero).norm();
    double z0 = std::abs(sys.zeta(zero));
    if (f0 > 1e-10 || z0 > 1e-10)
        fail(ErrorKind::InvalidInput, "make_singular_system: |F(0)| = " + fmt17(f0) +
                                          ", |zeta(0)| = " + fmt17(z0) +
                                          " must both vanish at the origin");
    return sys;
}

// ---------------------------------------------------------------------------
// Hypothesis checker.

namespace {

// Project V onto {zeta = 0} by Newton along grad zeta.
bool project_to_singular_set(const SingularSystem& sys, Vec& V, double tol = 1e-12) {
    for (int it = 0; it < 60; ++it) {
        double z = sys.zeta(V);
        if (std::abs(z) <= tol) return true;
        Vec g = sys.grad_zeta(V);
        double gg = g.squaredNorm();
        if (gg < 1e-20) return false;
        V -= (z / gg) * g;
    }
    return std::abs(sys.zeta(V)) <= 10 * tol;
}

// Gauss-Newton for the joint system [F(V); zeta(V)] = 0 (equilibria on S).
// Steps are clamped to the sampling radius; evaluation failures (e.g. leaving
// a positivity region) mark the sample as unusable.
bool find_equilibrium_on_S(const SingularSystem& sys, Vec& V, double radius) {
    try {
        for (int it = 0; it < 80; ++it) {
            Vec r(sys.dim + 1);
            r.head(sys.dim) = sys.F(V);
            r(sys.dim) = sys.zeta(V);
            if (r.norm() <= 1e-12) return true;
            Mat J(sys.dim + 1, sys.dim);
            J.topRows(sys.dim) = sys.jacobian_F(V);
            J.bottomRows(1) = sys.grad_zeta(V).transpose();
            Vec step = (J.transpose() * J + 1e-12 * Mat::Identity(sys.dim, sys.dim))
                           .ldlt()
                           .solve(J.transpose() * r);
            if (!step.allFinite()) return false;
            double sn = step.norm();
            if (sn > 0.5 * radius) step *= 0.5 * radius / sn;
            V -= step;
            if (V.norm() > 4 * radius) return false;
            if (sn < 1e-15) break;
        }
        Vec r(sys.dim + 1);
        r.head(sys.dim) = sys.F(V);
        r(sys.dim) = sys.zeta(V);
        return r.norm() <= 1e-10;
    } catch (const Error&) {
        return false;
    }
}

// Pseudo-arclength continuation of F(V) = 0 from the origin; returns sampled
// curve points (both directions) or an empty vector on failure.
std::vector<Vec> continue_equilibria(const SingularSystem& sys, double radius) {
    Mat J0 = sys.jacobian_F(Vec::Zero(sys.dim));
    Eigen::JacobiSVD<Mat> svd(J0, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double smax = std::max(1.0, sv.size() ? sv(0) : 0.0);
    std::vector<Vec> dirs;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) <= 1e-8 * smax) dirs.push_back(svd.matrixV().col(i));
    std::vector<Vec> points;
    double step = 1e-2 * radius;
    for (const Vec& dir0 : dirs) {
        for (double sgn : {1.0, -1.0}) {
            Vec prev = Vec::Zero(sys.dim);
            Vec tan = sgn * dir0;
            bool ok = true;
            for (int k = 0; k < 100 && ok; ++k) {
                Vec V = prev + step * tan;
                // Corrector: Newton on [F; arclength constraint].
                for (int it = 0; it < 50; ++it) {
                    Vec r(sys.dim + 1);
                    r.head(sys.dim) = sys.F(V);
                    r(sys.dim) = tan.dot(V - prev) - step;
                    if (r.norm() <= 1e-12) break;
                    Mat J(sys.dim + 1, sys.dim);
                    J.topRows(sys.dim) = sys.jacobian_F(V);
                    J.bottomRows(1) = tan.transpose();
                    Vec d = (J.transpose() * J + 1e-14 * Mat::Identity(sys.dim, sys.dim))
                                .ldlt()
                                .solve(J.transpose() * r);
                    if (!d.allFinite()) break;
                    V -= d;
                }
                if (sys.F(V).norm() > 1e-9) {
                    ok = false;
                    break;
                }
                points.push_back(V);
                Vec ntan = V - prev;
                if (ntan.norm() > 1e-14) tan = ntan / ntan.norm();
                prev = V;
                if (prev.norm() > radius) break;
            }
        }
    }
    return points;
}

} // namespace

HypothesisReport check_hypotheses(const SingularSystem& sys, double radius, int n_samples,
                                  const HypothesisTols& tols) {
    HypothesisReport rep;
    rep.n_samples = n_samples;
    rep.radius = radius;
    std::mt19937 rng(tols.seed);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> ur(0.05, 1.0);
    auto random_point = [&]() {
        Vec v(sys.dim);
        for (int i = 0; i < sys.dim; ++i) v(i) = gauss(rng);
        v *= radius * ur(rng) / v.norm();
        return v;
    };

    // H1: regularity and the equilibrium/singularity at the origin.
    {
        HypothesisEntry h;
        h.status = HypStatus::Pass;
        Vec zero = Vec::Zero(sys.dim);
        double resid = std::max(sys.F(zero).norm(), std::abs(sys.zeta(zero)));
        h.residual = resid;
        if (resid > 1e-10) {
            h.status = HypStatus::Fail;
            h.witness = zero;
            h.note = "F(0) or zeta(0) does not vanish";
        }
        for (int i = 0; i < std::min(10, n_samples) && h.status == HypStatus::Pass; ++i) {
            Vec v = random_point();
            Mat Jh = fd_jacobian(sys.F, v, 1e-5);
            Mat Jh2 = fd_jacobian(sys.F, v, 5e-6);
            double diff = (Jh - Jh2).norm() / (1.0 + Jh.norm());
            if (diff > tols.h1_tol) {
                h.status = HypStatus::Fail;
                h.witness = v;
                h.residual = diff;
                h.note = "finite-difference Jacobians are inconsistent";
            }
        }
        rep.hyp[0] = h;
    }

    // H2: grad zeta(0) != 0.
    {
        HypothesisEntry h;
        double g = sys.grad_zeta(Vec::Zero(sys.dim)).norm();
        h.residual = g;
        h.witness = Vec::Zero(sys.dim);
        h.status = g > tols.tol ? HypStatus::Pass : HypStatus::Fail;
        if (h.status == HypStatus::Fail) h.note = "grad zeta vanishes at the origin";
        rep.hyp[1] = h;
    }

    // H3: F = 0 on (center manifold of the tau-field) intersected with S.
    {
        HypothesisEntry h;
        try {
            SmoothField f = sys.tau_field();
            SpectralSplit split = classify_spectrum(f.jacobian(Vec::Zero(sys.dim)));
            if (split.dim_c() == 0) {
                h.status = HypStatus::Pass;
                h.note = "center space is trivial";
            } else {
                ChartParams cp;
                cp.delta = radius;
                cp.build_grid = false;
                cp.richardson = true;
                cp.fp_tol = 1e-9;
                cp.h_target = 0.04;
                ManifoldChart chart = center_chart(f, split, cp);
                double worst = 0.0;
                Vec worst_x;
                int found = 0;
                int tries = std::min(16, std::max(8, n_samples / 12));
                for (int i = 0; i < tries; ++i) {
                    Vec x = chart.base_coords(Vec(random_point()));
                    // Newton on zeta(phi(x)) = 0 in base coordinates. The
                    // gradient uses D phi ~ B (first order), which is plenty
                    // for the nearly linear constraint.
                    bool on_S = false;
                    Vec on;
                    for (int it = 0; it < 20; ++it) {
                        on = chart.phi_exact(x);
                        double z = sys.zeta(on);
                        if (std::abs(z) <= 1e-11) {
                            on_S = true;
                            break;
                        }
                        Vec grad = chart.base.transpose() * sys.grad_zeta(on);
                        double gg = grad.squaredNorm();
                        if (gg < 1e-18) break;
                        x -= (z / gg) * grad;
                        if (x.lpNorm<Eigen::Infinity>() > radius) break;
                    }
                    if (!on_S || x.lpNorm<Eigen::Infinity>() > radius) continue;
                    ++found;
                    double fres = sys.F(on).norm();
                    if (fres > worst) {
                        worst = fres;
                        worst_x = on;
                    }
                }
                h.residual = worst;
                if (found == 0) {
                    h.status = HypStatus::Untestable;
                    h.note = "no chart points found on the singular set";
                } else if (worst <= tols.tol) {
                    h.status = HypStatus::Pass;
                } else {
                    h.status = HypStatus::Fail;
                    h.witness = worst_x;
                    h.note = "F does not vanish on the center manifold inside S";
                }
            }
        } catch (const Error& e) {
            h.status = HypStatus::Untestable;
            h.note = std::string("center chart unavailable: ") + e.what();
        }
        rep.hyp[2] = h;
    }

    // H4: a one-dimensional curve of equilibria transversal to S.
    {
        HypothesisEntry h;
        Vec n0 = sys.grad_zeta(Vec::Zero(sys.dim));
        n0.normalize();
        auto transversal = [&](const Vec& tangent) {
            Vec t = tangent / std::max(tangent.norm(), 1e-300);
            return std::asin(std::min(1.0, std::abs(t.dot(n0))));
        };
        if (sys.equilibria) {
            bool ok = true;
            double worst = 0.0;
            Vec worst_p;
            for (int i = 0; i <= 20; ++i) {
                double s = sys.equilibria->s_min +
                           (sys.equilibria->s_max - sys.equilibria->s_min) * i / 20.0;
                Vec p = sys.equilibria->point(s);
                double fres = sys.F(p).norm();
                if (fres > worst) {
                    worst = fres;
                    worst_p = p;
                }
                if (fres > 1e-10 * (1.0 + p.norm())) ok = false;
            }
            double angle = transversal(sys.equilibria->tangent_at(0.0));
            h.residual = ok ? angle : worst;
            if (!ok) {
                h.status = HypStatus::Fail;
                h.witness = worst_p;
                h.note = "supplied curve is not made of equilibria";
            } else if (angle <= tols.tol_angle) {
                h.status = HypStatus::Fail;
                h.witness = sys.equilibria->point(0.0);
                h.note = "equilibrium curve is tangent to the singular set";
            } else {
                h.status = HypStatus::Pass;
            }
        } else {
            std::vector<Vec> pts = continue_equilibria(sys, radius);
            if (pts.size() < 4) {
                h.status = HypStatus::Untestable;
                h.note = "no equilibrium curve found by continuation";
            } else {
                double angle = transversal(pts[1] - Vec::Zero(sys.dim));
                h.residual = angle;
                h.status = angle > tols.tol_angle ? HypStatus::Pass : HypStatus::Fail;
                if (h.status == HypStatus::Fail) {
                    h.witness = pts[1];
                    h.note = "continued equilibrium curve is tangent to the singular set";
                }
            }
        }
        rep.hyp[3] = h;
    }

    // H5: grad zeta . F = 0 on S.
    {
        HypothesisEntry h;
        double worst = 0.0;
        Vec worst_p;
        int found = 0;
        for (int i = 0; i < n_samples; ++i) {
            Vec v = random_point();
            if (!project_to_singular_set(sys, v)) continue;
            if (v.norm() > 2 * radius) continue;
            ++found;
            double r = std::abs(sys.grad_zeta(v).dot(sys.F(v)));
            if (r > worst) {
                worst = r;
                worst_p = v;
            }
        }
        h.residual = worst;
        if (found == 0) {
            h.status = HypStatus::Untestable;
            h.note = "no points of the singular set found";
        } else if (worst <= tols.tol) {
            h.status = HypStatus::Pass;
        } else {
            h.status = HypStatus::Fail;
            h.witness = worst_p;
            h.note = "grad zeta . F is nonzero on the singular set";
        }
        rep.hyp[4] = h;
    }

    // H6: G = 0 at equilibria inside S.
    {
        HypothesisEntry h;
        double worst = 0.0;
        Vec worst_p;
        int found = 0;
        for (int i = 0; i < std::max(10, n_samples / 4); ++i) {
            Vec v = random_point();
            if (!find_equilibrium_on_S(sys, v, radius)) continue;
            if (v.norm() > 2 * radius) continue;
            ++found;
            double g = std::abs(sys.G_fn(v));
            if (g > worst) {
                worst = g;
                worst_p = v;
            }
        }
        h.residual = worst;
        if (found == 0) {
            h.status = HypStatus::Untestable;
            h.note = "no equilibria found inside the singular set";
        } else if (worst <= tols.tol) {
            h.status = HypStatus::Pass;
        } else {
            h.status = HypStatus::Fail;
            h.witness = worst_p;
            h.note = "G does not vanish at equilibria inside the singular set";
        }
        rep.hyp[5] = h;
    }
    return rep;
}

// ---------------------------------------------------------------------------

SingularTrajectory integrate_singular(const SingularSystem& sys, const Vec& V0, double t_end,
                                      const SingularIntegrateOptions& opt) {
    double guard = opt.guard_tol > 0 ? opt.guard_tol : 1e-8 * (1.0 + V0.norm());
    double z0 = sys.zeta(V0);
    if (std::abs(z0) <= guard)
        fail(ErrorKind::InvalidInput,
             "integrate_singular: zeta(V0) = " + fmt17(z0) + " is inside the guard band");

    OdeField rhs = [&sys](double, const Vec& y) { return sys.singular_rhs(y); };
    std::vector<Event> events{
        {[&sys, guard](double, const Vec& y) { return std::abs(sys.zeta(y)) - guard; }, true,
         "singular-guard"}};
    IntegrateOptions io;
    io.rtol = opt.rtol;
    io.atol = opt.atol;

    SingularTrajectory out;
    bool stiffness_hit = false;
    try {
        out.traj = integrate(rhs, V0, 0.0, t_end, io, events);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Stiffness) throw;
        stiffness_hit = true;
        // Re-run without the final portion: integrate with a larger guard so
        // the event fires before the step size underflows.
        double coarse_guard = 1e-5 * (1.0 + V0.norm());
        std::vector<Event> ev2{
            {[&sys, coarse_guard](double, const Vec& y) {
                 return std::abs(sys.zeta(y)) - coarse_guard;
             },
             true, "singular-guard"}};
        out.traj = integrate(rhs, V0, 0.0, t_end, io, ev2);
        if (!out.traj.event) throw; // genuine stiffness away from S
    }

    if (out.traj.event || stiffness_hit) {
        const Vec& ve = out.traj.states.back();
        double te = out.traj.times.back();
        double ze = sys.zeta(ve);
        double dz2 = 2.0 * sys.grad_zeta(ve).dot(sys.F(ve)); // d(zeta^2)/dt, finite at S
        SingularEvent ev;
        ev.state = ve;
        // zeta^2(t) is locally linear in t: refine the hit time analytically.
        ev.hit_time = (dz2 < 0) ? te - ze * ze / dz2 : te;
        // Growth of |dV/dt| over the last decade of accepted steps.
        std::size_t nsteps = out.traj.states.size();
        std::size_t tail = std::max<std::size_t>(2, nsteps / 10);
        double tail_max = 0.0;
        std::vector<double> body;
        for (std::size_t i = 1; i < nsteps; ++i) {
            double z = sys.zeta(out.traj.states[i]);
            if (z == 0.0) continue;
            double speed = sys.singular_rhs(out.traj.states[i]).norm();
            if (i >= nsteps - tail) tail_max = std::max(tail_max, speed);
            else body.push_back(speed);
        }
        double med = 1.0;
        if (!body.empty()) {
            std::nth_element(body.begin(), body.begin() + body.size() / 2, body.end());
            med = std::max(body[body.size() / 2], 1e-300);
        }
        ev.derivative_growth = tail_max / med;
        out.event = ev;
    }
    return out;
}

namespace {

RescaledTrajectory rescale_by(const SingularSystem& sys, const IntegrationResult& traj,
                              int n_quad, double guard_tol, bool inverse) {
    if (traj.times.size() < 2)
        fail(ErrorKind::InvalidInput, "rescale_time: trajectory too short");
    auto weight = [&](double s) {
        double z = sys.zeta(dense_eval(traj, s));
        if (std::abs(z) < 10.0 * guard_tol)
            fail(ErrorKind::InvalidInput,
                 "rescale_time: zeta = " + fmt17(z) + " too close to zero along the trajectory");
        return inverse ? z : 1.0 / z;
    };
    double a = traj.t_begin(), b = traj.t_end();
    double sign_ref = sys.zeta(traj.states.front());
    for (const Vec& v : traj.states)
        if (sys.zeta(v) * sign_ref <= 0)
            fail(ErrorKind::InvalidInput,
                 "rescale_time: zeta changes sign along the trajectory (not a diffeomorphism)");

    auto run = [&](int n) {
        RescaledTrajectory out;
        out.t.resize(n);
        out.states.resize(n);
        double h = (b - a) / (n - 1);
        double acc = 0.0;
        double wprev = weight(a);
        out.t[0] = 0.0;
        out.states[0] = dense_eval(traj, a);
        for (int i = 1; i < n; ++i) {
            double s = a + i * h;
            double w = weight(s);
            acc += 0.5 * h * (wprev + w);
            wprev = w;
            out.t[i] = acc;
            out.states[i] = dense_eval(traj, s);
        }
        return out;
    };
    RescaledTrajectory fine = run(n_quad);
    RescaledTrajectory coarse = run((n_quad + 1) / 2);
    fine.quad_error = std::abs(fine.t.back() - coarse.t.back()) /
                      std::max(1.0, std::abs(fine.t.back()));
    // Monotonicity of the new parameterization.
    for (std::size_t i = 0; i + 1 < fine.t.size(); ++i) {
        double d = fine.t[i + 1] - fine.t[i];
        if (!(d > 0) && !(d < 0))
            fail(ErrorKind::NumericFailure, "rescale_time: non-monotone parameterization");
        if ((fine.t.back() - fine.t.front()) * d < 0)
            fail(ErrorKind::NumericFailure, "rescale_time: non-monotone parameterization");
    }
    return fine;
}

} // namespace

RescaledTrajectory rescale_time(const SingularSystem& sys, const IntegrationResult& traj,
                                int n_quad, double guard_tol) {
    return rescale_by(sys, traj, n_quad, guard_tol, false);
}

RescaledTrajectory rescale_time_inverse(const SingularSystem& sys, const IntegrationResult& traj,
                                        int n_quad, double guard_tol) {
    return rescale_by(sys, traj, n_quad, guard_tol, true);
}

// ---------------------------------------------------------------------------

SlowManifold slow_manifold(const SingularSystem& sys, const SlowManifoldOptions& opt) {
    if (opt.check_hyps) {
        HypothesisReport rep = check_hypotheses(sys, opt.hyp_radius, opt.hyp_samples, opt.tols);
        if (!rep.all_pass()) {
            std::string which;
            for (int i : rep.failed()) which += " H" + std::to_string(i);
            for (int i = 0; i < 6; ++i)
                if (rep.hyp[i].status == HypStatus::Untestable)
                    which += " H" + std::to_string(i + 1) + "(untestable)";
            fail(ErrorKind::SingularReduction,
                 "slow_manifold: hypotheses not satisfied:" + which);
        }
    }

    SlowManifold out;
    out.sys = sys;
    SmoothField f = sys.tau_field();
    out.split = classify_spectrum(f.jacobian(Vec::Zero(sys.dim)));
    if (out.split.dim_c() == 0)
        fail(ErrorKind::SingularReduction, "slow_manifold: trivial center space");
    ChartParams cp = opt.chart;
    cp.build_grid = true;
    out.chart = center_chart(f, out.split, cp);

    // Reduced slow field in base coordinates: pi_c F(phi(x)) / zeta(phi(x)),
    // extended by quadratic extrapolation along the in-chart direction of
    // growing zeta when |zeta| is below the guard.
    ManifoldChart chart = out.chart;
    Mat Bc = chart.base;
    Mat Pc = out.split.proj_c;
    SingularSystem s = sys;
    double gtol = sys.g_tol;
    auto raw = [chart, Bc, Pc, s](const Vec& x) {
        Vec V = chart.phi(x);
        return Vec((Bc.transpose() * (Pc * s.F(V))) / s.zeta(V));
    };
    auto zeta_of = [chart, s](const Vec& x) { return s.zeta(chart.phi(x)); };
    auto reduced_value = [raw, zeta_of, gtol, chart](const Vec& x) {
        double z = zeta_of(x);
        if (std::abs(z) > gtol) return raw(x);
        // In-chart direction of growing zeta.
        const int k = static_cast<int>(x.size());
        double hg = 1e-5 * (1.0 + x.norm());
        Vec grad(k);
        for (int j = 0; j < k; ++j) {
            Vec xp = x, xm = x;
            xp(j) += hg;
            xm(j) -= hg;
            grad(j) = (zeta_of(xp) - zeta_of(xm)) / (2 * hg);
        }
        double gn = grad.norm();
        if (gn < 1e-12)
            fail(ErrorKind::SingularReduction,
                 "reduced field: zeta is stationary along the chart");
        grad /= gn;
        double h = std::max(1e-3, 20.0 * gtol / gn);
        double side = (zeta_of(Vec(x + h * grad)) - z) >= 0 ? 1.0 : -1.0;
        Vec q1 = raw(Vec(x + side * h * grad));
        Vec q2 = raw(Vec(x + side * 2 * h * grad));
        Vec q3 = raw(Vec(x + side * 3 * h * grad));
        return Vec(3.0 * q1 - 3.0 * q2 + q3);
    };

    out.reduced.dim = chart.base_dim();
    out.reduced.value = reduced_value;
    out.reduced.jacobian = [reduced_value](const Vec& x) {
        return fd_jacobian(reduced_value, x, 1e-5);
    };
    out.reduced.equilibrium = Vec::Zero(chart.base_dim());

    // The reduced field must be finite on the chart, including the slice
    // zeta = 0 where the 0/0 convention applies.
    {
        std::mt19937 rng(777);
        std::normal_distribution<double> g;
        double bound = 0.0;
        for (int i = 0; i < 50; ++i) {
            Vec x(chart.base_dim());
            for (int j = 0; j < x.size(); ++j) x(j) = g(rng);
            x *= (0.8 * chart.delta) / std::max(x.lpNorm<Eigen::Infinity>(), 1e-12);
            if (i % 2 == 0) {
                // Push the sample onto the zeta = 0 slice of the chart.
                for (int it = 0; it < 40; ++it) {
                    double z = zeta_of(x);
                    if (std::abs(z) <= 1e-11) break;
                    double hg = 1e-6 * (1.0 + x.norm());
                    Vec grad(x.size());
                    for (int j = 0; j < x.size(); ++j) {
                        Vec xp = x, xm = x;
                        xp(j) += hg;
                        xm(j) -= hg;
                        grad(j) = (zeta_of(xp) - zeta_of(xm)) / (2 * hg);
                    }
                    double gg = grad.squaredNorm();
                    if (gg < 1e-18) break;
                    x -= (zeta_of(x) / gg) * grad;
                }
                if (std::abs(zeta_of(x)) <= 1e-10) {
                    double fres = sys.F(chart.phi(x)).norm();
                    if (fres > 1e-6)
                        fail(ErrorKind::SingularReduction,
                             "slow_manifold: |F| = " + fmt17(fres) +
                                 " on the zeta = 0 slice of the chart");
                }
            }
            if (x.lpNorm<Eigen::Infinity>() > chart.delta) continue;
            Vec r = out.reduced.value(x);
            if (!r.allFinite())
                fail(ErrorKind::SingularReduction, "slow_manifold: reduced field not finite");
            bound = std::max(bound, r.norm());
        }
        if (!(bound < 1e6))
            fail(ErrorKind::SingularReduction,
                 "slow_manifold: reduced field unbounded (sample max " + fmt17(bound) + ")");
    }
    return out;
}

ManifoldChart singular_center_chart(const SingularSystem& sys, const SlowManifoldOptions& opt,
                                    const ChartParams& nested) {
    SlowManifold slow = slow_manifold(sys, opt);
    SpectralSplit rsplit = classify_spectrum(slow.reduced.jacobian(slow.reduced.equilibrium));
    if (rsplit.dim_c() == 0)
        fail(ErrorKind::SingularReduction, "singular_center_chart: trivial reduced center space");
    ChartParams np = nested;
    np.build_grid = false;
    ManifoldChart inner = center_chart(slow.reduced, rsplit, np);

    ManifoldChart chart;
    chart.kind = ChartKind::Center;
    chart.ambient_dim = sys.dim;
    chart.equilibrium = Vec::Zero(sys.dim);
    chart.base = slow.chart.base * inner.base;
    chart.delta = np.delta;
    chart.pts_per_axis = nested.pts_per_axis;
    chart.eta = inner.eta;
    chart.horizon = inner.horizon;
    chart.fp_tol = inner.fp_tol;
    chart.contraction_ratio = inner.contraction_ratio;
    ManifoldChart slow_chart = slow.chart;
    ManifoldChart inner_copy = inner;
    chart.solve_point = [slow_chart, inner_copy](const Vec& y) {
        return slow_chart.phi_exact(inner_copy.phi_exact(y));
    };
    if (nested.build_grid) {
        // Fill the grid through the composed solver.
        std::vector<Vec> values;
        int k = chart.base_dim(), m = chart.pts_per_axis;
        std::size_t total = 1;
        for (int i = 0; i < k; ++i) total *= m;
        values.resize(total);
        for (std::size_t fl = 0; fl < total; ++fl) {
            std::size_t rem = fl;
            Vec c(k);
            for (int i = 0; i < k; ++i) {
                int idx = static_cast<int>(rem % m);
                rem /= m;
                c(i) = (m == 1) ? 0.0 : -chart.delta + 2.0 * chart.delta * idx / (m - 1);
            }
            values[fl] = chart.solve_point(c);
        }
        chart.values = std::move(values);
    }
    // Tangency against the composed base.
    {
        double step = chart.delta * 0.01, resid = 0.0;
        for (int i = 0; i < chart.base_dim(); ++i) {
            Vec e = Vec::Zero(chart.base_dim());
            e(i) = step;
            Vec d = (chart.solve_point(e) - chart.solve_point(Vec(-e))) / (2 * step);
            resid = std::max(resid, (d - chart.base.col(i)).norm());
        }
        chart.tangency_residual = resid;
    }
    return chart;
}

SingularUsChart singular_us_chart(const SingularSystem& sys, const EquilibriumCurve& curve,
                                  const SlowManifoldOptions& opt, const ChartParams& nested) {
    SlowManifold slow = slow_manifold(sys, opt);
    SpectralSplit rsplit = classify_spectrum(slow.reduced.jacobian(slow.reduced.equilibrium));

    // The equilibrium curve expressed in slow-chart base coordinates,
    // restricted to the parameter range the chart actually covers.
    ManifoldChart slow_chart = slow.chart;
    EquilibriumCurve red_curve;
    auto pt = curve.point;
    red_curve.point = [slow_chart, pt](double s) { return slow_chart.base_coords(pt(s)); };
    {
        double cover = 0.9 * slow_chart.delta;
        auto inside = [&](double s) {
            return red_curve.point(s).lpNorm<Eigen::Infinity>() <= cover;
        };
        double lo = 0.0, hi = 0.0;
        const int scan = 200;
        for (int i = 1; i <= scan; ++i) {
            double s = curve.s_max * i / scan;
            if (!inside(s)) break;
            hi = s;
        }
        for (int i = 1; i <= scan; ++i) {
            double s = curve.s_min * i / scan;
            if (!inside(s)) break;
            lo = s;
        }
        if (hi - lo < 1e-12)
            fail(ErrorKind::InvalidInput,
                 "singular_us_chart: the equilibrium curve leaves the slow chart immediately");
        red_curve.s_min = lo;
        red_curve.s_max = hi;
    }

    ChartParams np = nested;
    np.build_grid = false;
    ManifoldChart s0_red = uniformly_stable_chart(slow.reduced, red_curve, rsplit, np);

    // Present S0 in ambient coordinates for the slaving construction.
    ManifoldChart s0;
    s0.kind = ChartKind::UniformlyStable;
    s0.ambient_dim = sys.dim;
    s0.equilibrium = Vec::Zero(sys.dim);
    s0.base = slow.chart.base * s0_red.base;
    s0.delta = np.delta;
    ManifoldChart s0_red_copy = s0_red;
    s0.solve_point = [slow_chart, s0_red_copy](const Vec& y) {
        return slow_chart.phi_exact(s0_red_copy.phi_exact(y));
    };

    SmoothField f = sys.tau_field();
    // The slaving construction lives in ambient coordinates; its cutoff ball
    // must cover the base orbit plus the stable offset, which reach beyond
    // the nested radius itself.
    ChartParams slv = nested;
    slv.delta = 2.5 * nested.delta;
    SlavingChart sl = slaving_chart(f, s0, slow.split, slv);

    SingularUsChart out;
    out.chart = sl.chart;
    out.chart.kind = ChartKind::UniformlyStable;
    SingularSystem sys_copy = sys;
    auto base_decompose = sl.decompose;
    out.decompose = [base_decompose, sys_copy](const Vec& coords) {
        SlavingDecomposition dec = base_decompose(coords);
        SlowFastDecomposition sf;
        sf.tau = dec.t;
        sf.total = dec.total;
        sf.slow = dec.base;
        sf.fast = dec.fast;
        sf.cross = dec.cross;
        sf.fast_rate = dec.fast_rate;
        // Original-time grid by quadrature of dt/dtau = zeta along the
        // trajectory, valid while zeta stays outside the guard band.
        double guard = 10.0 * sys_copy.g_tol;
        bool ok = true;
        double sign_ref = sys_copy.zeta(dec.total.front());
        if (std::abs(sign_ref) <= guard) ok = false;
        if (ok) {
            sf.t.resize(dec.t.size());
            sf.t[0] = 0.0;
            double wprev = sys_copy.zeta(dec.total.front());
            for (std::size_t i = 1; i < dec.t.size() && ok; ++i) {
                double w = sys_copy.zeta(dec.total[i]);
                if (w * sign_ref <= 0 || std::abs(w) <= guard) {
                    ok = false;
                    break;
                }
                sf.t[i] = sf.t[i - 1] + 0.5 * (dec.t[i] - dec.t[i - 1]) * (wprev + w);
                wprev = w;
            }
            if (!ok) sf.t.clear();
        }
        return sf;
    };
    return out;
}

} // namespace vprof
