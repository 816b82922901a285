#include "vprof/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <random>

#include "vprof/odeint.hpp"

namespace vprof {

namespace {

double smoothstep5(double s) { return s * s * s * (10.0 + s * (-15.0 + 6.0 * s)); }
double smoothstep7(double s) {
    double s4 = s * s * s * s;
    return s4 * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)));
}

} // namespace

double CutoffNonlinearity::rho(double r) const {
    r = std::abs(r);
    if (r <= 1.0) return 1.0;
    if (r >= 2.0) return 0.0;
    double s = r - 1.0;
    return bump == BumpProfile::Quintic ? 1.0 - smoothstep5(s) : 1.0 - smoothstep7(s);
}

Vec CutoffNonlinearity::operator()(const Vec& V) const {
    double r = V.norm() / delta;
    if (r >= 2.0) return Vec::Zero(V.size());
    return p(V) * rho(r);
}

CutoffNonlinearity make_cutoff(const SmoothField& field, double delta, BumpProfile bump) {
    if (!(delta > 0)) fail(ErrorKind::InvalidInput, "make_cutoff: delta must be positive");
    double at0 = field.value(Vec::Zero(field.dim)).norm();
    if (at0 > 1e-10)
        fail(ErrorKind::InvalidInput,
             "make_cutoff: field does not vanish at the origin (|G(0)| = " + fmt17(at0) + ")");

    CutoffNonlinearity cut;
    cut.delta = delta;
    cut.bump = bump;
    cut.A = field.jacobian(Vec::Zero(field.dim));
    Mat A = cut.A;
    auto value = field.value;
    cut.p = [value, A](const Vec& V) { return Vec(value(V) - A * V); };

    // Measure the quadratic constant and the C0/C1 bounds on a deterministic
    // cloud in B(0, 2 delta).
    std::mt19937 rng(911);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> ur(1e-3, 1.0);
    const int d = field.dim;
    for (int i = 0; i < 200; ++i) {
        Vec dir(d);
        for (int j = 0; j < d; ++j) dir(j) = g(rng);
        dir.normalize();
        Vec V = dir * (2.0 * delta * ur(rng));
        double pn = cut.p(V).norm();
        double vn2 = V.squaredNorm();
        if (vn2 > 0) cut.c_quad = std::max(cut.c_quad, pn / vn2);
        cut.c0_bound = std::max(cut.c0_bound, cut(V).norm());
        Vec u(d);
        for (int j = 0; j < d; ++j) u(j) = g(rng);
        u.normalize();
        double eps = 1e-6 * (1.0 + V.norm());
        double deriv = (cut(Vec(V + eps * u)) - cut(Vec(V - eps * u))).norm() / (2.0 * eps);
        cut.c1_bound = std::max(cut.c1_bound, deriv);
    }
    return cut;
}

double WeightedTrajectory::weighted_norm() const {
    double w = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        w = std::max(w, states[i].norm() * std::exp(-eta * std::abs(t[i])));
    return w;
}

// ---------------------------------------------------------------------------
// Fixed-point engines. Both iterate the truncated variation-of-constants map
// on a uniform grid with trapezoid quadrature; the integrals are accumulated
// by one-step recurrences so a sweep costs O(n d^2).

namespace {

struct EngineResult {
    std::vector<double> tgrid;
    std::vector<Vec> V;
    bool converged = false;
    double final_diff = 0.0;
    double ratio = 0.0;
    int iters = 0;
};

using NlFn = std::function<Vec(int, const Vec&)>;

// Center fixed point on [-T, T]; n odd so that t = 0 is a grid node.
EngineResult solve_center_fp(const Mat& A, const SpectralSplit& split, const NlFn& nl,
                             const Vec& x_c, double eta, double T, int n, double fp_tol,
                             int max_iter) {
    const int d = static_cast<int>(A.rows());
    const double h = 2.0 * T / (n - 1);
    const int mid = (n - 1) / 2;
    const bool has_s = split.dim_s() > 0, has_u = split.dim_u() > 0;

    Mat E1 = expm(A * h), E1m = expm(-(A * h));
    const Mat &Pc = split.proj_c, &Ps = split.proj_s, &Pu = split.proj_u;
    // The projector is folded into the one-step matrices: each multiply then
    // re-kills roundoff leaked into the complementary subspaces, which would
    // otherwise be amplified exponentially along the long time grid.
    Mat E1c = E1 * Pc, E1mc = E1m * Pc, E1s = E1 * Ps, E1mu = E1m * Pu;

    EngineResult res;
    res.tgrid.resize(n);
    for (int j = 0; j < n; ++j) res.tgrid[j] = -T + j * h;

    // Homogeneous term exp(A t) x_c, grown from the midpoint.
    std::vector<Vec> hom(n);
    hom[mid] = x_c;
    for (int j = mid; j + 1 < n; ++j) hom[j + 1] = E1c * hom[j];
    for (int j = mid; j > 0; --j) hom[j - 1] = E1mc * hom[j];

    std::vector<Vec> V = hom, Vnew(n), P(n), Ic(n), Is, Iu;
    if (has_s) Is.resize(n);
    if (has_u) Iu.resize(n);

    // One application of the truncated variation-of-constants map.
    auto apply_map = [&](const std::vector<Vec>& Vin, std::vector<Vec>& Vout) {
        for (int j = 0; j < n; ++j) P[j] = nl(j, Vin[j]);
        Ic[mid] = Vec::Zero(d);
        for (int j = mid; j + 1 < n; ++j)
            Ic[j + 1] = E1c * (Ic[j] + (h / 2) * P[j]) + (h / 2) * (Pc * P[j + 1]);
        for (int j = mid; j > 0; --j)
            Ic[j - 1] = E1mc * (Ic[j] - (h / 2) * P[j]) - (h / 2) * (Pc * P[j - 1]);
        if (has_s) {
            Is[0] = Vec::Zero(d);
            for (int j = 0; j + 1 < n; ++j)
                Is[j + 1] = E1s * (Is[j] + (h / 2) * P[j]) + (h / 2) * (Ps * P[j + 1]);
        }
        if (has_u) {
            Iu[n - 1] = Vec::Zero(d);
            for (int j = n - 1; j > 0; --j)
                Iu[j - 1] = E1mu * (Iu[j] - (h / 2) * P[j]) - (h / 2) * (Pu * P[j - 1]);
        }
        for (int j = 0; j < n; ++j) {
            Vout[j] = hom[j] + Ic[j];
            if (has_s) Vout[j] += Is[j];
            if (has_u) Vout[j] += Iu[j];
        }
    };
    auto wdiff = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
        double diff = 0.0;
        for (int j = 0; j < n; ++j)
            diff = std::max(diff, (a[j] - b[j]).norm() * std::exp(-eta * std::abs(res.tgrid[j])));
        return diff;
    };

    double prev_diff = -1.0;
    int bad_ratio = 0;
    bool damped = false; // Picard with 0.5 averaging once the plain map stalls
    for (int it = 1; it <= max_iter; ++it) {
        apply_map(V, Vnew);
        if (damped)
            for (int j = 0; j < n; ++j) Vnew[j] = 0.5 * (Vnew[j] + V[j]);
        double diff = wdiff(Vnew, V);
        V.swap(Vnew);
        res.iters = it;
        res.final_diff = diff;
        if (!std::isfinite(diff) || diff > 1e8)
            fail(ErrorKind::NoContraction,
                 "center fixed point diverged (weighted diff " + fmt17(diff) +
                     "); try a smaller delta");
        if (prev_diff > 0.0) {
            res.ratio = diff / prev_diff;
            if (res.ratio >= 0.97 && diff > fp_tol) {
                if (++bad_ratio >= 3) {
                    if (!damped) {
                        damped = true; // averaging removes oscillatory modes
                        bad_ratio = 0;
                    } else {
                        fail(ErrorKind::NoContraction,
                             "center fixed point is not contracting (ratio " +
                                 fmt17(res.ratio) + "); try a smaller delta");
                    }
                }
            } else {
                bad_ratio = 0;
            }
        }
        prev_diff = std::max(diff, 1e-300);
        if (diff <= fp_tol) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged)
        fail(ErrorKind::NoContraction,
             "center fixed point: no convergence in " + std::to_string(max_iter) +
                 " iterations (last weighted diff " + fmt17(res.final_diff) +
                 ", ratio " + fmt17(res.ratio) + "); try a smaller delta");
    if (damped) {
        // The damped scheme has the same fixed points; certify the result as
        // a fixed point of the undamped map.
        apply_map(V, Vnew);
        double resid = wdiff(Vnew, V);
        if (resid > 10 * fp_tol)
            fail(ErrorKind::NoContraction,
                 "center fixed point: damped iterate is not a fixed point (residual " +
                     fmt17(resid) + ")");
        V.swap(Vnew);
    }
    res.V = std::move(V);
    return res;
}

// Decaying fixed point on [0, T]: stable part integrated causally from 0,
// center+unstable part anticausally from T. Convergence is measured in the
// plain sup norm; the exponentially weighted norm is recovered afterwards
// from the converged trajectory where it is wanted.
EngineResult solve_decay_fp(const Mat& A, const SpectralSplit& split, const NlFn& nl,
                            const Vec& x_s, double T, int n, double fp_tol, int max_iter) {
    const int d = static_cast<int>(A.rows());
    const double h = T / (n - 1);
    const bool has_cu = split.dim_c() + split.dim_u() > 0;

    Mat E1 = expm(A * h), E1m = expm(-(A * h));
    const Mat& Ps = split.proj_s;
    Mat Pcu = split.proj_c + split.proj_u;
    Mat E1s = E1 * Ps, E1mcu = E1m * Pcu; // see the projector note above

    EngineResult res;
    res.tgrid.resize(n);
    for (int j = 0; j < n; ++j) res.tgrid[j] = j * h;

    std::vector<Vec> hom(n);
    hom[0] = x_s;
    for (int j = 0; j + 1 < n; ++j) hom[j + 1] = E1s * hom[j];

    std::vector<Vec> V = hom, Vnew(n), P(n), Is(n), Icu;
    if (has_cu) Icu.resize(n);

    auto apply_map = [&](const std::vector<Vec>& Vin, std::vector<Vec>& Vout) {
        for (int j = 0; j < n; ++j) P[j] = nl(j, Vin[j]);
        Is[0] = Vec::Zero(d);
        for (int j = 0; j + 1 < n; ++j)
            Is[j + 1] = E1s * (Is[j] + (h / 2) * P[j]) + (h / 2) * (Ps * P[j + 1]);
        if (has_cu) {
            Icu[n - 1] = Vec::Zero(d);
            for (int j = n - 1; j > 0; --j)
                Icu[j - 1] = E1mcu * (Icu[j] - (h / 2) * P[j]) - (h / 2) * (Pcu * P[j - 1]);
        }
        for (int j = 0; j < n; ++j) {
            Vout[j] = hom[j] + Is[j];
            if (has_cu) Vout[j] += Icu[j];
        }
    };
    auto sup_diff = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
        double diff = 0.0;
        for (int j = 0; j < n; ++j) diff = std::max(diff, (a[j] - b[j]).norm());
        return diff;
    };

    double prev_diff = -1.0;
    int bad_ratio = 0;
    bool damped = false;
    for (int it = 1; it <= max_iter; ++it) {
        apply_map(V, Vnew);
        if (damped)
            for (int j = 0; j < n; ++j) Vnew[j] = 0.5 * (Vnew[j] + V[j]);
        double diff = sup_diff(Vnew, V);
        V.swap(Vnew);
        res.iters = it;
        res.final_diff = diff;
        if (!std::isfinite(diff) || diff > 1e8)
            fail(ErrorKind::NoContraction,
                 "stable fixed point diverged (diff " + fmt17(diff) + "); try a smaller delta");
        if (prev_diff > 0.0) {
            res.ratio = diff / prev_diff;
            if (res.ratio >= 0.97 && diff > fp_tol) {
                if (++bad_ratio >= 3) {
                    if (!damped) {
                        damped = true;
                        bad_ratio = 0;
                    } else {
                        fail(ErrorKind::NoContraction,
                             "stable fixed point is not contracting (ratio " +
                                 fmt17(res.ratio) + "); try a smaller delta");
                    }
                }
            } else {
                bad_ratio = 0;
            }
        }
        prev_diff = std::max(diff, 1e-300);
        if (diff <= fp_tol) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged)
        fail(ErrorKind::NoContraction,
             "stable fixed point: no convergence in " + std::to_string(max_iter) +
                 " iterations (last diff " + fmt17(res.final_diff) + "); try a smaller delta");
    if (damped) {
        apply_map(V, Vnew);
        double resid = sup_diff(Vnew, V);
        if (resid > 10 * fp_tol)
            fail(ErrorKind::NoContraction,
                 "stable fixed point: damped iterate is not a fixed point (residual " +
                     fmt17(resid) + ")");
        V.swap(Vnew);
    }
    res.V = std::move(V);
    return res;
}

double auto_eta(const SpectralSplit& split) {
    if (split.beta_plus && split.beta_minus)
        return std::min(*split.beta_plus, *split.beta_minus) / 4.0;
    if (split.beta_plus) return *split.beta_plus / 4.0;
    if (split.beta_minus) return *split.beta_minus / 4.0;
    return 0.5; // pure-center field: no truncated integrals, weight is cosmetic
}

double auto_center_horizon(const SpectralSplit& split, double eta, double fp_tol) {
    double T = 0.0;
    double lg = std::log(1.0 / fp_tol);
    if (split.beta_minus) T = std::max(T, lg / (*split.beta_minus / 2.0 - eta));
    if (split.beta_plus) T = std::max(T, lg / (*split.beta_plus / 2.0 - eta));
    if (T == 0.0) T = 10.0;
    return T;
}

double auto_stable_horizon(const SpectralSplit& split, double delta, double fp_tol) {
    double beta = split.beta_minus.value_or(1.0);
    return 2.2 * std::log(std::max(10.0, (delta + 1.0) / fp_tol)) / beta;
}

int auto_grid_n(double span, double h_target, bool force_odd) {
    int n = static_cast<int>(std::ceil(span / h_target)) + 1;
    n = std::clamp(n, 33, 2000001);
    if (force_odd && n % 2 == 0) ++n;
    return n;
}

// Multi-index grid over the cube [-delta, delta]^k.
struct GridIndexer {
    int k = 0, m = 1;
    double delta = 0.0;

    std::size_t total() const {
        std::size_t t = 1;
        for (int i = 0; i < k; ++i) t *= static_cast<std::size_t>(m);
        return t;
    }
    Vec coords(std::size_t flat) const {
        Vec c(k);
        for (int i = 0; i < k; ++i) {
            int idx = static_cast<int>(flat % m);
            flat /= m;
            c(i) = (m == 1) ? 0.0 : -delta + 2.0 * delta * idx / (m - 1);
        }
        return c;
    }
};

void fill_grid(ManifoldChart& chart, const std::function<Vec(const Vec&)>& solve, int jobs) {
    GridIndexer gi{chart.base_dim(), chart.pts_per_axis, chart.delta};
    chart.values.assign(gi.total(), Vec());
    std::exception_ptr first_error;
    std::mutex mu;
    parallel_for(gi.total(), jobs, [&](std::size_t i) {
        try {
            chart.values[i] = solve(gi.coords(i));
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!first_error) first_error = std::current_exception();
        }
    });
    if (first_error) std::rethrow_exception(first_error);
}

double measure_tangency(const ManifoldChart& chart) {
    double step = chart.delta * 0.01;
    double resid = 0.0;
    for (int i = 0; i < chart.base_dim(); ++i) {
        Vec e = Vec::Zero(chart.base_dim());
        e(i) = step;
        Vec diff = (chart.phi_exact(e) - chart.phi_exact(Vec(-e))) / (2.0 * step);
        resid = std::max(resid, (diff - chart.base.col(i)).norm());
    }
    return resid;
}

} // namespace

// ---------------------------------------------------------------------------
// Chart queries.

Vec ManifoldChart::base_coords(const Vec& ambient) const {
    Vec rel = ambient - equilibrium;
    if (oblique_proj.size()) rel = oblique_proj * rel;
    return base.transpose() * rel;
}

Vec ManifoldChart::phi_grid(const Vec& coords) const {
    if (!has_grid()) fail(ErrorKind::InvalidInput, "chart has no grid data");
    if (coords.size() != base_dim()) fail(ErrorKind::InvalidInput, "chart coords dimension mismatch");
    const int k = base_dim(), m = pts_per_axis;
    if (coords.lpNorm<Eigen::Infinity>() > delta * (1.0 + 1e-9))
        fail(ErrorKind::Domain, "chart query outside base ball of radius " + fmt17(delta));
    if (m == 1) return values[0];

    std::vector<int> i0(k);
    std::vector<double> frac(k);
    for (int i = 0; i < k; ++i) {
        double u = (coords(i) + delta) / (2.0 * delta) * (m - 1);
        int c = std::clamp(static_cast<int>(std::floor(u)), 0, m - 2);
        i0[i] = c;
        frac[i] = u - c;
    }
    Vec out = Vec::Zero(ambient_dim);
    const int corners = 1 << k;
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t flat = 0, stride = 1;
        for (int i = 0; i < k; ++i) {
            int bit = (c >> i) & 1;
            w *= bit ? frac[i] : (1.0 - frac[i]);
            flat += stride * static_cast<std::size_t>(i0[i] + bit);
            stride *= static_cast<std::size_t>(m);
        }
        if (w != 0.0) out += w * values[flat];
    }
    return out;
}

Vec ManifoldChart::phi_exact(const Vec& coords) const {
    if (!solve_point) fail(ErrorKind::InvalidInput, "chart has no attached solver");
    return solve_point(coords);
}

Vec ManifoldChart::phi(const Vec& coords) const {
    if (has_grid()) return phi_grid(coords);
    return phi_exact(coords);
}

double ManifoldChart::distance_to(const Vec& ambient) const {
    Vec x = base_coords(ambient);
    for (int i = 0; i < x.size(); ++i) x(i) = std::clamp(x(i), -delta, delta);
    Vec on = solve_point ? phi_exact(x) : phi_grid(x);
    return (ambient - on).norm();
}

// ---------------------------------------------------------------------------

namespace {

struct CenterEngine {
    Mat A;
    SpectralSplit split;
    CutoffNonlinearity cut;
    double eta, T, fp_tol;
    int n, max_iter;
    bool richardson;

    EngineResult run(const Vec& x_ambient, int npoints) const {
        NlFn nl = [this](int, const Vec& V) { return cut(V); };
        return solve_center_fp(A, split, nl, x_ambient, eta, T, npoints, fp_tol, max_iter);
    }
    // Value of phi at one base point, optionally Richardson-extrapolated in
    // the quadrature step.
    Vec value(const Vec& x_ambient, double* ratio_out = nullptr) const {
        EngineResult coarse = run(x_ambient, n);
        if (ratio_out) *ratio_out = coarse.ratio;
        Vec v0 = coarse.V[(n - 1) / 2];
        if (!richardson) return v0;
        EngineResult fine = run(x_ambient, 2 * n - 1);
        Vec v1 = fine.V[(2 * n - 1 - 1) / 2];
        return (4.0 * v1 - v0) / 3.0;
    }
};

} // namespace

ManifoldChart center_chart(const SmoothField& field, const SpectralSplit& split,
                           const ChartParams& params) {
    if (split.dim_c() == 0)
        fail(ErrorKind::InvalidInput, "center_chart: the center space is trivial");
    SmoothField f = centered(field);
    Mat A = f.jacobian(Vec::Zero(f.dim));

    auto engine = std::make_shared<CenterEngine>();
    engine->A = A;
    engine->split = split;
    engine->cut = make_cutoff(f, params.delta, params.bump);
    engine->eta = params.eta > 0 ? params.eta : auto_eta(split);
    if (split.beta_minus && engine->eta >= *split.beta_minus / 2.0)
        fail(ErrorKind::InvalidInput, "center_chart: eta must be below beta_minus/2");
    if (split.beta_plus && engine->eta >= *split.beta_plus / 2.0)
        fail(ErrorKind::InvalidInput, "center_chart: eta must be below beta_plus/2");
    engine->T = params.horizon > 0 ? params.horizon
                                   : auto_center_horizon(split, engine->eta, params.fp_tol);
    if (params.horizon > 0) {
        // Truncation control: the discarded tails must sit below fp_tol.
        for (auto beta : {split.beta_minus, split.beta_plus}) {
            if (!beta) continue;
            double tail = std::exp((engine->eta - *beta / 2.0) * engine->T);
            if (tail > params.fp_tol * 1.0000001)
                fail(ErrorKind::InvalidInput,
                     "center_chart: horizon too short, exp((eta - beta/2) T) = " + fmt17(tail) +
                         " exceeds fp_tol");
        }
    }
    engine->n = params.grid_n > 0 ? params.grid_n | 1
                                  : auto_grid_n(2.0 * engine->T, params.h_target, true);
    engine->fp_tol = params.fp_tol;
    engine->max_iter = params.max_iter;
    engine->richardson = params.richardson;

    ManifoldChart chart;
    chart.kind = ChartKind::Center;
    chart.ambient_dim = f.dim;
    chart.equilibrium = field.equilibrium;
    chart.base = split.basis_c;
    chart.oblique_proj = split.proj_c;
    chart.delta = params.delta;
    chart.pts_per_axis = params.pts_per_axis;
    chart.eta = engine->eta;
    chart.horizon = engine->T;
    chart.fp_tol = params.fp_tol;

    Vec eq = field.equilibrium;
    Mat B = chart.base;
    chart.solve_point = [engine, eq, B](const Vec& coords) {
        return Vec(eq + engine->value(B * coords));
    };
    double eta_val = engine->eta;
    chart.trajectory_fn = [engine, eq, B, eta_val](const Vec& coords) {
        EngineResult er = engine->run(B * coords, engine->n);
        WeightedTrajectory traj;
        traj.t = er.tgrid;
        traj.eta = eta_val;
        traj.states.reserve(er.V.size());
        for (auto& v : er.V) traj.states.push_back(eq + v);
        return traj;
    };

    double worst_ratio = 0.0;
    if (params.build_grid) {
        std::mutex mu;
        fill_grid(chart, [&](const Vec& coords) {
            double ratio = 0.0;
            Vec v = eq + engine->value(B * coords, &ratio);
            std::lock_guard<std::mutex> lock(mu);
            worst_ratio = std::max(worst_ratio, ratio);
            return v;
        }, params.jobs);
    } else {
        engine->value(B * Vec::Constant(chart.base_dim(), params.delta * 0.5), &worst_ratio);
    }
    chart.contraction_ratio = worst_ratio;
    chart.tangency_residual = measure_tangency(chart);
    return chart;
}

namespace {

struct StableEngine {
    Mat A;
    SpectralSplit split;
    CutoffNonlinearity cut;
    double T, fp_tol;
    int n, max_iter;
    bool richardson;

    EngineResult run(const Vec& x_ambient, int npoints) const {
        NlFn nl = [this](int, const Vec& V) { return cut(V); };
        return solve_decay_fp(A, split, nl, x_ambient, T, npoints, fp_tol, max_iter);
    }
    Vec value(const Vec& x_ambient, double* ratio_out = nullptr) const {
        EngineResult coarse = run(x_ambient, n);
        if (ratio_out) *ratio_out = coarse.ratio;
        Vec v0 = coarse.V[0];
        if (!richardson) return v0;
        EngineResult fine = run(x_ambient, 2 * n - 1);
        return (4.0 * fine.V[0] - v0) / 3.0;
    }
};

ManifoldChart build_stable_chart_at(const SmoothField& field_centered, const Vec& eq_ambient,
                                    const SpectralSplit& split, const ChartParams& params,
                                    ChartKind kind) {
    if (split.dim_s() == 0)
        fail(ErrorKind::InvalidInput, "stable_chart: the stable space is trivial");

    auto engine = std::make_shared<StableEngine>();
    engine->A = field_centered.jacobian(Vec::Zero(field_centered.dim));
    engine->split = split;
    engine->cut = make_cutoff(field_centered, params.delta, params.bump);
    engine->T = params.horizon > 0 ? params.horizon
                                   : auto_stable_horizon(split, params.delta, params.fp_tol);
    engine->n = params.grid_n > 0 ? params.grid_n : auto_grid_n(engine->T, params.h_target, false);
    engine->fp_tol = params.fp_tol;
    engine->max_iter = params.max_iter;
    engine->richardson = params.richardson;

    ManifoldChart chart;
    chart.kind = kind;
    chart.ambient_dim = field_centered.dim;
    chart.equilibrium = eq_ambient;
    chart.base = split.basis_s;
    chart.oblique_proj = split.proj_s;
    chart.delta = params.delta;
    chart.pts_per_axis = params.pts_per_axis;
    chart.eta = split.beta_minus.value_or(0.0) / 2.0;
    chart.horizon = engine->T;
    chart.fp_tol = params.fp_tol;

    Vec eq = eq_ambient;
    Mat B = chart.base;
    chart.solve_point = [engine, eq, B](const Vec& coords) {
        return Vec(eq + engine->value(B * coords));
    };
    double gamma = chart.eta;
    chart.trajectory_fn = [engine, eq, B, gamma](const Vec& coords) {
        EngineResult er = engine->run(B * coords, engine->n);
        WeightedTrajectory traj;
        traj.t = er.tgrid;
        traj.eta = gamma;
        traj.states.reserve(er.V.size());
        for (auto& v : er.V) traj.states.push_back(eq + v);
        return traj;
    };

    double worst_ratio = 0.0;
    if (params.build_grid) {
        std::mutex mu;
        fill_grid(chart, [&](const Vec& coords) {
            double ratio = 0.0;
            Vec v = eq + engine->value(B * coords, &ratio);
            std::lock_guard<std::mutex> lock(mu);
            worst_ratio = std::max(worst_ratio, ratio);
            return v;
        }, params.jobs);
    } else {
        engine->value(B * Vec::Constant(chart.base_dim(), params.delta * 0.5), &worst_ratio);
    }
    chart.contraction_ratio = worst_ratio;
    chart.tangency_residual = measure_tangency(chart);
    return chart;
}

} // namespace

ManifoldChart stable_chart(const SmoothField& field, const SpectralSplit& split,
                           const ChartParams& params) {
    return build_stable_chart_at(centered(field), field.equilibrium, split, params,
                                 ChartKind::Stable);
}

WeightedTrajectory chart_trajectory(const ManifoldChart& chart, const Vec& coords) {
    if (!chart.trajectory_fn)
        fail(ErrorKind::InvalidInput, "chart has no attached trajectory solver");
    return chart.trajectory_fn(coords);
}

ManifoldChart uniformly_stable_chart(const SmoothField& field, const EquilibriumCurve& curve,
                                     const SpectralSplit& split, const ChartParams& params) {
    if (split.dim_s() == 0)
        fail(ErrorKind::InvalidInput, "uniformly_stable_chart: the stable space is trivial");
    validate_equilibrium_curve(field, curve);

    const int d = field.dim;
    const int ks = split.dim_s();
    Vec eq = field.equilibrium;
    Mat Bs = split.basis_s;
    Vec tan0 = curve.tangent_at(0.0);
    Vec tperp = tan0 - Bs * (Bs.transpose() * tan0);
    if (tperp.norm() < 1e-8 * tan0.norm())
        fail(ErrorKind::InvalidInput,
             "uniformly_stable_chart: the equilibrium curve is tangent to the stable space");
    tperp.normalize();

    Mat base(d, ks + 1);
    base.leftCols(ks) = Bs;
    base.col(ks) = tperp;

    // Solve sigma = <E(s) - eq, tperp> for the curve parameter.
    auto curve_param = [curve, eq, tperp](double sigma) {
        double lo = curve.s_min, hi = curve.s_max;
        auto g = [&](double s) { return tperp.dot(curve.point(s) - eq) - sigma; };
        double glo = g(lo), ghi = g(hi);
        if (glo * ghi > 0)
            fail(ErrorKind::Domain, "uniformly_stable_chart: curve parameter out of range");
        for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(hi)); ++it) {
            double midp = 0.5 * (lo + hi);
            double gm = g(midp);
            if (glo * gm <= 0) { hi = midp; ghi = gm; }
            else { lo = midp; glo = gm; }
        }
        return 0.5 * (lo + hi);
    };

    SmoothField f = field;
    ChartParams leafp = params;
    leafp.build_grid = false;
    auto solve = [f, curve, curve_param, Bs, leafp](const Vec& coords) {
        const int kks = static_cast<int>(coords.size()) - 1;
        double s = curve_param(coords(kks));
        Vec Vstar = curve.point(s);
        SmoothField shifted = f;
        shifted.equilibrium = Vstar;
        SmoothField loc = centered(shifted);
        SpectralSplit sp = classify_spectrum(loc.jacobian(Vec::Zero(loc.dim)));
        Vec want = Bs * coords.head(kks);
        Vec xs = sp.proj_s * want;
        if (xs.norm() < 1e-300) return Vstar;
        ManifoldChart leaf = build_stable_chart_at(loc, Vec::Zero(loc.dim), sp, leafp,
                                                   ChartKind::Stable);
        return Vec(Vstar + leaf.phi_exact(Vec(sp.basis_s.transpose() * xs)));
    };

    ManifoldChart chart;
    chart.kind = ChartKind::UniformlyStable;
    chart.ambient_dim = d;
    chart.equilibrium = eq;
    chart.base = base;
    chart.delta = params.delta;
    chart.pts_per_axis = params.pts_per_axis;
    chart.eta = split.beta_minus.value_or(0.0) / 2.0;
    chart.horizon = params.horizon > 0 ? params.horizon
                                       : auto_stable_horizon(split, params.delta, params.fp_tol);
    chart.fp_tol = params.fp_tol;
    chart.solve_point = solve;
    if (params.build_grid) fill_grid(chart, solve, params.jobs);
    chart.tangency_residual = measure_tangency(chart);
    chart.contraction_ratio = 0.0;
    return chart;
}

UsLimit us_chart_limit(const SmoothField& field, const EquilibriumCurve& curve,
                       const ManifoldChart& chart, const Vec& coords, double horizon,
                       double c_rate, double tol) {
    Vec start = chart.phi_exact(coords);
    OdeField rhs = [&field](double, const Vec& y) { return field.value(y); };
    IntegrateOptions opt;
    opt.rtol = 1e-12;
    opt.atol = 1e-14;
    auto res = integrate(rhs, start, 0.0, horizon, opt);

    UsLimit out;
    out.s = nearest_on_curve(curve, res.y_end());
    out.v_inf = curve.point(out.s);
    std::vector<double> ts, ds;
    for (double t = 0.0; t <= horizon; t += horizon / 24.0) {
        ts.push_back(t);
        ds.push_back((dense_eval(res, t) - out.v_inf).norm());
    }
    out.rate = -fit_exponential_rate(ts, ds);
    // Check the bound at the first time it can hold: much later, the decayed
    // distance sits at the round-off floor and the weight amplifies noise.
    double dist0 = (start - out.v_inf).norm();
    double t_check = (2.0 / c_rate) * (std::log(std::max(1.0, dist0 / tol)) + 1.0);
    t_check = std::min(horizon, t_check);
    double weighted =
        (dense_eval(res, t_check) - out.v_inf).norm() * std::exp(0.5 * c_rate * t_check);
    if (!(weighted <= tol))
        fail(ErrorKind::NoConvergence,
             "us_chart_limit: |V(t) - V_inf| e^{ct/2} = " + fmt17(weighted) + " exceeds " +
                 fmt17(tol) + " at t = " + fmt17(t_check));
    return out;
}

SlavingChart slaving_chart(const SmoothField& field, const ManifoldChart& base_chart,
                           const SpectralSplit& split, const ChartParams& params) {
    if (split.dim_s() == 0)
        fail(ErrorKind::InvalidInput, "slaving_chart: the stable space is trivial");
    SmoothField f = centered(field);
    const int d = f.dim;
    Mat A = f.jacobian(Vec::Zero(d));
    Vec eq = field.equilibrium;

    // The base manifold must be locally invariant: integrate a few of its
    // points for a short horizon and measure the distance back to the chart.
    {
        double inv_tol = std::max(100.0 * params.fp_tol, 1e-8);
        OdeField rhs = [&field](double, const Vec& y) { return field.value(y); };
        GridIndexer gi{base_chart.base_dim(), 3, base_chart.delta * 0.5};
        for (std::size_t i = 0; i < gi.total(); ++i) {
            Vec x0 = gi.coords(i);
            Vec start = base_chart.phi(x0);
            IntegrateOptions opt;
            opt.rtol = 1e-12;
            opt.atol = 1e-14;
            auto res = integrate(rhs, start, 0.0, 0.5, opt);
            double dist = base_chart.distance_to(res.y_end());
            if (dist > inv_tol)
                fail(ErrorKind::InvalidInput,
                     "slaving_chart: base chart is not locally invariant (drift " + fmt17(dist) +
                         " > " + fmt17(inv_tol) + ")");
        }
    }

    auto cut = std::make_shared<CutoffNonlinearity>(make_cutoff(f, params.delta, params.bump));
    double T = params.horizon > 0 ? params.horizon
                                  : auto_stable_horizon(split, params.delta, params.fp_tol);
    int n = params.grid_n > 0 ? params.grid_n : auto_grid_n(T, params.h_target, false);

    const int k0 = base_chart.base_dim(), ks = split.dim_s();
    Mat Bs = split.basis_s;

    Mat base(d, k0 + ks);
    base.leftCols(k0) = base_chart.base;
    base.rightCols(ks) = Bs;

    SpectralSplit sp = split;
    SmoothField ffull = field;
    double fp_tol = params.fp_tol;
    int max_iter = params.max_iter;

    // Solve for the offset trajectory W about the base orbit V0 and return
    // all the pieces; V(0) = V0(0) + W(0) is the chart point.
    auto solve_parts = [ffull, base_chart, cut, A, sp, Bs, eq, k0, T, n, fp_tol,
                        max_iter](const Vec& coords) {
        Vec x0 = coords.head(k0);
        Vec ys = coords.tail(coords.size() - k0);
        Vec start = base_chart.phi_exact(x0);
        OdeField rhs = [&ffull](double, const Vec& y) { return ffull.value(y); };
        IntegrateOptions opt;
        opt.rtol = 1e-12;
        opt.atol = 1e-14;
        auto orbit = integrate(rhs, start, 0.0, T, opt);

        double h = T / (n - 1);
        std::vector<Vec> V0(n);
        for (int j = 0; j < n; ++j) V0[j] = dense_eval(orbit, j * h) - eq;

        NlFn nl = [&V0, &cut](int j, const Vec& W) {
            return Vec((*cut)(Vec(V0[j] + W)) - (*cut)(V0[j]));
        };
        EngineResult er = solve_decay_fp(A, sp, nl, Vec(Bs * ys), T, n, fp_tol, max_iter);

        SlavingDecomposition dec;
        dec.t = er.tgrid;
        dec.base.resize(n);
        dec.fast.resize(n);
        dec.cross.resize(n);
        dec.total.resize(n);
        std::vector<double> fastnorm(n);
        for (int j = 0; j < n; ++j) {
            dec.base[j] = eq + V0[j];
            dec.fast[j] = sp.proj_s * er.V[j];
            dec.cross[j] = er.V[j] - dec.fast[j];
            dec.total[j] = dec.base[j] + dec.fast[j] + dec.cross[j];
            fastnorm[j] = dec.fast[j].norm();
        }
        dec.fast_rate = -fit_exponential_rate(dec.t, fastnorm, fp_tol * 1e-2);
        return dec;
    };

    SlavingChart out;
    out.chart.kind = ChartKind::Slaving;
    out.chart.ambient_dim = d;
    out.chart.equilibrium = eq;
    out.chart.base = base;
    out.chart.delta = params.delta;
    out.chart.pts_per_axis = params.pts_per_axis;
    out.chart.eta = split.beta_minus.value_or(0.0) / 2.0;
    out.chart.horizon = T;
    out.chart.fp_tol = params.fp_tol;
    out.chart.solve_point = [solve_parts](const Vec& coords) {
        SlavingDecomposition dec = solve_parts(coords);
        return dec.total.front();
    };
    if (params.build_grid) fill_grid(out.chart, out.chart.solve_point, params.jobs);
    out.chart.tangency_residual = measure_tangency(out.chart);
    out.decompose = solve_parts;
    return out;
}

} // namespace vprof
