#include "vprof/riemann.hpp"

#include <algorithm>
#include <cmath>

namespace vprof {

namespace {

// Lower convex hull vertex indices by monotone chain. Slope comparisons use a
// small absolute band so that points within rounding of a hull segment are
// folded into it; re-running the hull on its own output then reproduces the
// same vertex set and the same interpolated values bit-for-bit.
std::vector<int> lower_hull(const std::vector<double>& x, const std::vector<double>& f) {
    const int n = static_cast<int>(x.size());
    double scale = 0.0;
    for (double v : f) scale = std::max(scale, std::abs(v));
    double dx_min = x[1] - x[0];
    for (int i = 1; i + 1 < n; ++i) dx_min = std::min(dx_min, x[i + 1] - x[i]);
    const double band = 1e-13 * (1.0 + scale) / std::max(dx_min, 1e-300);

    std::vector<int> hull;
    hull.reserve(16);
    for (int i = 0; i < n; ++i) {
        while (hull.size() >= 2) {
            int a = hull[hull.size() - 2], b = hull.back();
            double sab = (f[b] - f[a]) / (x[b] - x[a]);
            double sbi = (f[i] - f[b]) / (x[i] - x[b]);
            if (sab >= sbi - band) hull.pop_back();
            else break;
        }
        hull.push_back(i);
    }
    return hull;
}

} // namespace

EnvelopeResult convex_envelope(const std::vector<double>& tau, const std::vector<double>& values,
                               double contact_tol, bool concave) {
    const int n = static_cast<int>(tau.size());
    if (n < 2) fail(ErrorKind::InvalidInput, "convex_envelope: need at least two grid points");
    if (values.size() != tau.size())
        fail(ErrorKind::InvalidInput, "convex_envelope: grid/value size mismatch");
    double dx = tau[1] - tau[0];
    for (int i = 0; i + 1 < n; ++i) {
        double d = tau[i + 1] - tau[i];
        if (!(d > 0) || std::abs(d - dx) > 1e-9 * std::abs(dx))
            fail(ErrorKind::InvalidInput, "convex_envelope: grid must be uniform ascending");
    }
    double fmax = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "convex_envelope: non-finite value");
        fmax = std::max(fmax, std::abs(v));
    }
    if (contact_tol < 0) contact_tol = 1e-9 * (1.0 + fmax);

    std::vector<double> work = values;
    if (concave)
        for (double& v : work) v = -v;

    std::vector<int> hull = lower_hull(tau, work);

    EnvelopeResult out;
    out.tau = tau;
    out.values = values;
    out.concave = concave;
    out.env.resize(n);
    out.slope.resize(n);
    out.contact.resize(n);

    for (std::size_t seg = 0; seg + 1 < hull.size(); ++seg) {
        int a = hull[seg], b = hull[seg + 1];
        double sl = (work[b] - work[a]) / (tau[b] - tau[a]);
        for (int k = a; k < b; ++k)
            out.env[k] = (k == a) ? work[a] : work[a] + sl * (tau[k] - tau[a]);
    }
    int last = hull.back();
    out.env[last] = work[last];

    std::vector<bool> ct(n);
    for (int k = 0; k < n; ++k) ct[k] = std::abs(work[k] - out.env[k]) <= contact_tol;

    // Slope of the envelope. On gap intervals and at their left boundaries
    // this is the chord slope (right-continuous at the kink); on contact runs
    // the derivative is recovered to second order (centered inside the run,
    // one-sided at its ends) so that rarefaction speeds are not half-cell
    // biased.
    const std::vector<double>& e = out.env;
    auto right_chord = [&](int k) { return (e[k + 1] - e[k]) / dx; };
    auto left_chord = [&](int k) { return (e[k] - e[k - 1]) / dx; };
    for (int k = 0; k < n; ++k) {
        if (k == n - 1) {
            if (ct[k] && k >= 2 && ct[k - 1] && ct[k - 2])
                out.slope[k] = (3 * e[k] - 4 * e[k - 1] + e[k - 2]) / (2 * dx);
            else
                out.slope[k] = left_chord(k);
            continue;
        }
        bool run_right = ct[k] && ct[k + 1];
        if (!run_right) {
            out.slope[k] = right_chord(k);
        } else if (k > 0 && ct[k - 1]) {
            out.slope[k] = (e[k + 1] - e[k - 1]) / (2 * dx);
        } else if (k + 2 < n && ct[k + 2]) {
            out.slope[k] = (-3 * e[k] + 4 * e[k + 1] - e[k + 2]) / (2 * dx);
        } else {
            out.slope[k] = right_chord(k);
        }
    }

    if (concave) {
        for (int k = 0; k < n; ++k) {
            out.env[k] = -out.env[k];
            out.slope[k] = -out.slope[k];
        }
    }
    for (int k = 0; k < n; ++k) out.contact[k] = std::abs(values[k] - out.env[k]) <= contact_tol;
    return out;
}

namespace {

struct ReducedField {
    // Unit direction and generalized eigenvalue at (u, v, sigma).
    std::function<Vec(const Vec&, double, double)> dir;
    const FluxSystem* flux = nullptr;

    double gen_eig(const Vec& u, const Vec& r) const { return (flux->Df(u) * r).dot(r); }
};

ReducedField make_reduced_field(const FluxSystem& flux, const Vec& u_minus, int family, double s,
                                const WaveFanOptions& opt,
                                std::shared_ptr<ReducedDirection>& keep_alive) {
    ReducedField rf;
    rf.flux = &flux;
    if (flux.N == 1) {
        rf.dir = [](const Vec&, double, double) { return Vec(Vec::Ones(1)); };
        return rf;
    }
    TravelingWaveSystem tw = build_tw_system(flux, u_minus, family);
    ChartParams cp = opt.chart;
    cp.build_grid = false;
    if (std::abs(s) > cp.delta)
        fail(ErrorKind::Domain, "wave_fan: |s| = " + fmt17(std::abs(s)) +
                                    " exceeds the chart radius " + fmt17(cp.delta));
    SpectralSplit split = classify_spectrum(tw.field.jacobian(tw.field.equilibrium));
    ManifoldChart chart = center_chart(tw.field, split, cp);
    keep_alive = std::make_shared<ReducedDirection>(reduced_direction(tw, chart));
    auto rd = keep_alive;
    rf.dir = [rd](const Vec& u, double v, double sigma) { return (*rd)(u, v, sigma); };
    return rf;
}

} // namespace

WaveFanCurve wave_fan_fixed_point(const FluxSystem& flux, const Vec& u_minus, int family,
                                  double s, const WaveFanOptions& opt) {
    if (u_minus.size() != flux.N)
        fail(ErrorKind::InvalidInput, "wave_fan: state dimension mismatch");
    if (!std::isfinite(s)) fail(ErrorKind::InvalidInput, "wave_fan: non-finite strength");
    EigenData ed = flux.eigen_data(u_minus);
    if (family < 0 || family >= flux.N)
        fail(ErrorKind::InvalidInput, "wave_fan: family index out of range");
    double lambda0 = ed.lambda(family);

    WaveFanCurve curve;
    curve.family = family;
    curve.u_minus = u_minus;
    curve.s = s;
    if (s == 0.0) {
        curve.tau = {0.0};
        curve.u = {u_minus};
        curve.v = {0.0};
        curve.sigma = {lambda0};
        curve.f = {0.0};
        curve.contact = {true};
        return curve;
    }

    std::shared_ptr<ReducedDirection> keep_alive;
    ReducedField rf = make_reduced_field(flux, u_minus, family, s, opt, keep_alive);

    const int n = std::max(2, opt.grid_n);
    curve.tau.resize(n);
    for (int k = 0; k < n; ++k) curve.tau[k] = s * k / (n - 1.0);

    // Initial iterate: straight line along r_i(u-), zero wave part.
    curve.u.assign(n, u_minus);
    curve.v.assign(n, 0.0);
    curve.sigma.assign(n, lambda0);
    curve.f.assign(n, 0.0);
    for (int k = 0; k < n; ++k) curve.u[k] = u_minus + curve.tau[k] * ed.r.col(family);

    std::vector<Vec> R(n);
    std::vector<double> L(n), f_new(n), v_new(n), sig_new(n);
    std::vector<Vec> u_new(n);
    std::vector<double> tau_asc(n), f_asc(n);
    double fmax_seen = 1.0;

    auto sweep = [&](bool relax) {
        for (int k = 0; k < n; ++k) {
            R[k] = rf.dir(curve.u[k], curve.v[k], curve.sigma[k]);
            L[k] = rf.gen_eig(curve.u[k], R[k]);
        }
        u_new[0] = u_minus;
        f_new[0] = 0.0;
        for (int k = 0; k + 1 < n; ++k) {
            double dt = curve.tau[k + 1] - curve.tau[k];
            u_new[k + 1] = u_new[k] + (dt / 2.0) * (R[k] + R[k + 1]);
            f_new[k + 1] = f_new[k] + (dt / 2.0) * (L[k] + L[k + 1]);
        }
        // Envelope on the ascending grid; concave branch for s < 0.
        bool rev = s < 0;
        for (int k = 0; k < n; ++k) {
            int src = rev ? n - 1 - k : k;
            tau_asc[k] = curve.tau[src];
            f_asc[k] = f_new[src];
        }
        EnvelopeResult env = convex_envelope(tau_asc, f_asc, -1.0, rev);
        for (int k = 0; k < n; ++k) {
            int src = rev ? n - 1 - k : k;
            v_new[k] = f_new[k] - env.env[src];
            sig_new[k] = env.slope[src];
        }
        double change = 0.0;
        for (int k = 0; k < n; ++k) {
            change = std::max(change, (u_new[k] - curve.u[k]).lpNorm<Eigen::Infinity>());
            change = std::max(change, std::abs(v_new[k] - curve.v[k]));
            change = std::max(change, std::abs(sig_new[k] - curve.sigma[k]));
            fmax_seen = std::max(fmax_seen, std::abs(f_new[k]));
        }
        double w = relax ? 0.5 : 1.0;
        for (int k = 0; k < n; ++k) {
            curve.u[k] = w * u_new[k] + (1 - w) * curve.u[k];
            curve.v[k] = w * v_new[k] + (1 - w) * curve.v[k];
            curve.sigma[k] = w * sig_new[k] + (1 - w) * curve.sigma[k];
            curve.f[k] = f_new[k];
        }
        return change;
    };

    double prev = -1.0;
    bool relax = false;
    bool done = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
        double change = sweep(relax);
        curve.iterations = it;
        curve.final_change = change;
        if (!std::isfinite(change) || change > 1e8)
            fail(ErrorKind::NoContraction, "wave_fan: fixed point diverged after " +
                                               std::to_string(it) + " iterations");
        if (change <= opt.fp_tol) {
            done = true;
            break;
        }
        if (prev > 0 && change / prev > 0.9) relax = true;
        prev = change;
    }
    if (!done)
        fail(ErrorKind::NoContraction,
             "wave_fan: no convergence in " + std::to_string(opt.max_iter) +
                 " iterations (last change " + fmt17(curve.final_change) + ")");
    // One final undamped sweep so sigma is exactly the envelope slope of the
    // converged curve.
    sweep(false);

    double ctol = opt.contact_tol >= 0 ? opt.contact_tol : 1e-9 * (1.0 + fmax_seen);
    curve.contact.resize(n);
    for (int k = 0; k < n; ++k) curve.contact[k] = std::abs(curve.v[k]) <= ctol;
    curve.rdir.resize(n);
    for (int k = 0; k < n; ++k) curve.rdir[k] = R[k];
    return curve;
}

WaveFan classify_segments(const FluxSystem& flux, const WaveFanCurve& curve, double contact_tol,
                          double rh_tol) {
    const int n = static_cast<int>(curve.tau.size());
    WaveFan fan;
    fan.family = curve.family;
    fan.u_minus = curve.u_minus;
    fan.u_plus = curve.u.back();
    fan.s = curve.s;
    if (n < 2) return fan; // s = 0: empty segment list

    double fmax = 1.0;
    for (double f : curve.f) fmax = std::max(fmax, std::abs(f));
    if (contact_tol < 0) contact_tol = 1e-9 * (1.0 + fmax);

    std::vector<bool> contact(n);
    for (int k = 0; k < n; ++k) contact[k] = std::abs(curve.v[k]) <= contact_tol;
    if (!contact.front() || !contact.back())
        fail(ErrorKind::Classification,
             "classify_segments: curve endpoints are not contact points");

    // Maximal contact runs, in curve order.
    std::vector<std::pair<int, int>> runs;
    for (int k = 0; k < n;) {
        if (!contact[k]) { ++k; continue; }
        int j = k;
        while (j + 1 < n && contact[j + 1]) ++j;
        runs.push_back({k, j});
        k = j + 1;
    }

    double sigma_scale = 1.0;
    for (double sg : curve.sigma) sigma_scale = std::max(sigma_scale, std::abs(sg));

    auto check_rarefaction_direction = [&](int a, int b) {
        // On contact intervals the reduced direction coincides with the
        // genuine eigenvector field r_i(u).
        if (curve.rdir.empty()) return;
        for (int k = a; k <= b; k += std::max(1, (b - a) / 8)) {
            Mat ref(flux.N, flux.N);
            for (int c = 0; c < flux.N; ++c) ref.col(c) = curve.rdir[k];
            EigenData ed = flux.eigen_data(curve.u[k], &ref);
            double dev = (curve.rdir[k] - ed.r.col(curve.family)).norm();
            if (dev > 1e-6)
                fail(ErrorKind::Classification,
                     "classify_segments: reduced direction deviates from r_i by " + fmt17(dev) +
                         " on a contact interval");
        }
    };

    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto [a, b] = runs[i];
        if (b > a) {
            check_rarefaction_direction(a, b);
            Rarefaction r;
            r.tau_from = curve.tau[a];
            r.tau_to = curve.tau[b];
            r.speed_from = curve.sigma[a];
            r.speed_to = curve.sigma[b];
            WaveFanSegment seg;
            seg.is_jump = false;
            seg.rarefaction = r;
            fan.segments.push_back(seg);
        }
        if (i + 1 < runs.size()) {
            int c = runs[i].second, d = runs[i + 1].first;
            double smin = curve.sigma[c], smax = smin;
            for (int k = c; k <= d; ++k) {
                smin = std::min(smin, curve.sigma[k]);
                smax = std::max(smax, curve.sigma[k]);
            }
            if (smax - smin > contact_tol * sigma_scale * 1e3 + 1e-9)
                fail(ErrorKind::Classification,
                     "classify_segments: sigma varies by " + fmt17(smax - smin) +
                         " on the gap interval [" + fmt17(curve.tau[c]) + ", " +
                         fmt17(curve.tau[d]) + "]");
            Jump j;
            j.tau_from = curve.tau[c];
            j.tau_to = curve.tau[d];
            j.speed = 0.5 * (smin + smax);
            j.u_from = curve.u[c];
            j.u_to = curve.u[d];
            j.rh_residual = rankine_hugoniot_residual(flux, j.u_from, j.u_to, j.speed);
            if (j.rh_residual > rh_tol)
                fail(ErrorKind::Classification,
                     "classify_segments: Rankine-Hugoniot residual " + fmt17(j.rh_residual) +
                         " exceeds " + fmt17(rh_tol));
            WaveFanSegment seg;
            seg.is_jump = true;
            seg.jump = j;
            fan.segments.push_back(seg);
        }
    }

    // Speeds are nondecreasing across segments.
    double last_speed = -std::numeric_limits<double>::infinity();
    for (const auto& seg : fan.segments) {
        double lo = seg.is_jump ? seg.jump.speed : seg.rarefaction.speed_from;
        double hi = seg.is_jump ? seg.jump.speed : seg.rarefaction.speed_to;
        if (lo < last_speed - 1e-9)
            fail(ErrorKind::Classification, "classify_segments: segment speeds not ordered");
        last_speed = hi;
    }
    return fan;
}

Vec sample_solution(const WaveFan& fan, const WaveFanCurve& curve, double t, double x) {
    if (!(t > 0)) fail(ErrorKind::InvalidInput, "sample_solution: t must be positive");
    double xi = x / t;
    if (fan.segments.empty()) return fan.u_minus;

    auto state_at_tau = [&](double tau) {
        // Locate tau on the curve grid (curve order) and return u there.
        const auto& tg = curve.tau;
        int n = static_cast<int>(tg.size());
        for (int k = 0; k + 1 < n; ++k) {
            double a = tg[k], b = tg[k + 1];
            if ((tau - a) * (tau - b) <= 0) {
                double w = (b == a) ? 0.0 : (tau - a) / (b - a);
                return Vec(curve.u[k] + w * (curve.u[k + 1] - curve.u[k]));
            }
        }
        return curve.u.back();
    };

    for (const auto& seg : fan.segments) {
        if (seg.is_jump) {
            if (xi < seg.jump.speed) return seg.jump.u_from;
            // At and right of the discontinuity.
            if (xi == seg.jump.speed) return seg.jump.u_to;
            continue;
        }
        const Rarefaction& r = seg.rarefaction;
        if (xi < r.speed_from) return state_at_tau(r.tau_from);
        if (xi <= r.speed_to) {
            // Invert sigma(tau) = xi inside the fan (sigma monotone in curve
            // order between tau_from and tau_to).
            const auto& tg = curve.tau;
            int n = static_cast<int>(tg.size());
            int a = 0, b = n - 1;
            for (int k = 0; k < n; ++k) {
                if (tg[k] == r.tau_from) a = k;
                if (tg[k] == r.tau_to) b = k;
            }
            Vec best = curve.u[a];
            double bestd = std::abs(curve.sigma[a] - xi);
            for (int k = a; k <= b; ++k) {
                double d = std::abs(curve.sigma[k] - xi);
                if (d < bestd) {
                    bestd = d;
                    best = curve.u[k];
                }
                if (k + 1 <= b) {
                    double s0 = curve.sigma[k], s1 = curve.sigma[k + 1];
                    if ((xi - s0) * (xi - s1) < 0) {
                        double w = (xi - s0) / (s1 - s0);
                        Vec cand = curve.u[k] + w * (curve.u[k + 1] - curve.u[k]);
                        return cand;
                    }
                }
            }
            return best;
        }
    }
    return fan.u_plus;
}

Vec wave_fan_curve_value(const FluxSystem& flux, const Vec& u_minus, int family, double s,
                         const WaveFanOptions& opt) {
    WaveFanCurve curve = wave_fan_fixed_point(flux, u_minus, family, s, opt);
    return curve.u.back();
}

} // namespace vprof
