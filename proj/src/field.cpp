#include "vprof/field.hpp"

namespace vprof {

Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& V, double scale) {
    const int d = static_cast<int>(V.size());
    double h = scale * (1.0 + V.norm());
    Mat J(d, d);
    Vec vp = V, vm = V;
    for (int j = 0; j < d; ++j) {
        vp(j) += h;
        vm(j) -= h;
        J.col(j) = (fn(vp) - fn(vm)) / (2.0 * h);
        vp(j) = V(j);
        vm(j) = V(j);
    }
    return J;
}

SmoothField make_field(int dim, std::function<Vec(const Vec&)> value,
                       std::function<Mat(const Vec&)> jacobian, Vec equilibrium) {
    SmoothField f;
    f.dim = dim;
    f.value = std::move(value);
    if (equilibrium.size() == 0) equilibrium = Vec::Zero(dim);
    if (equilibrium.size() != dim)
        fail(ErrorKind::InvalidInput, "make_field: equilibrium dimension mismatch");
    f.equilibrium = std::move(equilibrium);
    if (jacobian) {
        f.jacobian = std::move(jacobian);
    } else {
        auto v = f.value;
        f.jacobian = [v](const Vec& x) { return fd_jacobian(v, x); };
    }
    double resid = f.value(f.equilibrium).norm();
    if (resid > 1e-10 * (1.0 + f.equilibrium.norm()))
        fail(ErrorKind::InvalidInput,
             "make_field: |G(equilibrium)| = " + fmt17(resid) + " is not zero");
    return f;
}

SmoothField centered(const SmoothField& f) {
    if (f.equilibrium.norm() == 0.0) return f;
    SmoothField g;
    g.dim = f.dim;
    Vec eq = f.equilibrium;
    auto val = f.value;
    auto jac = f.jacobian;
    g.value = [val, eq](const Vec& x) { return val(Vec(eq + x)); };
    g.jacobian = [jac, eq](const Vec& x) { return jac(Vec(eq + x)); };
    g.equilibrium = Vec::Zero(f.dim);
    return g;
}

SmoothField time_reversed(const SmoothField& f) {
    SmoothField g;
    g.dim = f.dim;
    auto val = f.value;
    auto jac = f.jacobian;
    g.value = [val](const Vec& x) { return Vec(-val(x)); };
    g.jacobian = [jac](const Vec& x) { return Mat(-jac(x)); };
    g.equilibrium = f.equilibrium;
    return g;
}

Vec EquilibriumCurve::tangent_at(double s) const {
    if (tangent) return tangent(s);
    double h = 1e-6 * (1.0 + std::abs(s));
    return (point(s + h) - point(s - h)) / (2.0 * h);
}

void validate_equilibrium_curve(const SmoothField& f, const EquilibriumCurve& curve, int n_samples,
                                double tol) {
    for (int i = 0; i < n_samples; ++i) {
        double s = curve.s_min + (curve.s_max - curve.s_min) * i / (n_samples - 1.0);
        Vec p = curve.point(s);
        double resid = f.value(p).norm();
        if (resid > tol * (1.0 + p.norm()))
            fail(ErrorKind::InvalidInput, "equilibrium curve: |G(E(" + fmt17(s) +
                                              "))| = " + fmt17(resid) + " exceeds " + fmt17(tol));
    }
}

double nearest_on_curve(const EquilibriumCurve& curve, const Vec& V) {
    auto dist = [&](double s) { return (V - curve.point(s)).squaredNorm(); };
    // Coarse scan, then golden-section refinement.
    const int n = 101;
    double best_s = curve.s_min, best_d = dist(best_s);
    for (int i = 1; i < n; ++i) {
        double s = curve.s_min + (curve.s_max - curve.s_min) * i / (n - 1.0);
        double d = dist(s);
        if (d < best_d) { best_d = d; best_s = s; }
    }
    double step = (curve.s_max - curve.s_min) / (n - 1.0);
    double a = std::max(curve.s_min, best_s - step);
    double b = std::min(curve.s_max, best_s + step);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = dist(c), fd = dist(d);
    for (int it = 0; it < 120 && (b - a) > 1e-14 * (1.0 + std::abs(a)); ++it) {
        if (fc < fd) { b = d; d = c; fd = fc; c = b - gr * (b - a); fc = dist(c); }
        else { a = c; c = d; fc = fd; d = a + gr * (b - a); fd = dist(d); }
    }
    return 0.5 * (a + b);
}

} // namespace vprof
