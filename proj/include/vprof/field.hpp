#pragma once

#include <functional>

#include "vprof/linalg.hpp"

namespace vprof {

/// A C^2 vector field with an equilibrium point. The Jacobian callback is
/// optional; when absent it is filled with central finite differences at step
/// h = 1e-6 (1 + |V|).
struct SmoothField {
    int dim = 0;
    std::function<Vec(const Vec&)> value;
    std::function<Mat(const Vec&)> jacobian;
    Vec equilibrium;

    Vec operator()(const Vec& v) const { return value(v); }
};

/// Central finite-difference Jacobian of fn at V.
Mat fd_jacobian(const std::function<Vec(const Vec&)>& fn, const Vec& V, double scale = 1e-6);

/// Build a field; verifies |value(equilibrium)| <= 1e-10 (1 + |eq|).
SmoothField make_field(int dim, std::function<Vec(const Vec&)> value,
                       std::function<Mat(const Vec&)> jacobian = nullptr, Vec equilibrium = {});

/// Same field expressed in coordinates centered at its equilibrium.
SmoothField centered(const SmoothField& f);

/// The field of the time-reversed flow, -G(V).
SmoothField time_reversed(const SmoothField& f);

/// Parameterized curve of equilibria through a field's equilibrium.
struct EquilibriumCurve {
    std::function<Vec(double)> point;    // s -> V, point(0) = equilibrium
    std::function<Vec(double)> tangent;  // optional; FD if absent
    double s_min = -1.0, s_max = 1.0;

    Vec tangent_at(double s) const;
};

/// Checks that sampled points of E are equilibria of f (|f(E(s))| <= tol).
void validate_equilibrium_curve(const SmoothField& f, const EquilibriumCurve& curve,
                                int n_samples = 21, double tol = 1e-10);

/// Nearest point of the curve to V (golden-section on |V - E(s)|); returns s.
double nearest_on_curve(const EquilibriumCurve& curve, const Vec& V);

} // namespace vprof
