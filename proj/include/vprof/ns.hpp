#pragma once

#include "vprof/singular.hpp"

namespace vprof {

/// Material functions of a polytropic gas: pressure p(rho, theta) with
/// p_rho > 0, internal energy e = R theta / (gamma - 1), viscosity nu(rho)
/// and heat conduction k(rho), all positive on the working region.
struct PolytropicNSParams {
    double R = 1.0;
    double gamma = 1.4;
    std::function<double(double)> nu = [](double) { return 1.0; };
    std::function<double(double)> k = [](double) { return 1.0; };
    // Defaults to the ideal-gas law R rho theta.
    std::function<double(double, double)> p;
    // Base constant state (rho0, theta0) with v = 0; positivity is required.
    double rho0 = 1.0;
    double theta0 = 1.0;
};

/// Steady one-dimensional Navier-Stokes reduced to the singular first-order
/// system in V = (rho, v, theta, w1, w2) with w = (v_x, theta_x) and
/// zeta(V) = v, shifted so the base constant state sits at the origin. The
/// rho-equation is multiplied through by v, so F is smooth and zeta carries
/// the whole singularity. Fails when the diffusion block b = [[nu,0],[nu v,k]]
/// is numerically singular at a queried state.
SingularSystem reduce_ns_steady(const PolytropicNSParams& params);

} // namespace vprof
