#pragma once

#include <optional>
#include <vector>

#include "vprof/profiles.hpp"

namespace vprof {

/// Discrete convex (or concave) envelope of sampled values on a uniform grid,
/// with the piecewise-constant slope of the envelope and a per-point contact
/// mask (envelope touches the values within contact_tol).
struct EnvelopeResult {
    std::vector<double> tau;     // ascending grid
    std::vector<double> values;  // input samples
    std::vector<double> env;     // envelope values
    std::vector<double> slope;   // d/dtau env, right-continuous at vertices
    std::vector<bool> contact;
    bool concave = false;
};

/// Lower convex envelope by monotone chain; `concave` computes the concave
/// (upper) envelope instead. Near-collinear points are folded into their hull
/// segment deterministically, which makes the operation idempotent bit-for-bit.
EnvelopeResult convex_envelope(const std::vector<double>& tau, const std::vector<double>& values,
                               double contact_tol, bool concave = false);

/// Solution curve of the wave-fan fixed point: u, v_i, sigma_i on a grid
/// running from 0 to s in curve order (descending values when s < 0).
struct WaveFanCurve {
    int family = 0;
    Vec u_minus;
    double s = 0.0;
    std::vector<double> tau;    // curve order: tau[0] = 0, tau[n-1] = s
    std::vector<Vec> u;
    std::vector<double> v;      // f_i - envelope (>= 0 for s > 0, <= 0 for s < 0)
    std::vector<double> sigma;  // envelope slope, nondecreasing in curve order
    std::vector<double> f;      // integrated generalized eigenvalue
    std::vector<bool> contact;
    std::vector<Vec> rdir;      // reduced direction along the curve
    int iterations = 0;
    double final_change = 0.0;
};

struct WaveFanOptions {
    int grid_n = 512;
    double fp_tol = 1e-10;
    int max_iter = 200;
    double contact_tol = -1.0; // < 0: 1e-9 (1 + max|f_i|)
    ChartParams chart;         // center chart of the augmented system (N >= 2)
};

/// Wave-fan fixed point: u(tau) = u- + int r~, f_i = int lambda~,
/// v_i = f_i - conv f_i, sigma_i = (conv f_i)'. The concave envelope is used
/// for s < 0. For N = 1 the exact scalar reduction (r~ = 1) is used; for
/// systems r~ comes from the center chart of the augmented traveling-wave
/// system at (u-, 0, lambda_i(u-)).
WaveFanCurve wave_fan_fixed_point(const FluxSystem& flux, const Vec& u_minus, int family,
                                  double s, const WaveFanOptions& opt = {});

struct Rarefaction {
    double tau_from = 0.0, tau_to = 0.0;
    double speed_from = 0.0, speed_to = 0.0;
};

struct Jump {
    double tau_from = 0.0, tau_to = 0.0;
    double speed = 0.0;
    Vec u_from, u_to; // left and right states of the discontinuity
    double rh_residual = 0.0;
};

struct WaveFanSegment {
    bool is_jump = false;
    Rarefaction rarefaction;
    Jump jump;
};

/// Ordered decomposition of a converged curve into rarefaction intervals and
/// jumps; speeds are nondecreasing across segments.
struct WaveFan {
    int family = 0;
    Vec u_minus, u_plus;
    double s = 0.0;
    std::vector<WaveFanSegment> segments;
};

WaveFan classify_segments(const FluxSystem& flux, const WaveFanCurve& curve, double contact_tol,
                          double rh_tol);

/// Self-similar solution sample u(t, x) of the Riemann problem solved by the
/// fan (t > 0 required). On a jump the state right of the discontinuity is
/// returned at x = speed t exactly.
Vec sample_solution(const WaveFan& fan, const WaveFanCurve& curve, double t, double x);

/// T_i(u-, s): the right endpoint u(s) of the fan curve.
Vec wave_fan_curve_value(const FluxSystem& flux, const Vec& u_minus, int family, double s,
                         const WaveFanOptions& opt = {});

} // namespace vprof
