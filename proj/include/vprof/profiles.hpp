#pragma once

#include <memory>
#include <optional>

#include "vprof/flux.hpp"
#include "vprof/manifolds.hpp"
#include "vprof/odeint.hpp"

namespace vprof {

/// First-order augmentation of the traveling-wave equation: state
/// V = (U, p, sigma), field G = (p, [Df(U) - sigma I] p, 0), equilibrium
/// (ubar, 0, lambda_i(ubar)).
struct TravelingWaveSystem {
    FluxSystem flux;
    int family = 0; // 0-based
    Vec ubar;
    double lambda_bar = 0.0;
    Vec r_bar;
    SmoothField field;

    int dim() const { return 2 * flux.N + 1; }
};

TravelingWaveSystem build_tw_system(const FluxSystem& flux, const Vec& ubar, int family);

/// The reduced direction field r~_i(U, v, sigma) extracted from a center
/// chart of the augmented system: the manifold satisfies p = v r~_i with
/// |r~_i| = 1 and r~_i(ubar, 0, lambda_i) = r_i. The scalar case N = 1 is the
/// exact reduction r~ = 1.
struct ReducedDirection {
    std::shared_ptr<const TravelingWaveSystem> tw;
    std::shared_ptr<const ManifoldChart> chart;

    Vec operator()(const Vec& U, double v, double sigma) const;
};

ReducedDirection reduced_direction(const TravelingWaveSystem& tw, const ManifoldChart& chart);

/// Generalized eigenvalue <Df(U) r~, r~>.
double generalized_eigenvalue(const TravelingWaveSystem& tw, const ReducedDirection& rdir,
                              const Vec& U, double v, double sigma);

/// A discretized profile with endpoint limits and fitted decay rates.
struct Profile {
    std::vector<double> y;
    std::vector<Vec> U;
    std::vector<Vec> p;
    Vec u_left, u_right;
    double sigma = 0.0;
    double rate_left = 0.0, rate_right = 0.0;

    // Dense sampler (shifted integrator output); clamps to endpoint limits.
    std::shared_ptr<const IntegrationResult> dense;
    double y_shift = 0.0; // profile y = integrator t - y_shift
    Vec sample(double y_query) const;
    Vec sample_derivative(double y_query) const; // 4th-order central stencil
};

struct ConnectionReport {
    bool connected = false;
    double miss_distance = 0.0;
    double rh_residual = 0.0;
    std::string detail;
};

struct ConnectionResult {
    std::optional<Profile> profile;
    ConnectionReport report;
};

struct ShootOptions {
    double horizon = 50.0; // doubled up to 3 times before giving up
    double tol = 1e-8;
    double seed_offset = 1e-7;
    double rtol = 1e-12;
    double h_max = 0.0; // cap on integrator steps (0 = none); tightens the
                        // dense output for high-order sampling of profiles
    double chart_delta = 0.05;
};

/// Traveling wave joining u- to u+ at speed sigma, by shooting along the
/// unstable manifold of u- for the profile ODE
/// U' = f(U) - sigma U - (f(u-) - sigma u-).
ConnectionResult solve_traveling_wave(const FluxSystem& flux, const Vec& um, const Vec& up,
                                      double sigma, const ShootOptions& opt = {});

/// Boundary layer U(0) = ub, U(+inf) = u0 for U' = f(U) - f(u0); also reports
/// the admissible dimension (number of negative eigenvalues of Df(u0)).
struct BoundaryLayerResult {
    std::optional<Profile> profile;
    ConnectionReport report;
    int admissible_dim = 0;
};

BoundaryLayerResult boundary_layer_connect(const FluxSystem& flux, const Vec& u0, const Vec& ub,
                                           const ShootOptions& opt = {});

} // namespace vprof
