#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vprof/field.hpp"
#include "vprof/spectral.hpp"

namespace vprof {

enum class BumpProfile { Quintic, Septic };

/// The cut-off nonlinearity p_delta(V) = [G(V) - A V] rho(|V|/delta): equal to
/// the full quadratic remainder inside B(0, delta), zero outside B(0, 2 delta).
struct CutoffNonlinearity {
    double delta = 0.0;
    BumpProfile bump = BumpProfile::Quintic;
    Mat A;
    std::function<Vec(const Vec&)> p; // G(V) - A V
    // Bounds measured on a sample cloud in B(0, 2 delta).
    double c0_bound = 0.0;   // sup |p_delta|
    double c1_bound = 0.0;   // sup directional derivative estimate
    double c_quad = 0.0;     // max |p(V)| / |V|^2

    double rho(double r) const;
    Vec operator()(const Vec& V) const;
};

CutoffNonlinearity make_cutoff(const SmoothField& field, double delta,
                               BumpProfile bump = BumpProfile::Quintic);

/// A trajectory on a uniform grid measured in the eta-weighted sup norm
/// sup_t |V(t)| exp(-eta |t|).
struct WeightedTrajectory {
    std::vector<double> t;
    std::vector<Vec> states;
    double eta = 0.0;

    double weighted_norm() const;
};

enum class ChartKind { Center, Stable, UniformlyStable, Slaving };

/// An invariant-manifold chart phi over a ball in a base subspace. Grid data
/// supports interpolation and serialization; solve_point evaluates the
/// defining fixed point exactly at one base point (empty after
/// deserialization).
struct ManifoldChart {
    ChartKind kind = ChartKind::Center;
    int ambient_dim = 0;
    Vec equilibrium;
    Mat base;          // ambient_dim x k, orthonormal columns
    // Oblique projector onto span(base) along the complementary invariant
    // subspaces (the splitting the chart is a graph over); empty means the
    // orthogonal projector base base^T.
    Mat oblique_proj;
    double delta = 0.0;
    int pts_per_axis = 0;
    std::vector<Vec> values; // row-major over the k-dim grid; empty if no grid
    std::function<Vec(const Vec&)> solve_point;
    std::function<WeightedTrajectory(const Vec&)> trajectory_fn;

    double tangency_residual = 0.0;
    double contraction_ratio = 0.0;
    double eta = 0.0;
    double horizon = 0.0;
    double fp_tol = 0.0;

    int base_dim() const { return static_cast<int>(base.cols()); }
    bool has_grid() const { return !values.empty(); }

    /// Base coordinates of an ambient point: B^T (V - equilibrium).
    Vec base_coords(const Vec& ambient) const;
    /// Chart value by multilinear interpolation on the grid (grid required).
    Vec phi_grid(const Vec& coords) const;
    /// Chart value from the exact per-point solver (solver required).
    Vec phi_exact(const Vec& coords) const;
    /// phi_grid when a grid exists, phi_exact otherwise.
    Vec phi(const Vec& coords) const;
    /// |W - phi(base_coords(W))|, using the exact solver when available.
    double distance_to(const Vec& ambient) const;
};

struct ChartParams {
    double delta = 0.1;
    double eta = 0.0;        // 0 = auto: min(beta+/4, beta-/4)
    double horizon = 0.0;    // 0 = auto from the decay-rate inequality
    int grid_n = 0;          // time grid points; 0 = auto from h_target
    double h_target = 0.02;
    double fp_tol = 1e-10;
    int max_iter = 250;
    int pts_per_axis = 5;
    bool build_grid = true;
    bool richardson = false; // extrapolate the trapezoid quadrature
    BumpProfile bump = BumpProfile::Quintic;
    int jobs = 1;
};

/// Center chart of V' = G(V) at the equilibrium, via the weighted-space fixed
/// point truncated to [-T, T] with trapezoid quadrature.
ManifoldChart center_chart(const SmoothField& field, const SpectralSplit& split,
                           const ChartParams& params);

/// Stable chart on [0, T]; trajectories decay at rate c/2, c = beta_minus.
ManifoldChart stable_chart(const SmoothField& field, const SpectralSplit& split,
                           const ChartParams& params);

/// Returns the fixed-point trajectory through one chart base point.
WeightedTrajectory chart_trajectory(const ManifoldChart& chart, const Vec& coords);

/// Uniformly stable chart over B(0, delta) in V^s + E: the union of the
/// stable charts of the equilibria E(s). Base coordinates are
/// (stable coords..., curve parameter).
ManifoldChart uniformly_stable_chart(const SmoothField& field, const EquilibriumCurve& curve,
                                     const SpectralSplit& split, const ChartParams& params);

struct UsLimit {
    Vec v_inf;          // limit point on the equilibrium curve
    double s = 0.0;     // its curve parameter
    double rate = 0.0;  // fitted exponential rate of |V(t) - V_inf|
};

/// Integrates the field from a uniformly-stable chart point to `horizon`,
/// projects the endpoint onto the curve by nearest point and verifies the
/// exponential convergence |V(T) - V_inf| e^{c T / 2} <= tol (c = beta_minus
/// of the split used to build the chart). Throws a no-convergence error when
/// the bound fails.
UsLimit us_chart_limit(const SmoothField& field, const EquilibriumCurve& curve,
                       const ManifoldChart& chart, const Vec& coords, double horizon,
                       double c_rate, double tol = 1e-6);

/// One trajectory of a slaving chart split into the base-manifold part, the
/// exponentially decaying fast part, and the interaction remainder.
struct SlavingDecomposition {
    std::vector<double> t;
    std::vector<Vec> total;   // V0 + Vf + Vp
    std::vector<Vec> base;    // V0, on the base manifold
    std::vector<Vec> fast;    // Vf = pi_s (V - V0)
    std::vector<Vec> cross;   // Vp = (pi_c + pi_u)(V - V0)
    double fast_rate = 0.0;   // fitted decay rate of |Vf|
};

struct SlavingChart {
    ManifoldChart chart; // base coords = (base-chart coords..., stable coords...)
    std::function<SlavingDecomposition(const Vec& coords)> decompose;
};

/// Slaving chart of a locally invariant submanifold `base_chart` of a center
/// manifold: trajectories decompose as V0 (+) Vf (+) Vp with Vf decaying and
/// Vp the interaction term.
SlavingChart slaving_chart(const SmoothField& field, const ManifoldChart& base_chart,
                           const SpectralSplit& split, const ChartParams& params);

} // namespace vprof
