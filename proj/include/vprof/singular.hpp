#pragma once

#include <array>
#include <map>
#include <optional>

#include "vprof/manifolds.hpp"
#include "vprof/odeint.hpp"

namespace vprof {

/// The singular ODE dV/dt = F(V)/zeta(V) with F(0) = 0 and zeta(0) = 0.
/// G_fn is (grad zeta . F)/zeta, extended by continuity near the singular set
/// by one-sided quadratic extrapolation along grad zeta.
struct SingularSystem {
    int dim = 0;
    std::function<Vec(const Vec&)> F;
    std::function<double(const Vec&)> zeta;
    std::function<Vec(const Vec&)> grad_zeta;  // FD fallback
    std::function<Mat(const Vec&)> jacobian_F; // FD fallback
    std::optional<EquilibriumCurve> equilibria;
    double g_tol = 1e-7; // |zeta| below this uses the continuity extension

    double G_fn(const Vec& V) const;
    /// The desingularized field dV/dtau = F(V) as a SmoothField.
    SmoothField tau_field() const;
    /// The singular field F/zeta (throws no guard; caller manages zeta != 0).
    Vec singular_rhs(const Vec& V) const;
};

SingularSystem make_singular_system(int dim, std::function<Vec(const Vec&)> F,
                                    std::function<double(const Vec&)> zeta,
                                    std::function<Vec(const Vec&)> grad_zeta = nullptr,
                                    std::function<Mat(const Vec&)> jacobian_F = nullptr,
                                    std::optional<EquilibriumCurve> equilibria = std::nullopt);

enum class HypStatus { Pass, Fail, Untestable };

struct HypothesisEntry {
    HypStatus status = HypStatus::Untestable;
    double residual = 0.0;
    Vec witness;
    std::string note;
};

struct HypothesisReport {
    std::array<HypothesisEntry, 6> hyp; // H1..H6
    int n_samples = 0;
    double radius = 0.0;

    const HypothesisEntry& operator[](int i) const { return hyp.at(i - 1); }
    bool all_pass() const {
        for (const auto& h : hyp)
            if (h.status != HypStatus::Pass) return false;
        return true;
    }
    std::vector<int> failed() const {
        std::vector<int> out;
        for (int i = 0; i < 6; ++i)
            if (hyp[i].status == HypStatus::Fail) out.push_back(i + 1);
        return out;
    }
};

struct HypothesisTols {
    double tol = 1e-8;       // residual tolerance for H3, H5, H6
    double tol_angle = 1e-3; // transversality angle (radians) for H4
    double h1_tol = 1e-6;    // Jacobian FD-consistency for H1
    unsigned seed = 12345;
};

/// Check Hypotheses 1-6 on a sample cloud of the given radius. A center chart
/// of dV/dtau = F is built internally for H3; a curve of equilibria is sought
/// by continuation for H4 when none is supplied.
HypothesisReport check_hypotheses(const SingularSystem& sys, double radius, int n_samples,
                                  const HypothesisTols& tols = {});

struct SingularEvent {
    double hit_time = 0.0; // refined estimate of zeta = 0
    Vec state;
    double derivative_growth = 0.0; // max |dV/dt| over the last decade of
                                    // steps relative to the earlier median
};

struct SingularTrajectory {
    IntegrationResult traj;
    std::optional<SingularEvent> event;
};

struct SingularIntegrateOptions {
    double guard_tol = -1.0; // < 0: 1e-8 (1 + |V0|)
    double rtol = 1e-10;
    double atol = 1e-13;
};

/// Integrate dV/dt = F/zeta with a guard on |zeta|: stops with a singular-hit
/// event when |zeta| falls below guard_tol; a step-size underflow close to the
/// singular set is folded into the hit event, otherwise rethrown.
SingularTrajectory integrate_singular(const SingularSystem& sys, const Vec& V0, double t_end,
                                      const SingularIntegrateOptions& opt = {});

struct RescaledTrajectory {
    std::vector<double> t; // new parameterization
    std::vector<Vec> states;
    double quad_error = 0.0; // Richardson estimate vs half-step refinement
};

/// Reparameterize a trajectory by quadrature of d(new)/d(old) = 1/zeta(V):
/// maps a singular-time trajectory to the time of dV/dtau = F. Requires zeta
/// bounded away from zero along the input (no sign change).
RescaledTrajectory rescale_time(const SingularSystem& sys, const IntegrationResult& traj,
                                int n_quad = 2001, double guard_tol = 1e-8);

/// Inverse reparameterization, d(new)/d(old) = zeta(V): maps an F-time
/// trajectory back to singular time.
RescaledTrajectory rescale_time_inverse(const SingularSystem& sys, const IntegrationResult& traj,
                                        int n_quad = 2001, double guard_tol = 1e-8);

struct SlowManifoldOptions {
    ChartParams chart;
    bool check_hyps = true;
    double hyp_radius = 0.1;
    int hyp_samples = 200;
    HypothesisTols tols;
};

/// The manifold of the slow dynamics: a center chart of dV/dtau = F at 0,
/// together with the restricted field divided by zeta, which is nonsingular
/// on the chart (evaluated by the continuity extension where zeta = 0).
struct SlowManifold {
    ManifoldChart chart;     // gridded center chart of the tau-field
    SpectralSplit split;     // spectral data of DF(0)
    SmoothField reduced;     // slow field in base coordinates
    SingularSystem sys;

    Vec embed(const Vec& coords) const { return chart.phi(coords); }
    Vec coords_of(const Vec& ambient) const { return chart.base_coords(ambient); }
};

SlowManifold slow_manifold(const SingularSystem& sys, const SlowManifoldOptions& opt = {});

/// Center chart of the singular system: the center chart of the reduced slow
/// field, re-embedded in ambient coordinates.
ManifoldChart singular_center_chart(const SingularSystem& sys, const SlowManifoldOptions& opt,
                                    const ChartParams& nested);

/// Slow/fast decomposition of a trajectory on the singular uniformly stable
/// manifold: V = V_sl + V_f + V_p in tau-time, with the original-time grid
/// recovered by quadrature when zeta stays away from zero.
struct SlowFastDecomposition {
    std::vector<double> tau;
    std::vector<double> t; // empty when zeta enters the guard band
    std::vector<Vec> total, slow, fast, cross;
    double fast_rate = 0.0;
};

struct SingularUsChart {
    ManifoldChart chart; // base coords: (S0 base coords..., stable coords...)
    std::function<SlowFastDecomposition(const Vec&)> decompose;
};

/// Uniformly stable chart of the singular system relative to the equilibrium
/// curve E: the slaving chart (for dV/dtau = F) of the uniformly stable chart
/// of the reduced slow field.
SingularUsChart singular_us_chart(const SingularSystem& sys, const EquilibriumCurve& curve,
                                  const SlowManifoldOptions& opt, const ChartParams& nested);

} // namespace vprof
