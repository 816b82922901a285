#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "vprof/linalg.hpp"

namespace vprof {

enum class Subspace { Stable, Unstable, Center };

/// Splitting of R^d into the stable / unstable / center generalized
/// eigenspaces of a matrix A, with the associated (oblique) projections and
/// the spectral gap rates beta_plus / beta_minus.
struct SpectralSplit {
    int dim = 0;
    CVec eigenvalues;            // all d eigenvalues
    Mat basis_s, basis_u, basis_c; // d x k real bases (complex pairs as 2-dim real blocks)
    Mat proj_s, proj_u, proj_c;    // d x d projections, proj_s + proj_u + proj_c = I
    std::optional<double> beta_plus;  // min Re(lambda) over Re > tol_zero
    std::optional<double> beta_minus; // min -Re(lambda) over Re < -tol_zero
    double tol_zero = 0.0;

    int dim_s() const { return static_cast<int>(basis_s.cols()); }
    int dim_u() const { return static_cast<int>(basis_u.cols()); }
    int dim_c() const { return static_cast<int>(basis_c.cols()); }

    const Mat& proj(Subspace which) const {
        switch (which) {
            case Subspace::Stable: return proj_s;
            case Subspace::Unstable: return proj_u;
            default: return proj_c;
        }
    }
    const Mat& basis(Subspace which) const {
        switch (which) {
            case Subspace::Stable: return basis_s;
            case Subspace::Unstable: return basis_u;
            default: return basis_c;
        }
    }
};

/// Classify the spectrum of a small dense real matrix. Eigenvalues with
/// |Re lambda| <= tol_zero count as center; tol_zero < 0 selects the default
/// 1e-9 * ||A||. Generalized eigenspaces are computed from repeated kernels
/// of (A - lambda I)^k, k <= d.
SpectralSplit classify_spectrum(const Mat& A, double tol_zero = -1.0);

/// Apply the projection onto the requested subspace.
Vec project(const SpectralSplit& split, Subspace which, const Vec& v);

struct ExpmInfo {
    int pade_order = 13;
    int squarings = 0;
};

/// Matrix exponential by Pade(13) scaling and squaring.
Mat expm(const Mat& A, ExpmInfo* info = nullptr);

/// exp(A t) v. Throws a range error when ||A t|| exceeds the overflow guard.
Vec expm_action(const Mat& A, double t, const Vec& v, ExpmInfo* info = nullptr);

struct DecaySample {
    double t = 0.0;
    double ratio = 0.0; // |exp(At) pi v| / (rate(t) |v|)
};

/// Smallest admissible constants in the exponential dichotomy bounds
///   |exp(At) pi_u v| <= C exp(+beta_plus t / 2) |v|   (t < 0)
///   |exp(At) pi_s v| <= C exp(-beta_minus t / 2) |v|  (t > 0)
/// measured over the given samples. Samples exceeding c_ref are listed as
/// violations (data, not an error).
struct DecayReport {
    double c_stable = 0.0;   // 0 when no applicable samples
    double c_unstable = 0.0;
    std::vector<DecaySample> stable_samples;
    std::vector<DecaySample> unstable_samples;
    std::vector<DecaySample> violations;
};

DecayReport decay_bound_check(const SpectralSplit& split, const Mat& A,
                              const std::vector<std::pair<double, Vec>>& samples,
                              double c_ref = std::numeric_limits<double>::infinity());

} // namespace vprof
