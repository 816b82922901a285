#pragma once

#include <functional>
#include <vector>

#include "vprof/linalg.hpp"

namespace vprof {

struct EigenData {
    Vec lambda;  // ascending eigenvalues of Df(u)
    Mat r;       // unit right eigenvectors, column i for lambda(i)
};

/// Flux function of a system of conservation laws u_t + f(u)_x = 0, with its
/// Jacobian and the eigen-structure of Df(u). Strict hyperbolicity (N real
/// distinct eigenvalues) is enforced at every queried point.
struct FluxSystem {
    int N = 0;
    std::function<Vec(const Vec&)> f;
    std::function<Mat(const Vec&)> Df;

    Vec operator()(const Vec& u) const { return f(u); }

    /// Eigenvalues and unit right eigenvectors of Df(u), sorted ascending.
    /// Eigenvector signs are fixed against `reference` columns when given,
    /// otherwise by making the largest-magnitude component positive.
    EigenData eigen_data(const Vec& u, const Mat* reference = nullptr) const;
};

FluxSystem make_flux(int N, std::function<Vec(const Vec&)> f,
                     std::function<Mat(const Vec&)> Df = nullptr);

/// Rankine-Hugoniot residual ||f(u+) - f(u-) - sigma (u+ - u-)||.
double rankine_hugoniot_residual(const FluxSystem& flux, const Vec& um, const Vec& up,
                                 double sigma);

} // namespace vprof
