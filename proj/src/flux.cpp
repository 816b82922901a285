#include "vprof/flux.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

#include "vprof/field.hpp"

namespace vprof {

FluxSystem make_flux(int N, std::function<Vec(const Vec&)> f, std::function<Mat(const Vec&)> Df) {
    FluxSystem flux;
    flux.N = N;
    flux.f = std::move(f);
    if (Df) {
        flux.Df = std::move(Df);
    } else {
        auto fn = flux.f;
        flux.Df = [fn](const Vec& u) { return fd_jacobian(fn, u); };
    }
    return flux;
}

EigenData FluxSystem::eigen_data(const Vec& u, const Mat* reference) const {
    if (u.size() != N) fail(ErrorKind::InvalidInput, "eigen_data: state dimension mismatch");
    Mat A = Df(u);
    require_finite(A, "eigen_data");
    Eigen::EigenSolver<Mat> es(A);
    if (es.info() != Eigen::Success)
        fail(ErrorKind::NumericFailure, "eigen_data: eigenvalue solver failed");

    double scale = std::max(1.0, A.norm());
    CVec ev = es.eigenvalues();
    for (int i = 0; i < N; ++i)
        if (std::abs(ev(i).imag()) > 1e-8 * scale)
            fail(ErrorKind::Hyperbolicity,
                 "eigen_data: complex eigenvalue " + fmt17(ev(i).real()) + " + " +
                     fmt17(ev(i).imag()) + "i; strict hyperbolicity violated");

    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return ev(a).real() < ev(b).real(); });

    EigenData out;
    out.lambda.resize(N);
    out.r.resize(N, N);
    for (int i = 0; i < N; ++i) {
        out.lambda(i) = ev(order[i]).real();
        Vec col = es.eigenvectors().col(order[i]).real();
        double nrm = col.norm();
        if (nrm < 1e-12)
            fail(ErrorKind::NumericFailure, "eigen_data: degenerate eigenvector");
        col /= nrm;
        // Sign convention for continuity along curves.
        if (reference && reference->cols() == N) {
            if (col.dot(reference->col(i)) < 0) col = -col;
        } else {
            int imax = 0;
            col.cwiseAbs().maxCoeff(&imax);
            if (col(imax) < 0) col = -col;
        }
        out.r.col(i) = col;
    }
    for (int i = 0; i + 1 < N; ++i)
        if (out.lambda(i + 1) - out.lambda(i) <= 1e-8 * scale)
            fail(ErrorKind::Hyperbolicity,
                 "eigen_data: eigenvalues " + fmt17(out.lambda(i)) + " and " +
                     fmt17(out.lambda(i + 1)) + " are not distinct");
    return out;
}

double rankine_hugoniot_residual(const FluxSystem& flux, const Vec& um, const Vec& up,
                                 double sigma) {
    return (flux.f(up) - flux.f(um) - sigma * (up - um)).norm();
}

} // namespace vprof
