#include "vprof/ns.hpp"

namespace vprof {

namespace {

double fd1(const std::function<double(double)>& f, double x) {
    double h = 1e-6 * (1.0 + std::abs(x));
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

} // namespace

SingularSystem reduce_ns_steady(const PolytropicNSParams& params_in) {
    PolytropicNSParams params = params_in;
    if (!(params.R > 0) || !(params.gamma > 1))
        fail(ErrorKind::InvalidInput, "reduce_ns_steady: need R > 0 and gamma > 1");
    if (!params.p) {
        double R = params.R;
        params.p = [R](double rho, double theta) { return R * rho * theta; };
    }
    if (!(params.rho0 > 0) || !(params.theta0 > 0))
        fail(ErrorKind::InvalidInput, "reduce_ns_steady: base state must be positive");
    {
        double nu0 = params.nu(params.rho0), k0 = params.k(params.rho0);
        double prho = (params.p(params.rho0 + 1e-6, params.theta0) -
                       params.p(params.rho0 - 1e-6, params.theta0)) /
                      2e-6;
        if (!(nu0 > 0) || !(k0 > 0) || !(prho > 0))
            fail(ErrorKind::InvalidInput,
                 "reduce_ns_steady: positivity of nu, k, p_rho violated at the base state");
    }

    const double rho0 = params.rho0, theta0 = params.theta0;
    const double eR = params.R / (params.gamma - 1.0); // e = eR * theta
    auto nu = params.nu;
    auto kc = params.k;
    auto pfun = params.p;

    // F for the unshifted state (rho, v, theta, w1, w2); the caller-facing
    // system is shifted so that (rho0, 0, theta0, 0, 0) is the origin.
    auto F_raw = [nu, kc, pfun, eR](const Vec& V) {
        double rho = V(0), v = V(1), theta = V(2), w1 = V(3), w2 = V(4);
        if (!(rho > 0) || !(theta > 0))
            fail(ErrorKind::SingularReduction,
                 "reduce_ns_steady: state left the positivity region (rho = " + fmt17(rho) +
                     ", theta = " + fmt17(theta) + ")");
        double nuv = nu(rho), kv = kc(rho);
        double det = nuv * kv;
        if (!(std::abs(det) > 1e-14))
            fail(ErrorKind::SingularReduction,
                 "reduce_ns_steady: diffusion block is numerically singular (det = " +
                     fmt17(det) + ")");
        double nur = fd1(nu, rho), kr = fd1(kc, rho);
        double h = 1e-6 * (1.0 + rho + theta);
        double prho = (pfun(rho + h, theta) - pfun(rho - h, theta)) / (2 * h);
        double pth = (pfun(rho, theta + h) - pfun(rho, theta - h)) / (2 * h);
        double pv = pfun(rho, theta);
        double e = eR * theta;
        double Etot = 0.5 * rho * v * v + rho * e + pv;

        // Block rows of A [rho_x; w] = diag(0, b) [rho_xx; w_x]:
        //   mass:     v rho_x + A12 . w = 0,           A12 = (rho, 0)
        //   momentum: A21[0] rho_x + A22[0] . w = nu w1_x
        //   energy:   A21[1] rho_x + A22[1] . w = nu v w1_x + k w2_x
        Vec A12(2);
        A12 << rho, 0.0;
        Vec A21(2);
        A21 << v * v + prho - nur * w1,
            v * (0.5 * v * v + e + prho) - kr * w2 - nur * v * w1;
        Mat A22(2, 2);
        A22 << 2.0 * rho * v, pth, Etot + rho * v * v - nuv * w1, v * (rho * eR + pth);

        Vec w(2);
        w << w1, w2;
        // rhs = (A22 v - A21 A12^T) w, then solve b x = rhs with
        // b = [[nu, 0], [nu v, k]].
        Vec rhs = A22 * (v * w) - A21 * (A12.dot(w));
        double x1 = rhs(0) / nuv;
        double x2 = (rhs(1) - nuv * v * x1) / kv;

        Vec F(5);
        F(0) = -A12.dot(w);
        F(1) = v * w1;
        F(2) = v * w2;
        F(3) = x1;
        F(4) = x2;
        return F;
    };

    Vec base(5);
    base << rho0, 0.0, theta0, 0.0, 0.0;
    auto F = [F_raw, base](const Vec& X) { return F_raw(Vec(base + X)); };
    auto zeta = [](const Vec& X) { return X(1); };
    auto grad_zeta = [](const Vec&) {
        Vec g = Vec::Zero(5);
        g(1) = 1.0;
        return g;
    };

    EquilibriumCurve E;
    E.point = [](double s) {
        Vec p = Vec::Zero(5);
        p(1) = s;
        return p;
    };
    E.tangent = [](double) {
        Vec t = Vec::Zero(5);
        t(1) = 1.0;
        return t;
    };
    E.s_min = -0.5;
    E.s_max = 0.5;

    return make_singular_system(5, F, zeta, grad_zeta, nullptr, E);
}

} // namespace vprof
