#include "vprof/catalog.hpp"

#include "vprof/ns.hpp"

namespace vprof {

namespace {

double get(const std::map<std::string, double>& params, const std::string& key, double dflt,
           std::map<std::string, double>& used) {
    auto it = params.find(key);
    double v = it == params.end() ? dflt : it->second;
    used[key] = v;
    return v;
}

EquilibriumCurve axis_curve(int dim, int axis, double range = 0.5) {
    EquilibriumCurve E;
    E.point = [dim, axis](double s) {
        Vec p = Vec::Zero(dim);
        p(axis) = s;
        return p;
    };
    E.tangent = [dim, axis](double) {
        Vec t = Vec::Zero(dim);
        t(axis) = 1.0;
        return t;
    };
    E.s_min = -range;
    E.s_max = range;
    return E;
}

} // namespace

const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names = {
        "burgers",       "linear-example-3", "jordan-example",   "scalar-linear-bl",
        "p-system",      "singular-fast-ex", "singular-slow-ex", "rotation-toy",
        "toy-5d",        "ns-polytropic"};
    return names;
}

std::map<std::string, std::string> catalog_descriptions() {
    return {
        {"burgers", "scalar Burgers flux f(u) = u^2/2"},
        {"linear-example-3",
         "4-d linear ODE with rates 2, -1 and a rotation at speed 3 (params: none)"},
        {"jordan-example", "2-d nilpotent Jordan block ODE"},
        {"scalar-linear-bl", "scalar linear flux f(u) = a u (a = -1)"},
        {"p-system", "2x2 linear p-system flux f(u1,u2) = (u2, k u1) (k = 1)"},
        {"singular-fast-ex", "v1' = -v2/v1, v2' = -v2: loses regularity on v1 = 0"},
        {"singular-slow-ex", "v1' = -v3, v2' = -v2/v1, v3' = -v3: higher-derivative loss"},
        {"rotation-toy", "v1' = v2/eps, v2' = -v1/eps, eps' = 0: no slow limit"},
        {"toy-5d", "5-d slow/fast toy: v1' = -5v1, v2' = -v2/eps, rotation in (v3,v4)"},
        {"ns-polytropic",
         "steady compressible Navier-Stokes, polytropic gas (gamma = 1.4, R = 1, nu = 1, "
         "kappa = 1, rho0 = 1, theta0 = 1), shifted to the base state"},
    };
}

CatalogEntry make_system(const std::string& name, const std::map<std::string, double>& params) {
    CatalogEntry e;
    e.name = name;
    auto desc = catalog_descriptions();
    if (desc.count(name)) e.description = desc[name];

    std::map<std::string, double> used;
    if (name == "burgers") {
        e.kind = SystemKind::Flux;
        e.dim = 1;
        e.flux = make_flux(
            1, [](const Vec& u) { return Vec(0.5 * u.array().square().matrix()); },
            [](const Vec& u) { return Mat(Mat::Constant(1, 1, u(0))); });
    } else if (name == "scalar-linear-bl") {
        double a = get(params, "a", -1.0, used);
        e.kind = SystemKind::Flux;
        e.dim = 1;
        e.flux = make_flux(1, [a](const Vec& u) { return Vec(a * u); },
                           [a](const Vec&) { return Mat(Mat::Constant(1, 1, a)); });
    } else if (name == "p-system") {
        double k = get(params, "k", 1.0, used);
        if (!(k > 0)) fail(ErrorKind::InvalidInput, "p-system: k must be positive");
        Mat L(2, 2);
        L << 0, 1, k, 0;
        e.kind = SystemKind::Flux;
        e.dim = 2;
        e.flux = make_flux(2, [L](const Vec& u) { return Vec(L * u); },
                           [L](const Vec&) { return L; });
    } else if (name == "linear-example-3") {
        Mat A = Mat::Zero(4, 4);
        A(0, 0) = 2.0;
        A(1, 1) = -1.0;
        A(2, 3) = -3.0;
        A(3, 2) = 3.0;
        e.kind = SystemKind::LinearOde;
        e.dim = 4;
        e.ode = make_field(4, [A](const Vec& v) { return Vec(A * v); },
                           [A](const Vec&) { return A; });
    } else if (name == "jordan-example") {
        Mat A(2, 2);
        A << 0, 1, 0, 0;
        e.kind = SystemKind::LinearOde;
        e.dim = 2;
        e.ode = make_field(2, [A](const Vec& v) { return Vec(A * v); },
                           [A](const Vec&) { return A; });
    } else if (name == "singular-fast-ex") {
        e.kind = SystemKind::Singular;
        e.dim = 2;
        e.singular = make_singular_system(
            2,
            [](const Vec& v) {
                Vec f(2);
                f << -v(1), -v(0) * v(1);
                return f;
            },
            [](const Vec& v) { return v(0); }, nullptr, nullptr, axis_curve(2, 0));
    } else if (name == "singular-slow-ex") {
        e.kind = SystemKind::Singular;
        e.dim = 3;
        e.singular = make_singular_system(
            3,
            [](const Vec& v) {
                Vec f(3);
                f << -v(2) * v(0), -v(1), -v(2) * v(0);
                return f;
            },
            [](const Vec& v) { return v(0); }, nullptr, nullptr, axis_curve(3, 0));
    } else if (name == "rotation-toy") {
        e.kind = SystemKind::Singular;
        e.dim = 3;
        e.singular = make_singular_system(
            3,
            [](const Vec& v) {
                Vec f(3);
                f << v(1), -v(0), 0.0;
                return f;
            },
            [](const Vec& v) { return v(2); }, nullptr, nullptr, axis_curve(3, 2));
    } else if (name == "toy-5d") {
        e.kind = SystemKind::Singular;
        e.dim = 5;
        e.singular = make_singular_system(
            5,
            [](const Vec& v) {
                Vec f(5);
                f << -5.0 * v(0) * v(4), -v(1), -v(3) * v(4), v(2) * v(4), 0.0;
                return f;
            },
            [](const Vec& v) { return v(4); }, nullptr, nullptr, axis_curve(5, 4));
    } else if (name == "ns-polytropic") {
        PolytropicNSParams p;
        p.gamma = get(params, "gamma", 1.4, used);
        p.R = get(params, "R", 1.0, used);
        double nu = get(params, "nu", 1.0, used);
        double kap = get(params, "kappa", 1.0, used);
        p.nu = [nu](double) { return nu; };
        p.k = [kap](double) { return kap; };
        p.rho0 = get(params, "rho0", 1.0, used);
        p.theta0 = get(params, "theta0", 1.0, used);
        e.kind = SystemKind::Singular;
        e.dim = 5;
        e.singular = reduce_ns_steady(p);
    } else {
        fail(ErrorKind::InvalidInput, "unknown catalog system '" + name + "'");
    }

    for (const auto& [k, v] : params)
        if (!used.count(k))
            fail(ErrorKind::InvalidInput,
                 "system '" + name + "' does not take a parameter '" + k + "'");
    e.params = used;
    return e;
}

} // namespace vprof
