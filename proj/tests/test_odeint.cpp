#include <doctest.h>

#include <cmath>

#include "vprof/odeint.hpp"

using namespace vprof;

namespace {

OdeField scalar_decay() {
    return [](double, const Vec& y) { return Vec(-y); };
}

OdeField rotation() {
    return [](double, const Vec& y) {
        Vec f(2);
        f << -y(1), y(0);
        return f;
    };
}

} // namespace

TEST_SUITE("odeint") {

TEST_CASE("scalar exponential to 1e-9 at rtol 1e-10") {
    Vec y0(1);
    y0 << 1.0;
    IntegrateOptions opt;
    opt.rtol = 1e-10;
    opt.atol = 1e-14;
    auto res = integrate(scalar_decay(), y0, 0.0, 1.0, opt);
    CHECK(std::abs(res.y_end()(0) - std::exp(-1.0)) <= 1e-9);
}

TEST_CASE("rotation system returns to start after one period") {
    Vec y0(2);
    y0 << 1.0, 0.0;
    IntegrateOptions opt;
    opt.rtol = 1e-10;
    opt.atol = 1e-12;
    auto res = integrate(rotation(), y0, 0.0, 2 * M_PI, opt);
    CHECK((res.y_end() - y0).norm() <= 1e-8);
}

TEST_CASE("dense output: endpoints exact, mid-step accurate, order improves") {
    Vec y0(1);
    y0 << 1.0;
    IntegrateOptions opt;
    opt.rtol = 1e-9;
    opt.atol = 1e-12;
    auto res = integrate(scalar_decay(), y0, 0.0, 2.0, opt);
    CHECK(dense_eval(res, 0.0) == res.states.front());
    CHECK(dense_eval(res, 2.0) == res.states.back());
    // Mid-step values against the closed form.
    for (std::size_t i = 0; i + 1 < res.times.size(); ++i) {
        double tm = 0.5 * (res.times[i] + res.times[i + 1]);
        CHECK(std::abs(dense_eval(res, tm)(0) - std::exp(-tm)) <= 1e-8);
    }
    CHECK_THROWS_AS(dense_eval(res, 3.0), Error);

    // Convergence-order check on the rotation system: tightening rtol by 1e2
    // must reduce the mid-step interpolation error by at least 4x.
    auto midstep_err = [&](double rtol) {
        Vec z0(2);
        z0 << 1.0, 0.0;
        IntegrateOptions o;
        o.rtol = rtol;
        o.atol = 1e-14;
        auto r = integrate(rotation(), z0, 0.0, 5.0, o);
        double worst = 0.0;
        for (std::size_t i = 0; i + 1 < r.times.size(); ++i) {
            double tm = 0.5 * (r.times[i] + r.times[i + 1]);
            Vec exact(2);
            exact << std::cos(tm), std::sin(tm);
            worst = std::max(worst, (dense_eval(r, tm) - exact).norm());
        }
        return worst;
    };
    double e6 = midstep_err(1e-6);
    double e8 = midstep_err(1e-8);
    CHECK(e8 * 4.0 <= e6);
}

TEST_CASE("observed convergence order >= 4.5 on the scalar exponential") {
    std::vector<double> log_h, log_err;
    for (double rtol : {1e-6, 1e-8, 1e-10}) {
        Vec y0(1);
        y0 << 1.0;
        IntegrateOptions opt;
        opt.rtol = rtol;
        opt.atol = 1e-15;
        auto res = integrate(scalar_decay(), y0, 0.0, 1.0, opt);
        double hbar = 1.0 / static_cast<double>(res.stats.steps);
        log_h.push_back(std::log(hbar));
        log_err.push_back(std::log(std::abs(res.y_end()(0) - std::exp(-1.0)) + 1e-300));
    }
    // Slope of log(err) vs log(h) across the widest pair.
    double order = (log_err.front() - log_err.back()) / (log_h.front() - log_h.back());
    CHECK(order >= 4.5);
}

TEST_CASE("backward integration works") {
    Vec y0(1);
    y0 << 1.0;
    auto res = integrate(scalar_decay(), y0, 0.0, -1.0);
    CHECK(std::abs(res.y_end()(0) - std::exp(1.0)) <= 1e-8);
    CHECK(std::abs(dense_eval(res, -0.5)(0) - std::exp(0.5)) <= 1e-8);
}

TEST_CASE("event detection: crossing refined and bit-reproducible") {
    // y' = -y from 2.0; event at y = 1 crosses at t = ln 2.
    Vec y0(1);
    y0 << 2.0;
    std::vector<Event> ev{{[](double, const Vec& y) { return y(0) - 1.0; }, true, "unit"}};
    IntegrateOptions opt;
    opt.rtol = 1e-12;
    opt.atol = 1e-14;
    auto r1 = integrate(scalar_decay(), y0, 0.0, 5.0, opt, ev);
    REQUIRE(r1.event.has_value());
    CHECK(std::abs(r1.event->t - std::log(2.0)) <= 1e-10);
    CHECK(r1.event->name == "unit");
    auto r2 = integrate(scalar_decay(), y0, 0.0, 5.0, opt, ev);
    REQUIRE(r2.event.has_value());
    CHECK(r1.event->t == r2.event->t); // bit-identical on one platform
}

TEST_CASE("invalid inputs rejected") {
    Vec y0(1);
    y0 << 1.0;
    IntegrateOptions opt;
    opt.rtol = -1;
    CHECK_THROWS_AS(integrate(scalar_decay(), y0, 0.0, 1.0, opt), Error);
    std::vector<Event> bad{{[](double, const Vec&) { return std::nan(""); }, true, "nan"}};
    CHECK_THROWS_AS(integrate(scalar_decay(), y0, 0.0, 1.0, {}, bad), Error);
}

} // TEST_SUITE
