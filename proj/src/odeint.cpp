#include "vprof/odeint.hpp"

#include <algorithm>
#include <cmath>

namespace vprof {

namespace {

// Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner I, DOPRI5).
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double event_value(const EventFn& fn, double t, const Vec& y) {
    double g = fn(t, y);
    if (!std::isfinite(g)) fail(ErrorKind::InvalidInput, "integrate: event function non-finite");
    return g;
}

} // namespace

Vec dense_eval(const IntegrationResult& result, double t) {
    if (result.dense.empty()) {
        if (t == result.t_begin()) return result.states.front();
        fail(ErrorKind::Range, "dense_eval: empty integration");
    }
    double lo = std::min(result.t_begin(), result.t_end());
    double hi = std::max(result.t_begin(), result.t_end());
    double slack = 1e-12 * (1.0 + hi - lo);
    if (t < lo - slack || t > hi + slack)
        fail(ErrorKind::Range, "dense_eval: t=" + fmt17(t) + " outside span [" + fmt17(lo) + ", " +
                                   fmt17(hi) + "]");
    // Exact endpoint values come straight from the stored states.
    if (t == result.times.front()) return result.states.front();
    if (t == result.times.back()) return result.states.back();
    // Locate the step containing t (times are monotone in either direction).
    const auto& times = result.times;
    bool fwd = times.back() >= times.front();
    std::size_t idx = 0;
    {
        std::size_t lo_i = 0, hi_i = result.dense.size() - 1;
        while (lo_i < hi_i) {
            std::size_t mid = (lo_i + hi_i + 1) / 2;
            bool before = fwd ? (times[mid] <= t) : (times[mid] >= t);
            if (before) lo_i = mid;
            else hi_i = mid - 1;
        }
        idx = lo_i;
    }
    const StepRecord& s = result.dense[idx];
    double theta = (t - s.t0) / s.h;
    theta = std::clamp(theta, 0.0, 1.0);
    return s.r1 + theta * (s.r2 + (1.0 - theta) * (s.r3 + theta * (s.r4 + (1.0 - theta) * s.r5)));
}

IntegrationResult integrate(const OdeField& field, const Vec& y0, double t0, double t1,
                            const IntegrateOptions& opt, const std::vector<Event>& events) {
    require_finite(y0, "integrate");
    if (!std::isfinite(t0) || !std::isfinite(t1))
        fail(ErrorKind::InvalidInput, "integrate: non-finite time span");
    if (!(opt.rtol > 0) || !(opt.atol > 0))
        fail(ErrorKind::InvalidInput, "integrate: tolerances must be positive");

    IntegrationResult out;
    out.times.push_back(t0);
    out.states.push_back(y0);
    if (t1 == t0) return out;

    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const double hmax = opt.h_max > 0 ? opt.h_max : span;
    const int n = static_cast<int>(y0.size());

    auto eval = [&](double t, const Vec& y) {
        ++out.stats.evaluations;
        Vec f = field(t, y);
        if (f.size() != n) fail(ErrorKind::InvalidInput, "integrate: field dimension mismatch");
        return f;
    };

    Vec y = y0;
    double t = t0;
    Vec k1 = eval(t, y);
    if (!k1.allFinite()) fail(ErrorKind::InvalidInput, "integrate: field non-finite at start");

    // Initial step from the standard order-5 heuristic.
    double h;
    if (opt.h_init > 0) {
        h = std::min(opt.h_init, hmax);
    } else {
        double d0 = y.norm(), d1n = k1.norm();
        double h0 = (d0 < 1e-10 || d1n < 1e-10) ? 1e-6 : 0.01 * d0 / d1n;
        h0 = std::min(h0, span);
        Vec y1 = y + dir * h0 * k1;
        Vec k2 = eval(t + dir * h0, y1);
        double d2 = (k2 - k1).norm() / h0;
        double h1 = (std::max(d1n, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1n, d2), 0.2);
        h = std::min({100 * h0, h1, hmax});
    }

    std::vector<double> gprev(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) gprev[i] = event_value(events[i].fn, t, y);

    const double beta = 0.04, expo = 0.2 - beta * 0.75, safe = 0.9;
    double facold = 1e-4;
    bool last = false;

    while (!last) {
        if (out.stats.steps >= opt.max_steps)
            fail(ErrorKind::NumericFailure, "integrate: step limit reached at t=" + fmt17(t));
        double remaining = std::abs(t1 - t);
        if (h >= remaining) {
            h = remaining;
            last = true;
        }
        double hmin = 1e-14 * std::max(1.0, std::abs(t));
        if (h < hmin && !last)
            fail(ErrorKind::Stiffness,
                 "integrate: step size underflow at t=" + fmt17(t) + " (|y|=" + fmt17(y.norm()) + ")");

        double hd = dir * h;
        Vec k2 = eval(t + c2 * hd, y + hd * (a21 * k1));
        Vec k3 = eval(t + c3 * hd, y + hd * (a31 * k1 + a32 * k2));
        Vec k4 = eval(t + c4 * hd, y + hd * (a41 * k1 + a42 * k2 + a43 * k3));
        Vec k5 = eval(t + c5 * hd, y + hd * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        Vec k6 = eval(t + hd, y + hd * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        Vec ynew = y + hd * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        Vec k7 = eval(t + hd, ynew);

        Vec errv = hd * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double err = 0.0;
        bool finite = ynew.allFinite() && errv.allFinite();
        if (finite) {
            for (int i = 0; i < n; ++i) {
                double sk = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(ynew(i)));
                double r = errv(i) / sk;
                err += r * r;
            }
            err = std::sqrt(err / n);
        } else {
            err = 1e10;
        }

        if (err <= 1.0) {
            // Accept; build the dense-output record.
            StepRecord rec;
            rec.t0 = t;
            rec.h = hd;
            rec.r1 = y;
            rec.r2 = ynew - y;
            rec.r3 = hd * k1 - rec.r2;
            rec.r4 = rec.r2 - hd * k7 - rec.r3;
            rec.r5 = hd * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

            double tnew = last ? t1 : t + hd;

            // Event detection: sign change over the step, refined by bisection
            // on the dense output.
            std::optional<EventHit> hit;
            for (std::size_t ie = 0; ie < events.size(); ++ie) {
                double g0 = gprev[ie];
                double g1 = event_value(events[ie].fn, tnew, ynew);
                if (g0 * g1 < 0.0 || (g1 == 0.0 && g0 != 0.0)) {
                    double ta = t, tb = tnew, ga = g0;
                    // Temporary result view for dense evaluation of this step.
                    IntegrationResult view;
                    view.times = {t, tnew};
                    view.states = {y, ynew};
                    view.dense = {rec};
                    for (int it = 0; it < 200; ++it) {
                        double tm = 0.5 * (ta + tb);
                        if (std::abs(tb - ta) <= 1e-12 * std::max(1.0, std::abs(tm))) break;
                        double gm = event_value(events[ie].fn, tm, dense_eval(view, tm));
                        if (ga * gm <= 0.0) tb = tm;
                        else { ta = tm; ga = gm; }
                    }
                    double tc = 0.5 * (ta + tb);
                    EventHit h2;
                    h2.index = static_cast<int>(ie);
                    h2.t = tc;
                    h2.state = dense_eval(view, tc);
                    h2.name = events[ie].name;
                    if (!hit || (dir > 0 ? h2.t < hit->t : h2.t > hit->t)) hit = h2;
                }
                gprev[ie] = g1;
            }

            ++out.stats.steps;
            if (hit && events[hit->index].terminal) {
                // Keep full-step dense coefficients; they remain valid on the
                // clipped sub-interval ending at the event time.
                out.dense.push_back(rec);
                out.times.push_back(hit->t);
                out.states.push_back(hit->state);
                out.event = hit;
                return out;
            }

            out.dense.push_back(rec);
            out.times.push_back(tnew);
            out.states.push_back(ynew);
            t = tnew;
            y = ynew;
            k1 = k7; // FSAL

            double fac11 = std::pow(std::max(err, 1e-32), expo);
            double fac = fac11 / std::pow(facold, beta);
            fac = std::clamp(fac / safe, 0.2, 10.0);
            h = std::min(h / fac, hmax);
            facold = std::max(err, 1e-4);
        } else {
            ++out.stats.rejected;
            last = false;
            double fac11 = std::pow(err, expo);
            h = h / std::min(1.0 / 0.2, fac11 / safe);
        }
    }
    return out;
}

} // namespace vprof
