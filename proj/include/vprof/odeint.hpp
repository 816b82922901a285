#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vprof/linalg.hpp"

namespace vprof {

using OdeField = std::function<Vec(double, const Vec&)>;
using EventFn = std::function<double(double, const Vec&)>;

struct Event {
    EventFn fn;
    bool terminal = true;
    std::string name;
};

struct IntegrateOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_init = 0.0;       // 0 = automatic
    double h_max = 0.0;        // 0 = span length
    std::size_t max_steps = 2000000;
};

struct EventHit {
    int index = -1;      // which event fn
    double t = 0.0;      // refined crossing time
    Vec state;
    std::string name;
};

struct StepRecord {
    double t0 = 0.0, h = 0.0;
    // Dense-output coefficients for y(t0 + theta h),
    // y = r1 + theta (r2 + (1-theta)(r3 + theta (r4 + (1-theta) r5))).
    Vec r1, r2, r3, r4, r5;
};

struct IntegrationStats {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
};

/// Result of an adaptive integration: accepted nodes, per-step dense output,
/// statistics, and the terminal event (when one fired).
struct IntegrationResult {
    std::vector<double> times;  // accepted step times, including t0 and t_end
    std::vector<Vec> states;
    std::vector<StepRecord> dense;
    IntegrationStats stats;
    std::optional<EventHit> event;

    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }
    const Vec& y_end() const { return states.back(); }
};

/// Adaptive Dormand-Prince 5(4) with PI step control, 4th-order continuous
/// extension and event location by bisection on the dense output. Supports
/// decreasing spans (integration backwards in time).
IntegrationResult integrate(const OdeField& field, const Vec& y0, double t0, double t1,
                            const IntegrateOptions& opt = {},
                            const std::vector<Event>& events = {});

/// Evaluate the dense output at time t (must lie within the integration span).
Vec dense_eval(const IntegrationResult& result, double t);

} // namespace vprof
