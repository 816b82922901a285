#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vprof/flux.hpp"
#include "vprof/singular.hpp"

namespace vprof {

enum class SystemKind { Flux, LinearOde, Singular };

/// A named system from the catalog: a flux (conservation law), a linear ODE
/// example, or a singular system, with documented parameter defaults.
struct CatalogEntry {
    std::string name;
    std::string description;
    SystemKind kind = SystemKind::Flux;
    int dim = 0;
    std::map<std::string, double> params; // resolved values

    std::optional<FluxSystem> flux;
    std::optional<SmoothField> ode;      // V' = G(V) examples
    std::optional<SingularSystem> singular;
};

/// The ten catalog keys.
const std::vector<std::string>& catalog_names();

/// One-line descriptions with parameter defaults, keyed by name.
std::map<std::string, std::string> catalog_descriptions();

/// Instantiate a catalog system; unknown keys raise an invalid-input error,
/// unknown parameter names too.
CatalogEntry make_system(const std::string& name,
                         const std::map<std::string, double>& params = {});

} // namespace vprof
