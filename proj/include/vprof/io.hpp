#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "vprof/manifolds.hpp"
#include "vprof/profiles.hpp"
#include "vprof/riemann.hpp"
#include "vprof/singular.hpp"
#include "vprof/spectral.hpp"

namespace vprof {

using Json = nlohmann::ordered_json;

/// CSV writer: one header row, then rows of doubles printed with 17
/// significant digits (exact round-trip).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

void write_json(const std::string& path, const Json& j);

Json to_json(const SpectralSplit& split);
Json to_json(const ManifoldChart& chart);
Json to_json(const WaveFan& fan);
Json to_json(const ConnectionReport& report);
Json to_json(const HypothesisReport& report);

/// Profile as CSV rows (y, U_1..U_N, p_1..p_N) plus a JSON metadata object.
void write_profile_csv(const std::string& path, const Profile& prof);
Json profile_metadata(const Profile& prof);

} // namespace vprof
