#pragma once

#include "meshcomp/geodesics.hpp"

#include <cstdint>
#include <vector>

namespace meshcomp {

/// Geodesic farthest-point sampling ("Voronoi sampling" of control points).
/// The first vertex is drawn uniformly with `seed`; each further vertex
/// maximizes the minimum distance to those already chosen, ties going to
/// the smallest index. Throws UsageError if count is 0 or exceeds V.
std::vector<int> voronoi_sample_control_points(const GeodesicRows& geo, std::size_t count, std::uint64_t seed);

}  // namespace meshcomp
