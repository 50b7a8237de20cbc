#pragma once

#include "meshcomp/mesh.hpp"

#include <cstdint>
#include <vector>

namespace meshcomp::primitives {

/// Regular tetrahedron inscribed in the unit sphere.
TriMesh tetrahedron();

/// Unit icosahedron (12 vertices, 20 faces).
TriMesh icosahedron();

/// Loop-style subdivided icosahedron with vertices projected onto a sphere.
/// Level 3 gives the classic 642-vertex icosphere.
TriMesh icosphere(int subdivisions, double radius = 1.0);

/// Open tube along +z: `rings` vertex rings of `segments` vertices each,
/// z in [0, height].
TriMesh tube(int rings, int segments, double radius, double height);

/// Planar strip of 2*columns vertices along +x with unit spacing.
TriMesh strip(int columns);

/// Bends the two ends of a z-aligned tube of the given height along circular
/// arcs: z > height - bend_length curls in the x-z plane with curvature
/// `top_curvature`, z < bend_length curls in the y-z plane with
/// `bottom_curvature`. The middle stays rigid.
Points bend_tube_ends(const Points& rest, double height, double bend_length, double top_curvature,
                      double bottom_curvature);

/// Synthetic localized-deformation data: a 45 x 20 tube (900 vertices,
/// height 4, radius 0.3) whose two ends bend independently with curvatures
/// uniform in [-max_curvature, max_curvature]. Shape 0 is the rest tube.
std::vector<TriMesh> two_bend_cylinder_set(int count, std::uint64_t seed, double max_curvature = 1.0);

}  // namespace meshcomp::primitives
