#include "meshcomp/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace meshcomp::primitives {

namespace {

TriMesh from_lists(const std::vector<Eigen::Vector3d>& verts, const std::vector<Eigen::Vector3i>& faces) {
    TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    mesh.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    for (std::size_t f = 0; f < faces.size(); ++f) mesh.faces.row(static_cast<Eigen::Index>(f)) = faces[f];
    return mesh;
}

}  // namespace

TriMesh tetrahedron() {
    const double s = 1.0 / std::sqrt(3.0);
    return from_lists({{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}},
                      {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

TriMesh icosahedron() {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                                      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                                      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    return from_lists(v, {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                          {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                          {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                          {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}});
}

TriMesh icosphere(int subdivisions, double radius) {
    const TriMesh base = icosahedron();
    std::vector<Eigen::Vector3d> verts;
    for (Eigen::Index i = 0; i < base.num_vertices(); ++i) verts.emplace_back(base.vertices.row(i));
    std::vector<Eigen::Vector3i> faces;
    for (Eigen::Index f = 0; f < base.num_faces(); ++f) faces.emplace_back(base.faces.row(f));

    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            verts.push_back((0.5 * (verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)])).normalized());
            const int id = static_cast<int>(verts.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Eigen::Vector3i> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.emplace_back(f[0], ab, ca);
            next.emplace_back(f[1], bc, ab);
            next.emplace_back(f[2], ca, bc);
            next.emplace_back(ab, bc, ca);
        }
        faces = std::move(next);
    }
    for (auto& p : verts) p *= radius;
    return from_lists(verts, faces);
}

TriMesh tube(int rings, int segments, double radius, double height) {
    std::vector<Eigen::Vector3d> verts;
    std::vector<Eigen::Vector3i> faces;
    for (int r = 0; r < rings; ++r) {
        const double z = height * r / (rings - 1);
        // Alternate rings are staggered by half a segment for better triangles.
        const double offset = (r % 2) * std::numbers::pi / segments;
        for (int s = 0; s < segments; ++s) {
            const double a = 2.0 * std::numbers::pi * s / segments + offset;
            verts.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
        }
    }
    for (int r = 0; r + 1 < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            const int a = r * segments + s, b = r * segments + (s + 1) % segments;
            const int c = (r + 1) * segments + s, d = (r + 1) * segments + (s + 1) % segments;
            if (r % 2 == 0) {
                faces.emplace_back(a, b, c);
                faces.emplace_back(b, d, c);
            } else {
                faces.emplace_back(a, d, c);
                faces.emplace_back(a, b, d);
            }
        }
    }
    return from_lists(verts, faces);
}

TriMesh strip(int columns) {
    std::vector<Eigen::Vector3d> verts;
    std::vector<Eigen::Vector3i> faces;
    for (int c = 0; c < columns; ++c) {
        verts.emplace_back(c, 0.0, 0.0);
        verts.emplace_back(c, 1.0, 0.0);
    }
    for (int c = 0; c + 1 < columns; ++c) {
        const int a = 2 * c, b = 2 * c + 1, d = 2 * c + 2, e = 2 * c + 3;
        faces.emplace_back(a, d, b);
        faces.emplace_back(b, d, e);
    }
    return from_lists(verts, faces);
}

Points bend_tube_ends(const Points& rest, double height, double bend_length, double top_curvature,
                      double bottom_curvature) {
    Points out = rest;
    const double z_top = height - bend_length;
    for (Eigen::Index i = 0; i < rest.rows(); ++i) {
        const double x = rest(i, 0), y = rest(i, 1), z = rest(i, 2);
        if (z > z_top && std::abs(top_curvature) > 1e-12) {
            const double rho = 1.0 / top_curvature, phi = top_curvature * (z - z_top);
            out(i, 0) = rho - (rho - x) * std::cos(phi);
            out(i, 2) = z_top + (rho - x) * std::sin(phi);
        } else if (z < bend_length && std::abs(bottom_curvature) > 1e-12) {
            const double rho = 1.0 / bottom_curvature, phi = bottom_curvature * (bend_length - z);
            out(i, 1) = rho - (rho - y) * std::cos(phi);
            out(i, 2) = bend_length - (rho - y) * std::sin(phi);
        }
    }
    return out;
}

std::vector<TriMesh> two_bend_cylinder_set(int count, std::uint64_t seed, double max_curvature) {
    constexpr double height = 4.0, bend_length = 1.0;
    const TriMesh rest = tube(45, 20, 0.3, height);
    std::mt19937_64 rng(seed);
    auto draw = [&] { return max_curvature * (2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0); };
    std::vector<TriMesh> out;
    out.push_back(rest);
    for (int m = 1; m < count; ++m) {
        const double top = draw();
        const double bottom = draw();
        out.push_back({bend_tube_ends(rest.vertices, height, bend_length, top, bottom), rest.faces});
    }
    return out;
}

}  // namespace meshcomp::primitives
