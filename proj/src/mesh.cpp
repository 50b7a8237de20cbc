#include "meshcomp/mesh.hpp"

#include "meshcomp/error.hpp"
#include "meshcomp/hash.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <utility>

namespace meshcomp {

void validate_mesh(const TriMesh& mesh) {
    const auto nv = mesh.num_vertices();
    if (nv == 0 || mesh.num_faces() == 0) throw DataError("mesh has no vertices or no faces");
    std::vector<bool> used(static_cast<std::size_t>(nv), false);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int v = mesh.faces(f, c);
            if (v < 0 || v >= nv)
                throw DataError("face " + std::to_string(f) + " references vertex " +
                                std::to_string(v) + " outside [0, " + std::to_string(nv) + ")");
            used[static_cast<std::size_t>(v)] = true;
        }
        const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
        if (a == b || b == c || a == c) throw DataError("face " + std::to_string(f) + " is degenerate");
    }
    if (!mesh.vertices.allFinite()) throw DataError("mesh has non-finite vertex coordinates");
    for (std::size_t i = 0; i < used.size(); ++i)
        if (!used[i]) throw DataError("vertex " + std::to_string(i) + " is not referenced by any face");
}

double Connectivity::weight(int i, int j) const {
    const auto& ring = neighbors[static_cast<std::size_t>(i)];
    auto it = std::lower_bound(ring.begin(), ring.end(), j);
    if (it == ring.end() || *it != j) return 0.0;
    return cotan[static_cast<std::size_t>(i)][static_cast<std::size_t>(it - ring.begin())];
}

int Connectivity::num_components() const {
    std::vector<bool> seen(neighbors.size(), false);
    int count = 0;
    for (std::size_t root = 0; root < neighbors.size(); ++root) {
        if (seen[root]) continue;
        ++count;
        std::queue<int> todo;
        todo.push(static_cast<int>(root));
        seen[root] = true;
        while (!todo.empty()) {
            const int v = todo.front();
            todo.pop();
            for (int n : neighbors[static_cast<std::size_t>(v)]) {
                if (!seen[static_cast<std::size_t>(n)]) {
                    seen[static_cast<std::size_t>(n)] = true;
                    todo.push(n);
                }
            }
        }
    }
    return count;
}

Connectivity build_connectivity(const TriMesh& mesh) {
    validate_mesh(mesh);
    const auto nv = static_cast<std::size_t>(mesh.num_vertices());
    const auto nf = mesh.num_faces();

    double mean_area = 0.0;
    std::vector<double> areas(static_cast<std::size_t>(nf));
    for (Eigen::Index f = 0; f < nf; ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0));
        const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1));
        const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2));
        areas[static_cast<std::size_t>(f)] = 0.5 * (b - a).cross(c - a).norm();
        mean_area += areas[static_cast<std::size_t>(f)];
    }
    mean_area /= static_cast<double>(nf);

    Connectivity conn;
    std::map<std::pair<int, int>, double> edge_weight;
    for (Eigen::Index f = 0; f < nf; ++f) {
        const bool degenerate = areas[static_cast<std::size_t>(f)] < 1e-12 * mean_area;
        if (degenerate)
            conn.warnings.push_back("face " + std::to_string(f) +
                                    " is numerically degenerate; using uniform weights");
        for (int c = 0; c < 3; ++c) {
            // Angle at corner c is opposite the edge (i, j).
            const int k = mesh.faces(f, c);
            const int i = mesh.faces(f, (c + 1) % 3);
            const int j = mesh.faces(f, (c + 2) % 3);
            double cot = 1.0;
            if (!degenerate) {
                const Eigen::Vector3d u = mesh.vertices.row(i) - mesh.vertices.row(k);
                const Eigen::Vector3d v = mesh.vertices.row(j) - mesh.vertices.row(k);
                cot = u.dot(v) / u.cross(v).norm();
            }
            edge_weight[{std::min(i, j), std::max(i, j)}] += 0.5 * cot;
        }
    }

    conn.neighbors.assign(nv, {});
    conn.cotan.assign(nv, {});
    for (const auto& [edge, w] : edge_weight) {
        conn.neighbors[static_cast<std::size_t>(edge.first)].push_back(edge.second);
        conn.neighbors[static_cast<std::size_t>(edge.second)].push_back(edge.first);
    }
    for (std::size_t i = 0; i < nv; ++i) {
        auto& ring = conn.neighbors[i];
        if (ring.empty()) throw DataError("vertex " + std::to_string(i) + " is isolated");
        std::sort(ring.begin(), ring.end());
        conn.cotan[i].reserve(ring.size());
        for (int j : ring) {
            const int a = std::min(static_cast<int>(i), j), b = std::max(static_cast<int>(i), j);
            conn.cotan[i].push_back(edge_weight.at({a, b}));
        }
    }
    return conn;
}

ShapeSet make_shape_set(std::vector<TriMesh> meshes, int reference_index) {
    if (meshes.size() < 2) throw DataError("a shape set needs at least two shapes");
    if (reference_index < 0 || static_cast<std::size_t>(reference_index) >= meshes.size())
        throw DataError("reference index " + std::to_string(reference_index) + " out of range");
    const TriMesh& first = meshes.front();
    validate_mesh(first);
    for (std::size_t m = 1; m < meshes.size(); ++m) {
        if (meshes[m].num_vertices() != first.num_vertices())
            throw DataError("shape " + std::to_string(m) + " has " +
                            std::to_string(meshes[m].num_vertices()) + " vertices, expected " +
                            std::to_string(first.num_vertices()));
        if (meshes[m].faces.rows() != first.faces.rows() || meshes[m].faces != first.faces)
            throw DataError("shape " + std::to_string(m) + " does not share the face array of shape 0");
        if (!meshes[m].vertices.allFinite())
            throw DataError("shape " + std::to_string(m) + " has non-finite coordinates");
    }
    ShapeSet set;
    set.faces = first.faces;
    set.reference_index = reference_index;
    set.connectivity = build_connectivity(meshes[static_cast<std::size_t>(reference_index)]);
    set.shapes.reserve(meshes.size());
    for (auto& m : meshes) set.shapes.push_back(std::move(m.vertices));
    return set;
}

std::uint64_t mesh_content_hash(const TriMesh& reference) {
    Fnv1a h;
    const std::uint64_t nv = static_cast<std::uint64_t>(reference.num_vertices());
    const std::uint64_t nf = static_cast<std::uint64_t>(reference.num_faces());
    h.update_value(nv);
    h.update_value(nf);
    h.update(std::as_bytes(std::span<const int>(reference.faces.data(),
                                                static_cast<std::size_t>(reference.faces.size()))));
    h.update(std::as_bytes(std::span<const double>(reference.vertices.data(),
                                                   static_cast<std::size_t>(reference.vertices.size()))));
    return h.digest();
}

Points align_rigid(const Points& moving, const Points& target) {
    const Eigen::RowVector3d mc = moving.colwise().mean();
    const Eigen::RowVector3d tc = target.colwise().mean();
    const Eigen::Matrix3d cov = (moving.rowwise() - mc).transpose() * (target.rowwise() - tc);
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    // Rotation acting on column vectors: target ~ R * moving.
    const Eigen::Matrix3d rot = svd.matrixV() * d * svd.matrixU().transpose();
    Points out = ((moving.rowwise() - mc) * rot.transpose()).rowwise() + tc;
    return out;
}

ShapeSet rigid_align(const ShapeSet& set) {
    ShapeSet out = set;
    for (std::size_t m = 0; m < out.shapes.size(); ++m) {
        if (static_cast<int>(m) == set.reference_index) continue;
        out.shapes[m] = align_rigid(set.shapes[m], set.reference());
    }
    return out;
}

double bounding_box_diagonal(const Points& points) {
    return (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
}

}  // namespace meshcomp
