#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace meshcomp {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle mesh with 0-based, counter-clockwise faces.
struct TriMesh {
    Points vertices;
    Faces faces;

    Eigen::Index num_vertices() const { return vertices.rows(); }
    Eigen::Index num_faces() const { return faces.rows(); }
};

/// Throws DataError unless every face index is in range, no face is
/// degenerate, and every vertex is referenced by some face.
void validate_mesh(const TriMesh& mesh);

/// 1-ring neighbourhoods and symmetric cotangent edge weights.
///
/// `neighbors[i]` is sorted ascending; `cotan[i][k]` is the weight of the
/// edge (i, neighbors[i][k]). Weights are half the sum of the cotangents of
/// the angles opposite the edge, so boundary edges carry a single angle.
struct Connectivity {
    std::vector<std::vector<int>> neighbors;
    std::vector<std::vector<double>> cotan;
    std::vector<std::string> warnings;

    std::size_t num_vertices() const { return neighbors.size(); }
    int degree(std::size_t i) const { return static_cast<int>(neighbors[i].size()); }
    /// c_ij, or 0 when i and j are not adjacent.
    double weight(int i, int j) const;
    /// Number of connected components of the vertex graph.
    int num_components() const;
};

Connectivity build_connectivity(const TriMesh& mesh);

/// N >= 2 shapes sharing one face array.
struct ShapeSet {
    Faces faces;
    std::vector<Points> shapes;
    Connectivity connectivity;  // weights computed on the reference shape
    int reference_index = 0;

    std::size_t size() const { return shapes.size(); }
    Eigen::Index num_vertices() const { return shapes.empty() ? 0 : shapes.front().rows(); }
    const Points& reference() const { return shapes.at(static_cast<std::size_t>(reference_index)); }
    TriMesh mesh(std::size_t m) const { return {shapes.at(m), faces}; }
    TriMesh reference_mesh() const { return {reference(), faces}; }
};

/// Validates shared topology and derives connectivity from the reference.
ShapeSet make_shape_set(std::vector<TriMesh> meshes, int reference_index = 0);

/// Hash over the face array and reference vertex positions; identifies the
/// mesh a model or cache was built for.
std::uint64_t mesh_content_hash(const TriMesh& reference);

/// Best proper rigid transform (no scale) taking `moving` onto `target`
/// in least squares, applied to `moving`.
Points align_rigid(const Points& moving, const Points& target);

/// Aligns every non-reference shape to the reference.
ShapeSet rigid_align(const ShapeSet& set);

/// Length of the bounding-box diagonal.
double bounding_box_diagonal(const Points& points);

// Wavefront OBJ (v/f records) and ASCII PLY.
TriMesh read_obj(const std::filesystem::path& path);
TriMesh parse_obj(const std::string& text);
void write_obj(const std::filesystem::path& path, const TriMesh& mesh,
               const std::vector<std::string>& comments = {});

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};
void write_ply(const std::filesystem::path& path, const TriMesh& mesh,
               const std::vector<Rgb>& colors, const std::vector<std::string>& comments = {});
/// Reads ASCII PLY geometry; per-vertex properties beyond x/y/z are skipped.
TriMesh read_ply(const std::filesystem::path& path, std::vector<Rgb>* colors = nullptr);

struct Manifest {
    std::vector<std::filesystem::path> shapes;  // resolved against the manifest directory
    int reference_index = 0;
    bool aligned = false;
};

Manifest read_manifest(const std::filesystem::path& path);
ShapeSet load_shape_set(const std::filesystem::path& manifest_path);

}  // namespace meshcomp
