#pragma once

#include "meshcomp/mesh.hpp"

#include <Eigen/SparseCholesky>

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace meshcomp {

enum class GeodesicMethod : std::uint32_t { graph = 0, heat = 1 };

std::string to_string(GeodesicMethod method);
GeodesicMethod geodesic_method_from_string(const std::string& name);

/// Row access to normalized geodesic distances. Consumers (sparsity weights,
/// farthest-point sampling) only ever read whole rows.
class GeodesicRows {
public:
    virtual ~GeodesicRows() = default;
    virtual std::size_t size() const = 0;
    virtual std::span<const float> row(std::size_t source) const = 0;
};

/// Dense V x V normalized distances in [0, 1], symmetric, max entry 1.
class GeodesicMatrix final : public GeodesicRows {
public:
    GeodesicMatrix() = default;
    /// Symmetrizes by averaging with the transpose and normalizes by the max.
    GeodesicMatrix(std::size_t n, std::vector<double> raw, GeodesicMethod method, double t_scale);

    std::size_t size() const override { return n_; }
    std::span<const float> row(std::size_t source) const override {
        return {d_.data() + source * n_, n_};
    }
    float operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }

    GeodesicMethod method() const { return method_; }
    double t_scale() const { return t_scale_; }
    /// Largest raw distance before normalization (dataset length units).
    double scale() const { return scale_; }
    /// Max relative asymmetry |d_ij - d_ji| / max(d) seen before averaging.
    double asymmetry() const { return asymmetry_; }
    const std::vector<float>& data() const { return d_; }

    /// Cache file: "MDGC", u32 version, u64 V, u32 method, f64 t_scale,
    /// u64 mesh hash, f64 scale, then V*V little-endian float32 row-major.
    void save(const std::filesystem::path& path, std::uint64_t mesh_hash) const;
    /// Throws DataError on bad magic, truncation, or a hash mismatch.
    static GeodesicMatrix load(const std::filesystem::path& path, std::uint64_t expected_hash);

private:
    std::size_t n_ = 0;
    std::vector<float> d_;
    GeodesicMethod method_ = GeodesicMethod::graph;
    double t_scale_ = 0.0;
    double scale_ = 0.0;
    double asymmetry_ = 0.0;
};

/// Raw (unnormalized) Dijkstra distances from one source along mesh edges.
std::vector<double> graph_distances_from(const TriMesh& mesh, int source);

/// Prefactored heat-method solver for one mesh. Thread-safe for concurrent
/// `distances_from` calls once constructed.
class HeatGeodesicSolver {
public:
    HeatGeodesicSolver(const TriMesh& mesh, double t_scale = 1.0);
    /// Raw distances from `source`, shifted so the source is 0.
    std::vector<double> distances_from(int source) const;
    double time_step() const { return t_; }

private:
    TriMesh mesh_;
    double t_ = 0.0;
    Eigen::SparseMatrix<double> laplacian_;  // positive semidefinite cotangent Laplacian
    std::vector<std::array<double, 3>> face_cot_;
    std::vector<Eigen::Vector3d> face_normal_;
    std::vector<double> face_area_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> heat_solver_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> poisson_solver_;  // vertex 0 pinned
};

GeodesicMatrix graph_geodesics(const TriMesh& mesh);

/// Throws NumericalError if a factorization fails; see `compute_geodesics`
/// for the fallback policy.
GeodesicMatrix heat_geodesics(const TriMesh& mesh, double t_scale = 1.0);

/// Heat method with graph fallback on numerical failure; warnings collected.
GeodesicMatrix compute_geodesics(const TriMesh& mesh, GeodesicMethod method, double t_scale,
                                 std::vector<std::string>* warnings = nullptr);

/// Per-source rows computed on demand for large meshes. Rows are normalized
/// by a diameter estimate from repeated farthest-point sweeps, since the true
/// all-pairs maximum is never materialized.
class LazyGeodesics final : public GeodesicRows {
public:
    LazyGeodesics(const TriMesh& mesh, GeodesicMethod method, double t_scale = 1.0, int sweeps = 4);
    std::size_t size() const override { return n_; }
    std::span<const float> row(std::size_t source) const override;
    double scale() const { return scale_; }

private:
    std::vector<double> raw_row(int source) const;

    TriMesh mesh_;
    GeodesicMethod method_;
    std::size_t n_;
    std::unique_ptr<HeatGeodesicSolver> heat_;
    double scale_ = 1.0;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::size_t, std::vector<float>> rows_;
};

}  // namespace meshcomp
