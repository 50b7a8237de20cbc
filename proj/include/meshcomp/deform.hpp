#pragma once

#include "meshcomp/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/StdVector>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace meshcomp {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
/// One 3x3 matrix per vertex.
using Mat3Field = std::vector<Mat3, Eigen::aligned_allocator<Mat3>>;
/// Per-vertex 9-vector features [r (3), s (6)] as a V x 9 matrix.
using FeatureMatrix = Eigen::MatrixXd;

inline constexpr int kFeatureDim = 9;
inline constexpr double kFeatureHalfRange = 0.95;

/// Least-squares per-vertex deformation gradients relative to a reference.
///
/// The weighted reference edge Gram matrix of each 1-ring depends only on the
/// reference, so it is inverted once here and reused for every shape.
class GradientFitter {
public:
    GradientFitter(const Points& reference, const Connectivity& connectivity);

    Mat3Field fit(const Points& deformed) const;
    /// Vertices whose Gram matrix needed regularization (coplanar 1-rings).
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    Connectivity conn_;
    Points reference_;
    Mat3Field gram_inverse_;
    std::vector<std::string> warnings_;
};

/// All N x V deformation gradients of a set, shape-major.
std::vector<Mat3Field> fit_deformation_gradients(const ShapeSet& set);

struct PolarFactors {
    Mat3 rotation;
    Mat3 stretch;  // symmetric
};

/// T = R S via SVD. When det(U V^T) < 0 the last column of U and the
/// matching singular value are negated, so R is always proper.
PolarFactors polar_decompose(const Mat3& t);

/// Rodrigues exponential of the rotation vector.
Mat3 exp_rotation(const Vec3& r);
/// dR/dr_k for k = 0, 1, 2.
std::array<Mat3, 3> exp_rotation_derivative(const Vec3& r);
/// Principal log: rotation vector with angle in [0, pi]; zero below 1e-6.
Vec3 principal_log(const Mat3& rotation);

/// Rotation vectors equivalent to the principal log `r`: axis * (theta + 2 pi k)
/// for the candidate set of both axis signs and t in {-1, 0, 1, 2}.
std::vector<Vec3> axis_angle_candidates(const Vec3& principal);

/// Picks one rotation vector per vertex so adjacent choices agree: the
/// breadth-first root takes its principal log and each child takes the
/// candidate nearest its tree parent (ties: smaller norm, then positive first
/// nonzero component).
std::vector<Vec3> consistent_axis_angle(const Mat3Field& rotations, const Connectivity& connectivity);

/// Affine feature scaling ranges, shared by r (3 channels) and s (6 channels).
struct ScalingParams {
    double r_min = 0.0, r_max = 0.0;
    double s_min = 0.0, s_max = 0.0;

    double scale_r(double x) const;
    double scale_s(double x) const;
    double unscale_r(double x) const;
    double unscale_s(double x) const;
    /// d(raw)/d(feature); 0 for a degenerate range.
    double r_slope() const;
    double s_slope() const;

    bool operator==(const ScalingParams&) const = default;
};

/// Unscaled 9-dim features (rotation vector then S11,S12,S13,S22,S23,S33).
FeatureMatrix raw_features(const Mat3Field& gradients, const Connectivity& connectivity);

/// Global min/max per block over the given raw features.
ScalingParams fit_scaling(std::span<const FeatureMatrix> raw, std::vector<std::string>* warnings = nullptr);

FeatureMatrix apply_scaling(const FeatureMatrix& raw, const ScalingParams& params);

struct EncodedFeatures {
    std::vector<FeatureMatrix> features;  // one V x 9 matrix per shape
    ScalingParams scaling;
    std::vector<std::string> warnings;
};

/// Features for every shape; scaling fitted on `fit_indices` (all shapes if empty).
EncodedFeatures encode_features(const ShapeSet& set, std::span<const int> fit_indices = {});

/// Scaled features of one shape under fixed scaling (unseen shapes).
FeatureMatrix encode_shape(const GradientFitter& fitter, const Connectivity& connectivity, const Points& shape,
                           const ScalingParams& scaling);

struct DecodedVertex {
    Mat3 rotation;
    Mat3 stretch;
};

/// Inverse scaling, exponential map and symmetric assembly, per vertex.
std::vector<DecodedVertex> decode_features(const FeatureMatrix& features, const ScalingParams& scaling);
/// T = R S per vertex.
Mat3Field decode_gradients(const FeatureMatrix& features, const ScalingParams& scaling);

/// Solves for positions whose 1-ring edges best match per-vertex gradients
/// applied to reference edges, with one vertex pinned. The system matrix
/// depends on connectivity only and is factored once.
class Reconstructor {
public:
    Reconstructor(const Points& reference, const Connectivity& connectivity, int anchor = 0);

    /// Positions with the anchor at `anchor_pos`.
    Points reconstruct(const Mat3Field& gradients, const Vec3& anchor_pos) const;
    /// Anchor at its reference position.
    Points reconstruct(const Mat3Field& gradients) const;

    /// Adjoint of `reconstruct` with respect to the gradients: given dJ/dp,
    /// returns dJ/dT_i for every vertex (the anchor row contributes nothing).
    Mat3Field gradient_adjoint(const Points& d_positions) const;

    int anchor() const { return anchor_; }
    const Points& reference() const { return reference_; }

private:
    Eigen::MatrixXd solve_reduced(const Eigen::MatrixXd& rhs) const;

    Connectivity conn_;
    Points reference_;
    int anchor_;
    Eigen::SparseMatrix<double> system_;  // full Laplacian, anchor row/col kept for rhs coupling
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

}  // namespace meshcomp
