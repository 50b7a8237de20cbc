#include "meshcomp/deform.hpp"

#include "meshcomp/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

namespace meshcomp {

namespace {

Mat3 skew(const Vec3& v) {
    Mat3 k;
    k << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return k;
}

Vec3 ref_edge(const Points& p, int i, int j) { return (p.row(i) - p.row(j)).transpose(); }

}  // namespace

GradientFitter::GradientFitter(const Points& reference, const Connectivity& connectivity)
    : conn_(connectivity), reference_(reference) {
    const auto n = connectivity.num_vertices();
    if (static_cast<std::size_t>(reference.rows()) != n)
        throw UsageError("reference vertex count does not match connectivity");
    gram_inverse_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Mat3 gram = Mat3::Zero();
        const auto& ring = conn_.neighbors[i];
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const Vec3 e = ref_edge(reference_, static_cast<int>(i), ring[k]);
            gram += conn_.cotan[i][k] * e * e.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(gram, Eigen::EigenvaluesOnly);
        const double largest = eig.eigenvalues().cwiseAbs().maxCoeff();
        const double smallest = eig.eigenvalues().cwiseAbs().minCoeff();
        if (!(smallest > 1e-10 * largest)) {
            const double tr = std::abs(gram.trace());
            gram += 1e-8 * (tr > 0.0 ? tr : 1.0) * Mat3::Identity();
            warnings_.push_back("vertex " + std::to_string(i) + ": singular 1-ring Gram matrix regularized");
        }
        gram_inverse_[i] = gram.inverse();
    }
}

Mat3Field GradientFitter::fit(const Points& deformed) const {
    if (deformed.rows() != reference_.rows()) throw UsageError("deformed shape vertex count mismatch");
    Mat3Field out(conn_.num_vertices());
    for (std::size_t i = 0; i < out.size(); ++i) {
        Mat3 cross = Mat3::Zero();
        const auto& ring = conn_.neighbors[i];
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const Vec3 e = ref_edge(reference_, static_cast<int>(i), ring[k]);
            const Vec3 d = ref_edge(deformed, static_cast<int>(i), ring[k]);
            cross += conn_.cotan[i][k] * d * e.transpose();
        }
        out[i] = cross * gram_inverse_[i];
    }
    return out;
}

std::vector<Mat3Field> fit_deformation_gradients(const ShapeSet& set) {
    const GradientFitter fitter(set.reference(), set.connectivity);
    std::vector<Mat3Field> out;
    out.reserve(set.size());
    for (const auto& shape : set.shapes) out.push_back(fitter.fit(shape));
    return out;
}

PolarFactors polar_decompose(const Mat3& t) {
    Eigen::JacobiSVD<Mat3> svd(t, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    Vec3 sigma = svd.singularValues();
    if ((u * v.transpose()).determinant() < 0.0) {
        u.col(2) = -u.col(2);
        sigma[2] = -sigma[2];
    }
    PolarFactors out;
    out.rotation = u * v.transpose();
    const Mat3 s = v * sigma.asDiagonal() * v.transpose();
    out.stretch = 0.5 * (s + s.transpose());
    return out;
}

Mat3 exp_rotation(const Vec3& r) {
    const double theta = r.norm();
    if (theta < 1e-12) return Mat3::Identity() + skew(r);
    const Mat3 k = skew(r / theta);
    return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
}

std::array<Mat3, 3> exp_rotation_derivative(const Vec3& r) {
    std::array<Mat3, 3> out;
    const double theta2 = r.squaredNorm();
    if (theta2 < 1e-16) {
        for (int k = 0; k < 3; ++k) out[static_cast<std::size_t>(k)] = skew(Vec3::Unit(k));
        return out;
    }
    // Gallego & Yezzi closed form: dR/dr_k = (r_k [r]x + [r x (I - R) e_k]x) R / |r|^2.
    const Mat3 rot = exp_rotation(r);
    const Mat3 ident_minus_r = Mat3::Identity() - rot;
    for (int k = 0; k < 3; ++k) {
        const Vec3 w = r.cross(ident_minus_r.col(k));
        out[static_cast<std::size_t>(k)] = (r[k] * skew(r) + skew(w)) * rot / theta2;
    }
    return out;
}

Vec3 principal_log(const Mat3& rotation) {
    const Eigen::AngleAxisd aa(rotation);
    if (aa.angle() < 1e-6) return Vec3::Zero();
    return aa.angle() * aa.axis();
}

std::vector<Vec3> axis_angle_candidates(const Vec3& principal) {
    const double theta = principal.norm();
    if (theta < 1e-6) return {Vec3::Zero()};
    const Vec3 axis = principal / theta;
    std::vector<Vec3> out;
    for (int t = -1; t <= 2; ++t) {
        out.push_back(axis * (theta + 2.0 * std::numbers::pi * t));
        out.push_back(-axis * (-theta + 2.0 * std::numbers::pi * t));
    }
    return out;
}

namespace {

bool positive_first_component(const Vec3& v) {
    for (int k = 0; k < 3; ++k)
        if (v[k] != 0.0) return v[k] > 0.0;
    return false;
}

Vec3 nearest_candidate(const Vec3& principal, const Vec3& target) {
    constexpr double tie = 1e-12;
    const auto candidates = axis_angle_candidates(principal);
    Vec3 best = candidates.front();
    double best_d = (best - target).norm();
    for (std::size_t c = 1; c < candidates.size(); ++c) {
        const Vec3& cand = candidates[c];
        const double d = (cand - target).norm();
        bool better = d < best_d - tie;
        if (!better && std::abs(d - best_d) <= tie) {
            const double nc = cand.norm(), nb = best.norm();
            if (nc < nb - tie) better = true;
            else if (std::abs(nc - nb) <= tie)
                better = positive_first_component(cand) && !positive_first_component(best);
        }
        if (better) {
            best = cand;
            best_d = d;
        }
    }
    return best;
}

}  // namespace

std::vector<Vec3> consistent_axis_angle(const Mat3Field& rotations, const Connectivity& connectivity) {
    const std::size_t n = rotations.size();
    if (connectivity.num_vertices() != n) throw UsageError("rotation field size does not match connectivity");
    std::vector<Vec3> out(n, Vec3::Zero());
    std::vector<bool> visited(n, false);
    for (std::size_t root = 0; root < n; ++root) {
        if (visited[root]) continue;
        out[root] = principal_log(rotations[root]);
        visited[root] = true;
        std::queue<int> todo;
        todo.push(static_cast<int>(root));
        while (!todo.empty()) {
            const int parent = todo.front();
            todo.pop();
            for (int child : connectivity.neighbors[static_cast<std::size_t>(parent)]) {
                const auto c = static_cast<std::size_t>(child);
                if (visited[c]) continue;
                visited[c] = true;
                out[c] = nearest_candidate(principal_log(rotations[c]), out[static_cast<std::size_t>(parent)]);
                todo.push(child);
            }
        }
    }
    return out;
}

namespace {

double scale_value(double x, double lo, double hi) {
    if (hi == lo) return 0.0;
    return -kFeatureHalfRange + 2.0 * kFeatureHalfRange * (x - lo) / (hi - lo);
}

double unscale_value(double x, double lo, double hi) {
    if (hi == lo) return lo;
    return lo + (x + kFeatureHalfRange) * (hi - lo) / (2.0 * kFeatureHalfRange);
}

}  // namespace

double ScalingParams::scale_r(double x) const { return scale_value(x, r_min, r_max); }
double ScalingParams::scale_s(double x) const { return scale_value(x, s_min, s_max); }
double ScalingParams::unscale_r(double x) const { return unscale_value(x, r_min, r_max); }
double ScalingParams::unscale_s(double x) const { return unscale_value(x, s_min, s_max); }
double ScalingParams::r_slope() const { return (r_max - r_min) / (2.0 * kFeatureHalfRange); }
double ScalingParams::s_slope() const { return (s_max - s_min) / (2.0 * kFeatureHalfRange); }

FeatureMatrix raw_features(const Mat3Field& gradients, const Connectivity& connectivity) {
    const auto n = static_cast<Eigen::Index>(gradients.size());
    Mat3Field rotations(gradients.size());
    FeatureMatrix out(n, kFeatureDim);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto pf = polar_decompose(gradients[static_cast<std::size_t>(i)]);
        rotations[static_cast<std::size_t>(i)] = pf.rotation;
        const Mat3& s = pf.stretch;
        out.row(i).tail<6>() << s(0, 0), s(0, 1), s(0, 2), s(1, 1), s(1, 2), s(2, 2);
    }
    const auto r = consistent_axis_angle(rotations, connectivity);
    for (Eigen::Index i = 0; i < n; ++i) out.row(i).head<3>() = r[static_cast<std::size_t>(i)].transpose();
    return out;
}

ScalingParams fit_scaling(std::span<const FeatureMatrix> raw, std::vector<std::string>* warnings) {
    if (raw.empty()) throw UsageError("cannot fit feature scaling to an empty set");
    ScalingParams p;
    p.r_min = p.s_min = std::numeric_limits<double>::infinity();
    p.r_max = p.s_max = -std::numeric_limits<double>::infinity();
    for (const auto& x : raw) {
        p.r_min = std::min(p.r_min, x.leftCols<3>().minCoeff());
        p.r_max = std::max(p.r_max, x.leftCols<3>().maxCoeff());
        p.s_min = std::min(p.s_min, x.rightCols<6>().minCoeff());
        p.s_max = std::max(p.s_max, x.rightCols<6>().maxCoeff());
    }
    if (warnings) {
        if (p.r_min == p.r_max) warnings->push_back("rotation features are constant; mapped to 0");
        if (p.s_min == p.s_max) warnings->push_back("stretch features are constant; mapped to 0");
    }
    return p;
}

FeatureMatrix apply_scaling(const FeatureMatrix& raw, const ScalingParams& params) {
    FeatureMatrix out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        for (int c = 0; c < 3; ++c) out(i, c) = params.scale_r(raw(i, c));
        for (int c = 3; c < kFeatureDim; ++c) out(i, c) = params.scale_s(raw(i, c));
    }
    return out;
}

EncodedFeatures encode_features(const ShapeSet& set, std::span<const int> fit_indices) {
    const GradientFitter fitter(set.reference(), set.connectivity);
    EncodedFeatures enc;
    enc.warnings = fitter.warnings();
    std::vector<FeatureMatrix> raw;
    raw.reserve(set.size());
    for (const auto& shape : set.shapes) raw.push_back(raw_features(fitter.fit(shape), set.connectivity));

    std::vector<FeatureMatrix> subset;
    if (fit_indices.empty()) {
        subset = raw;
    } else {
        for (int m : fit_indices) {
            if (m < 0 || static_cast<std::size_t>(m) >= raw.size()) throw UsageError("scaling index out of range");
            subset.push_back(raw[static_cast<std::size_t>(m)]);
        }
    }
    enc.scaling = fit_scaling(subset, &enc.warnings);
    enc.features.reserve(raw.size());
    for (const auto& x : raw) enc.features.push_back(apply_scaling(x, enc.scaling));
    return enc;
}

FeatureMatrix encode_shape(const GradientFitter& fitter, const Connectivity& connectivity, const Points& shape,
                           const ScalingParams& scaling) {
    return apply_scaling(raw_features(fitter.fit(shape), connectivity), scaling);
}

std::vector<DecodedVertex> decode_features(const FeatureMatrix& features, const ScalingParams& scaling) {
    if (features.cols() != kFeatureDim) throw UsageError("features must have 9 columns");
    std::vector<DecodedVertex> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const Vec3 r(scaling.unscale_r(features(i, 0)), scaling.unscale_r(features(i, 1)),
                     scaling.unscale_r(features(i, 2)));
        double s[6];
        for (int c = 0; c < 6; ++c) s[c] = scaling.unscale_s(features(i, 3 + c));
        auto& dv = out[static_cast<std::size_t>(i)];
        dv.rotation = exp_rotation(r);
        dv.stretch << s[0], s[1], s[2], s[1], s[3], s[4], s[2], s[4], s[5];
    }
    return out;
}

Mat3Field decode_gradients(const FeatureMatrix& features, const ScalingParams& scaling) {
    const auto dec = decode_features(features, scaling);
    Mat3Field out(dec.size());
    for (std::size_t i = 0; i < dec.size(); ++i) out[i] = dec[i].rotation * dec[i].stretch;
    return out;
}

Reconstructor::Reconstructor(const Points& reference, const Connectivity& connectivity, int anchor)
    : conn_(connectivity), reference_(reference), anchor_(anchor) {
    const auto n = static_cast<Eigen::Index>(connectivity.num_vertices());
    if (reference.rows() != n) throw UsageError("reference vertex count does not match connectivity");
    if (anchor < 0 || anchor >= n) throw UsageError("anchor vertex out of range");
    if (n < 2) throw UsageError("reconstruction needs at least two vertices");
    if (connectivity.num_components() != 1)
        throw DataError("mesh is disconnected; reconstruction is rank-deficient beyond a single anchor");

    std::vector<Eigen::Triplet<double>> full, reduced;
    auto red = [anchor](Eigen::Index i) { return i < anchor ? i : i - 1; };
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ring = conn_.neighbors[static_cast<std::size_t>(i)];
        double diag = 0.0;
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const double w = 2.0 * conn_.cotan[static_cast<std::size_t>(i)][k];
            diag += w;
            full.emplace_back(i, ring[k], -w);
            if (i != anchor && ring[k] != anchor) reduced.emplace_back(red(i), red(ring[k]), -w);
        }
        full.emplace_back(i, i, diag);
        if (i != anchor) reduced.emplace_back(red(i), red(i), diag);
    }
    system_.resize(n, n);
    system_.setFromTriplets(full.begin(), full.end());
    Eigen::SparseMatrix<double> reduced_matrix(n - 1, n - 1);
    reduced_matrix.setFromTriplets(reduced.begin(), reduced.end());
    solver_.compute(reduced_matrix);
    if (solver_.info() != Eigen::Success) throw NumericalError("reconstruction system factorization failed");
}

Eigen::MatrixXd Reconstructor::solve_reduced(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd out = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success) throw NumericalError("reconstruction solve failed");
    return out;
}

Points Reconstructor::reconstruct(const Mat3Field& gradients, const Vec3& anchor_pos) const {
    const auto n = reference_.rows();
    if (static_cast<Eigen::Index>(gradients.size()) != n) throw UsageError("gradient field size mismatch");
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ring = conn_.neighbors[static_cast<std::size_t>(i)];
        Vec3 acc = Vec3::Zero();
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const int j = ring[k];
            const Vec3 e = ref_edge(reference_, static_cast<int>(i), j);
            acc += conn_.cotan[static_cast<std::size_t>(i)][k] *
                   (gradients[static_cast<std::size_t>(i)] + gradients[static_cast<std::size_t>(j)]) * e;
        }
        rhs.row(i) = acc.transpose();
    }
    // Move the pinned vertex's coupling to the right-hand side.
    for (Eigen::SparseMatrix<double>::InnerIterator it(system_, anchor_); it; ++it)
        rhs.row(it.row()) -= it.value() * anchor_pos.transpose();

    Eigen::MatrixXd reduced_rhs(n - 1, 3);
    reduced_rhs.topRows(anchor_) = rhs.topRows(anchor_);
    reduced_rhs.bottomRows(n - 1 - anchor_) = rhs.bottomRows(n - 1 - anchor_);
    const Eigen::MatrixXd sol = solve_reduced(reduced_rhs);

    Points out(n, 3);
    out.topRows(anchor_) = sol.topRows(anchor_);
    out.row(anchor_) = anchor_pos.transpose();
    out.bottomRows(n - 1 - anchor_) = sol.bottomRows(n - 1 - anchor_);
    return out;
}

Points Reconstructor::reconstruct(const Mat3Field& gradients) const {
    return reconstruct(gradients, reference_.row(anchor_).transpose());
}

Mat3Field Reconstructor::gradient_adjoint(const Points& d_positions) const {
    const auto n = reference_.rows();
    Eigen::MatrixXd reduced(n - 1, 3);
    reduced.topRows(anchor_) = d_positions.topRows(anchor_);
    reduced.bottomRows(n - 1 - anchor_) = d_positions.bottomRows(n - 1 - anchor_);
    const Eigen::MatrixXd sol = solve_reduced(reduced);
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(n, 3);
    lambda.topRows(anchor_) = sol.topRows(anchor_);
    lambda.bottomRows(n - 1 - anchor_) = sol.bottomRows(n - 1 - anchor_);

    Mat3Field out(static_cast<std::size_t>(n), Mat3::Zero());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ring = conn_.neighbors[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < ring.size(); ++k) {
            const int j = ring[k];
            const Vec3 e = ref_edge(reference_, static_cast<int>(i), j);
            const Vec3 dl = (lambda.row(i) - lambda.row(j)).transpose();
            out[static_cast<std::size_t>(i)] += conn_.cotan[static_cast<std::size_t>(i)][k] * dl * e.transpose();
        }
    }
    return out;
}

}  // namespace meshcomp
