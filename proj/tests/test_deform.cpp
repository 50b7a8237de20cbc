#include <doctest.h>

#include "oracles.hpp"

#include "meshcomp/deform.hpp"
#include "meshcomp/error.hpp"
#include "meshcomp/primitives.hpp"

using namespace meshcomp;

namespace {

Mat3 rz(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

Points rotate(const Points& p, const Mat3& r) { return (r * p.transpose()).transpose(); }

/// Smooth non-rigid deformation: twist about z plus an x stretch.
Points twist(const Points& p, double amount) {
    Points out = p;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double a = amount * p(i, 2);
        out.row(i) = (rz(a) * p.row(i).transpose()).transpose();
        out(i, 0) *= 1.0 + 0.2 * amount;
    }
    return out;
}

}  // namespace

TEST_CASE("deformation gradients: identity and global rotation") {
    const TriMesh m = primitives::icosphere(1);
    const Connectivity c = build_connectivity(m);
    const GradientFitter fit(m.vertices, c);
    for (const Mat3& t : fit.fit(m.vertices)) CHECK((t - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    std::mt19937_64 rng(1);
    const Mat3 r0 = oracle::random_rotation(rng);
    for (const Mat3& t : fit.fit(rotate(m.vertices, r0))) CHECK((t - r0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("deformation gradients match the normal-equation oracle") {
    TriMesh ref = primitives::tube(10, 5, 0.6, 2.0);  // 50 vertices
    REQUIRE(ref.num_vertices() == 50);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 0.05);
    Points def = ref.vertices;
    for (Eigen::Index i = 0; i < def.rows(); ++i)
        for (int k = 0; k < 3; ++k) def(i, k) += g(rng);
    const Connectivity c = build_connectivity(ref);
    const Mat3Field t = GradientFitter(ref.vertices, c).fit(def);
    for (int i = 0; i < 50; ++i) {
        const Mat3 o = oracle::gradient_normal_equations(ref.vertices, def, i, c.neighbors[static_cast<std::size_t>(i)],
                                                         c.cotan[static_cast<std::size_t>(i)]);
        CHECK((t[static_cast<std::size_t>(i)] - o).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("polar decomposition examples") {
    auto p = polar_decompose(Mat3::Identity());
    CHECK((p.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK((p.stretch - Mat3::Identity()).norm() < 1e-12);

    const Mat3 d = Vec3(2, 3, 4).asDiagonal();
    p = polar_decompose(d);
    CHECK((p.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK((p.stretch - d).norm() < 1e-12);

    Mat3 t;
    t << 0, -1, 0, 2, 0, 0, 0, 0, 1;
    p = polar_decompose(t);
    CHECK((p.rotation - rz(M_PI / 2)).norm() < 1e-12);
    CHECK((p.stretch - Mat3(Vec3(2, 1, 1).asDiagonal())).norm() < 1e-12);
}

TEST_CASE("polar factors satisfy the field invariants on random matrices") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int n = 0; n < 2000; ++n) {
        Mat3 t;
        for (int k = 0; k < 9; ++k) t(k / 3, k % 3) = u(rng);
        if (n % 5 == 0) t.col(0) *= -1.0;  // plenty of negative determinants
        const auto p = polar_decompose(t);
        CHECK((p.rotation.transpose() * p.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(p.rotation.determinant() > 0.0);
        CHECK((p.stretch - p.stretch.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((p.rotation * p.stretch - t).cwiseAbs().maxCoeff() < 1e-8);
        const Vec3 r = principal_log(p.rotation);
        CHECK(r.norm() <= M_PI + 1e-12);
        CHECK((exp_rotation(r) - p.rotation).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("exponential map derivative matches finite differences") {
    const Vec3 r(0.3, -1.1, 0.7);
    const auto d = exp_rotation_derivative(r);
    for (int k = 0; k < 3; ++k) {
        Vec3 a = r, b = r;
        a(k) += 1e-6;
        b(k) -= 1e-6;
        const Mat3 fd = (exp_rotation(a) - exp_rotation(b)) / 2e-6;
        CHECK((fd - d[static_cast<std::size_t>(k)]).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("axis-angle consistency") {
    SUBCASE("identity rotations give zero vectors") {
        const Connectivity c = build_connectivity(primitives::tetrahedron());
        const Mat3Field rots(4, Mat3::Identity());
        for (const Vec3& v : consistent_axis_angle(rots, c)) CHECK(v.norm() == 0.0);
    }
    SUBCASE("single vertex principal log") {
        CHECK((principal_log(rz(M_PI / 2)) - Vec3(0, 0, M_PI / 2)).norm() < 1e-12);
    }
    SUBCASE("adjacent rotations across pi pick the non-flipped pair") {
        TriMesh tri;
        tri.vertices.resize(3, 3);
        tri.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
        tri.faces.resize(1, 3);
        tri.faces << 0, 1, 2;
        const Connectivity c = build_connectivity(tri);
        const Mat3Field rots{rz(M_PI - 0.1), rz(M_PI + 0.1), rz(M_PI - 0.1)};
        const auto r = consistent_axis_angle(rots, c);
        CHECK((r[0] - Vec3(0, 0, M_PI - 0.1)).norm() < 1e-9);
        CHECK((r[1] - Vec3(0, 0, M_PI + 0.1)).norm() < 1e-9);
        // oracle: the chosen child is the closest candidate to its parent
        double best = 1e9;
        for (const Vec3& cand : axis_angle_candidates(principal_log(rots[1]))) best = std::min(best, (cand - r[0]).norm());
        CHECK((r[1] - r[0]).norm() == doctest::Approx(best));
        CHECK((r[1] - r[0]).norm() < (Vec3(0, 0, -(M_PI - 0.1)) - r[0]).norm());
    }
    SUBCASE("every chosen vector is equivalent and adjacent choices are close") {
        const TriMesh m = primitives::tube(12, 8, 0.4, 3.0);
        const Connectivity c = build_connectivity(m);
        Mat3Field rots;
        for (Eigen::Index i = 0; i < m.num_vertices(); ++i) rots.push_back(rz(2.0 * M_PI * m.vertices(i, 2) / 3.0 + 0.05));
        const auto r = consistent_axis_angle(rots, c);
        for (std::size_t i = 0; i < r.size(); ++i) {
            CHECK((exp_rotation(r[i]) - rots[i]).cwiseAbs().maxCoeff() < 1e-8);
            for (int j : c.neighbors[i]) CHECK((r[i] - r[static_cast<std::size_t>(j)]).norm() < 1.0);
        }
    }
}

TEST_CASE("feature scaling") {
    ScalingParams s{-1.0, 3.0, 0.5, 1.5};
    CHECK(s.scale_r(-1.0) == doctest::Approx(-0.95));
    CHECK(s.scale_r(3.0) == doctest::Approx(0.95));
    CHECK(s.scale_r(4.0) > 0.95);  // no clamping beyond the fitted range
    CHECK(s.scale_r(4.0) == doctest::Approx(-0.95 + 1.9 * 5.0 / 4.0));
    CHECK(s.unscale_r(0.0) == doctest::Approx(1.0));
    CHECK(s.unscale_s(0.0) == doctest::Approx(1.0));
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int n = 0; n < 1000; ++n) {
        const double x = u(rng);
        CHECK(std::abs(s.unscale_r(s.scale_r(x)) - x) < 1e-12);
        CHECK(std::abs(s.unscale_s(s.scale_s(x)) - x) < 1e-12);
    }
}

TEST_CASE("identical shapes: degenerate rotation range maps to zero") {
    const TriMesh m = primitives::icosahedron();
    const ShapeSet set = make_shape_set({m, m, m});
    const EncodedFeatures enc = encode_features(set);
    CHECK(!enc.warnings.empty());
    for (const auto& x : enc.features) {
        CHECK(x.leftCols<3>().cwiseAbs().maxCoeff() == 0.0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            // S = I: diagonal at the top of the range, off-diagonals at the bottom
            CHECK(x(i, 3) == doctest::Approx(0.95));
            CHECK(x(i, 4) == doctest::Approx(-0.95));
            CHECK(x(i, 5) == doctest::Approx(-0.95));
            CHECK(x(i, 6) == doctest::Approx(0.95));
            CHECK(x(i, 7) == doctest::Approx(-0.95));
            CHECK(x(i, 8) == doctest::Approx(0.95));
        }
    }
}

TEST_CASE("feature decode") {
    const ScalingParams s{-M_PI, M_PI, 0.0, 2.0};
    FeatureMatrix zero = FeatureMatrix::Zero(1, 9);
    auto d = decode_features(zero, s);
    CHECK((d[0].rotation - Mat3::Identity()).norm() < 1e-12);  // r at the range midpoint 0
    CHECK((d[0].stretch - Mat3::Constant(1.0)).norm() < 1e-12);

    // invert the scaling so the decoded angle is pi/2 about z
    FeatureMatrix x = FeatureMatrix::Zero(1, 9);
    x(0, 2) = 0.95 * (M_PI / 2) / M_PI;
    x(0, 3) = x(0, 6) = x(0, 8) = s.scale_s(1.0);
    x(0, 4) = x(0, 5) = x(0, 7) = s.scale_s(0.0);
    d = decode_features(x, s);
    CHECK((d[0].rotation - rz(M_PI / 2)).norm() < 1e-12);
    CHECK((d[0].stretch - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("encode then decode reproduces every training gradient") {
    const TriMesh base = primitives::tube(10, 8, 0.5, 2.0);
    std::vector<TriMesh> meshes{base};
    for (double a : {0.3, -0.6, 1.2}) meshes.push_back({twist(base.vertices, a), base.faces});
    const ShapeSet set = make_shape_set(meshes);
    const auto grads = fit_deformation_gradients(set);
    const EncodedFeatures enc = encode_features(set);
    for (std::size_t m = 0; m < set.size(); ++m) {
        const Mat3Field back = decode_gradients(enc.features[m], enc.scaling);
        for (std::size_t i = 0; i < back.size(); ++i) CHECK((back[i] - grads[m][i]).cwiseAbs().maxCoeff() < 1e-9);
        // the affine map alone round trips to machine precision
        const FeatureMatrix raw = raw_features(grads[m], set.connectivity);
        const FeatureMatrix scaled = apply_scaling(raw, enc.scaling);
        for (Eigen::Index i = 0; i < raw.rows(); ++i)
            for (int k = 0; k < 9; ++k) {
                const double back_raw = k < 3 ? enc.scaling.unscale_r(scaled(i, k)) : enc.scaling.unscale_s(scaled(i, k));
                CHECK(std::abs(back_raw - raw(i, k)) < 1e-12);
            }
    }
}

TEST_CASE("reconstruction from gradients") {
    const TriMesh m = primitives::icosphere(2);
    const Connectivity c = build_connectivity(m);
    const Reconstructor rec(m.vertices, c, 0);
    const Points same = rec.reconstruct(Mat3Field(static_cast<std::size_t>(m.num_vertices()), Mat3::Identity()));
    CHECK((same - m.vertices).cwiseAbs().maxCoeff() < 1e-10);

    std::mt19937_64 rng(8);
    const Mat3 r0 = oracle::random_rotation(rng);
    const Points rot = rec.reconstruct(Mat3Field(static_cast<std::size_t>(m.num_vertices()), r0));
    // rotation about the pinned anchor
    const Points expected = rotate(m.vertices.rowwise() - m.vertices.row(0), r0).rowwise() + m.vertices.row(0);
    CHECK((rot - expected).cwiseAbs().maxCoeff() < 1e-10);

    const Vec3 anchor(1, 2, 3);
    const Points moved = rec.reconstruct(Mat3Field(static_cast<std::size_t>(m.num_vertices()), Mat3::Identity()), anchor);
    CHECK((moved.row(0).transpose() - anchor).norm() < 1e-12);
}

TEST_CASE("round trip through features and reconstruction on deformed shapes") {
    const TriMesh base = primitives::tube(20, 10, 0.5, 3.0);  // 200 vertices
    std::vector<TriMesh> meshes{base};
    for (double a : {0.1, 0.2, -0.15}) meshes.push_back({twist(base.vertices, a), base.faces});
    const ShapeSet set = make_shape_set(meshes);
    const EncodedFeatures enc = encode_features(set);
    const Reconstructor rec(set.reference(), set.connectivity, 0);
    const double diag = bounding_box_diagonal(set.reference());
    for (std::size_t m = 1; m < set.size(); ++m) {
        const Points p = rec.reconstruct(decode_gradients(enc.features[m], enc.scaling), set.shapes[m].row(0).transpose());
        const double err = std::sqrt((p - set.shapes[m]).squaredNorm() / (3.0 * static_cast<double>(p.rows())));
        CHECK(err < 1e-3 * diag);
    }
}

TEST_CASE("reconstruction adjoint matches finite differences") {
    const TriMesh m = primitives::icosphere(1);
    const Connectivity c = build_connectivity(m);
    const Reconstructor rec(m.vertices, c, 0);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Mat3Field t(static_cast<std::size_t>(m.num_vertices()));
    for (auto& x : t) x = Mat3::Identity() + 0.1 * Mat3::NullaryExpr([&] { return g(rng); });
    Points w(m.num_vertices(), 3);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g(rng);
    const auto j = [&](const Mat3Field& tt) { return (rec.reconstruct(tt).array() * w.array()).sum(); };
    const Mat3Field adj = rec.gradient_adjoint(w);
    for (std::size_t i : {1u, 7u, 20u, 41u})
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                Mat3Field p = t, q = t;
                p[i](a, b) += 1e-6;
                q[i](a, b) -= 1e-6;
                CHECK(adj[i](a, b) == doctest::Approx((j(p) - j(q)) / 2e-6).epsilon(1e-6));
            }
}
