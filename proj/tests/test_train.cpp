#include <doctest.h>

#include "oracles.hpp"

#include "meshcomp/checkpoint.hpp"
#include "meshcomp/deform.hpp"
#include "meshcomp/error.hpp"
#include "meshcomp/geodesics.hpp"
#include "meshcomp/primitives.hpp"
#include "meshcomp/train.hpp"

#include <cstring>

using namespace meshcomp;

namespace {

/// Small bent-tube collection (96 vertices) that trains in seconds.
ShapeSet small_tubes(int count, std::uint64_t seed) {
    const TriMesh rest = primitives::tube(12, 8, 0.3, 4.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<TriMesh> meshes{rest};
    for (int m = 1; m < count; ++m) meshes.push_back({primitives::bend_tube_ends(rest.vertices, 4.0, 1.0, u(rng), u(rng)), rest.faces});
    return make_shape_set(meshes);
}

double mse(const TrainResult& r, Eigen::Index v) { return r.state.history.back().data / (9.0 * static_cast<double>(v)); }

}  // namespace

TEST_CASE("init is deterministic and follows the fan rule") {
    TrainConfig cfg;
    cfg.components = 3;
    cfg.layer_dims = {9, 4};
    const NetParams a = init_params(cfg, 50, 9, ScalingParams{});
    const NetParams b = init_params(cfg, 50, 9, ScalingParams{});
    CHECK(a.components == b.components);
    CHECK(a.encoder[1].w_point == b.encoder[1].w_point);
    CHECK(a.encoder[0].w_point.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 18.0));
    CHECK(a.encoder[1].w_neighbour.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 13.0));
    CHECK(a.components.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / (3.0 + 200.0)));
    CHECK(a.encoder[0].bias.norm() == 0.0);
    CHECK(a.encoder[0].activation == Activation::tanh);
    CHECK(a.encoder[1].activation == Activation::linear);
    cfg.seed = 2;
    CHECK(init_params(cfg, 50, 9, ScalingParams{}).components != a.components);
}

TEST_CASE("warm-up ramp") {
    TrainConfig cfg;
    cfg.regularizer_warmup = 4;
    CHECK(warmup_scale(cfg, 0) == 0.25);
    CHECK(warmup_scale(cfg, 3) == 1.0);
    CHECK(warmup_scale(cfg, 100) == 1.0);
    cfg.regularizer_warmup = 0;
    CHECK(warmup_scale(cfg, 0) == 1.0);
}

TEST_CASE("group shrinkage is the proximal map of the weighted block norm") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    const Eigen::MatrixXd c = Eigen::MatrixXd::NullaryExpr(2, 3 * 10, [&] { return g(rng); });
    Eigen::MatrixXd lam = Eigen::MatrixXd::NullaryExpr(10, 2, [&] { return std::abs(g(rng)); });
    lam(3, 1) = 0.0;
    Eigen::MatrixXd s = c;
    const double step = 0.8;
    group_shrink(s, lam, 3, step);
    for (Eigen::Index k = 0; k < 2; ++k)
        for (Eigen::Index i = 0; i < 10; ++i) {
            const Eigen::VectorXd x = c.row(k).segment(i * 3, 3).transpose();
            const Eigen::VectorXd y = s.row(k).segment(i * 3, 3).transpose();
            const double t = step * lam(i, k) / 2.0;
            // y minimizes 0.5 |y - x|^2 + t |y|: check against the closed form and the optimality condition
            if (x.norm() <= t) {
                CHECK(y.norm() == 0.0);
            } else {
                CHECK((y - x * (1.0 - t / x.norm())).norm() < 1e-14);
                CHECK(((y - x) + t * y / y.norm()).norm() < 1e-12);
            }
        }
    CHECK(s.row(1).segment(9, 3) == c.row(1).segment(9, 3));
}

TEST_CASE("training fits a small bent-tube set") {
    const ShapeSet set = small_tubes(8, 3);
    const EncodedFeatures enc = encode_features(set);
    const GeodesicMatrix geo = heat_geodesics(set.reference_mesh());
    TrainConfig cfg;
    cfg.components = 2;
    cfg.epochs = 1500;
    int calls = 0;
    const TrainResult r = train(enc.features, enc.scaling, set.connectivity, geo, cfg, [&](int, const LossTerms&) { ++calls; });
    CHECK(calls == r.state.epoch);
    CHECK(static_cast<int>(r.state.history.size()) == r.state.epoch);
    CHECK(mse(r, set.num_vertices()) < 1e-3);
    CHECK(r.state.centers.size() == 2);
    CHECK(r.state.history.back().total < r.state.history.front().total);

    SUBCASE("same seed gives bit-identical parameters") {
        const TrainResult again = train(enc.features, enc.scaling, set.connectivity, geo, cfg);
        const auto a = r.params.blocks();
        const auto b = again.params.blocks();
        for (std::size_t k = 0; k < a.size(); ++k)
            CHECK(std::memcmp(a[k].data(), b[k].data(), a[k].size_bytes()) == 0);
    }
    SUBCASE("without the sparsity term the data term is no worse") {
        TrainConfig free = cfg;
        free.lambda1 = 0.0;
        const TrainResult f = train(enc.features, enc.scaling, set.connectivity, geo, free);
        CHECK(f.state.history.back().data <= r.state.history.back().data);
    }
}

TEST_CASE("the restored iterate is the one reached after best_epoch epochs") {
    const ShapeSet set = small_tubes(6, 5);
    const EncodedFeatures enc = encode_features(set);
    const GeodesicMatrix geo = heat_geodesics(set.reference_mesh());
    TrainConfig cfg;
    cfg.components = 2;
    cfg.epochs = 700;
    // Find a step size at which the last epoch is not the best one.
    TrainResult r;
    for (const double lr : {0.003, 0.01, 0.02, 0.05}) {
        cfg.learning_rate = lr;
        r = train(enc.features, enc.scaling, set.connectivity, geo, cfg);
        if (r.state.best_epoch >= 0) break;
    }
    MESSAGE("learning rate " << cfg.learning_rate << ", best epoch " << r.state.best_epoch);
    CHECK(r.state.epoch == cfg.epochs);
    CHECK(static_cast<int>(r.state.history.size()) == cfg.epochs);
    REQUIRE(r.state.best_epoch >= cfg.regularizer_warmup);
    for (int e = cfg.regularizer_warmup; e < cfg.epochs; ++e) CHECK(r.state.history[e].total >= r.state.history[r.state.best_epoch].total);

    TrainConfig plain = cfg;
    plain.restore_best = false;
    plain.epochs = r.state.best_epoch;
    const TrainResult p = train(enc.features, enc.scaling, set.connectivity, geo, plain);
    CHECK(p.state.best_epoch == -1);
    CHECK(p.state.step == r.state.step);
    const auto a = r.params.blocks();
    const auto b = p.params.blocks();
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(std::memcmp(a[k].data(), b[k].data(), a[k].size_bytes()) == 0);
    CHECK(p.state.centers == r.state.centers);
}

TEST_CASE("an overfit two-shape set round trips through the autoencoder") {
    const ShapeSet set = small_tubes(2, 9);
    const EncodedFeatures enc = encode_features(set);
    const GeodesicMatrix geo = heat_geodesics(set.reference_mesh());
    TrainConfig cfg;
    cfg.components = 2;
    cfg.epochs = 2000;
    const TrainResult r = train(enc.features, enc.scaling, set.connectivity, geo, cfg);
    const NeighbourMean mean(set.connectivity);
    for (const auto& x : enc.features) {
        const FeatureMatrix back = decode(encode(x, r.params, mean), r.params, mean);
        CHECK((back - x).squaredNorm() / static_cast<double>(x.size()) < 1e-3);
    }
}

TEST_CASE("training rejects bad input and reports divergence") {
    const ShapeSet set = small_tubes(3, 1);
    const EncodedFeatures enc = encode_features(set);
    const GeodesicMatrix geo = heat_geodesics(set.reference_mesh());
    TrainConfig cfg;
    cfg.components = 2;
    cfg.epochs = 5;
    CHECK_THROWS_AS(train({}, enc.scaling, set.connectivity, geo, cfg), UsageError);
    const GeodesicMatrix other = heat_geodesics(primitives::icosahedron());
    CHECK_THROWS_AS(train(enc.features, enc.scaling, set.connectivity, other, cfg), UsageError);
    cfg.divergence_threshold = 1e-9;
    CHECK_THROWS_AS(train(enc.features, enc.scaling, set.connectivity, geo, cfg), NumericalError);
}
