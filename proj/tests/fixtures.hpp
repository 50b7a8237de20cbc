#pragma once

// A small trained model shared by the checkpoint, analysis and service tests.

#include "meshcomp/checkpoint.hpp"
#include "meshcomp/deform.hpp"
#include "meshcomp/geodesics.hpp"
#include "meshcomp/primitives.hpp"
#include "meshcomp/train.hpp"

#include <random>

namespace fixture {

inline meshcomp::ShapeSet bent_tubes(int count, std::uint64_t seed) {
    using namespace meshcomp;
    const TriMesh rest = primitives::tube(12, 8, 0.3, 4.0);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<TriMesh> meshes{rest};
    for (int m = 1; m < count; ++m) meshes.push_back({primitives::bend_tube_ends(rest.vertices, 4.0, 1.0, u(rng), u(rng)), rest.faces});
    return make_shape_set(meshes);
}

/// Trained once per process: 10 tubes, first 8 for training, K = 3.
inline const meshcomp::Checkpoint& small_checkpoint() {
    using namespace meshcomp;
    static const Checkpoint ck = [] {
        const ShapeSet set = bent_tubes(10, 5);
        const std::vector<int> train_idx{0, 1, 2, 3, 4, 5, 6, 7};
        const EncodedFeatures enc = encode_features(set, train_idx);
        std::vector<FeatureMatrix> xs(enc.features.begin(), enc.features.begin() + 8);
        TrainConfig cfg;
        cfg.components = 3;
        cfg.epochs = 800;
        TrainResult r = train(xs, enc.scaling, set.connectivity, heat_geodesics(set.reference_mesh()), cfg);
        Checkpoint c;
        c.train_latents = encode_all(xs, r.params, NeighbourMean(set.connectivity));
        c.params = std::move(r.params);
        c.state = std::move(r.state);
        c.reference = set.reference_mesh();
        c.reference_features = enc.features[0];
        c.train_indices = train_idx;
        c.test_indices = {8, 9};
        c.split = "custom";
        c.config_hash = "0123456789abcdef";
        return c;
    }();
    return ck;
}

}  // namespace fixture
