#pragma once

#include "meshcomp/mesh.hpp"
#include "meshcomp/net.hpp"
#include "meshcomp/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace meshcomp {

/// Everything a trained model needs for evaluation, analysis and serving.
struct Checkpoint {
    NetParams params;
    TrainState state;
    TriMesh reference;                 // reference mesh the features are relative to
    int reference_index = 0;           // within the training manifest
    FeatureMatrix reference_features;  // scaled features of the reference (V x 9)
    Eigen::MatrixXd train_latents;     // N_train x K
    std::vector<int> train_indices;
    std::vector<int> test_indices;
    std::string split;        // split spec used for training
    bool aligned = false;     // shapes were rigidly aligned before encoding
    std::string config_hash;  // hash of the run configuration

    std::uint64_t mesh_hash() const { return mesh_content_hash(reference); }
};

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

/// Binary layout: "MDAE", u32 version, u64 header length, UTF-8 JSON header
/// (config, dims, scaling, centers, mesh hash, array manifest with byte
/// offsets), then little-endian float64 arrays in manifest order. Matrices are
/// stored row-major.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws DataError on bad magic/version, truncation or malformed content.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws DataError unless `mesh` matches the checkpoint's reference mesh hash.
void verify_checkpoint_mesh(const Checkpoint& ckpt, const TriMesh& mesh);

}  // namespace meshcomp
