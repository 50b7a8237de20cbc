#pragma once

#include "meshcomp/deform.hpp"
#include "meshcomp/mesh.hpp"
#include "meshcomp/net.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace meshcomp {

/// A trained network bound to its reference mesh: decoding, reconstruction
/// and the reference latent. Immutable after construction, so const members
/// may be called from several threads.
class ComponentModel {
public:
    ComponentModel(NetParams params, TriMesh reference, FeatureMatrix reference_features);

    const NetParams& params() const { return params_; }
    const TriMesh& reference() const { return reference_; }
    const Connectivity& connectivity() const { return conn_; }
    const NeighbourMean& mean() const { return mean_; }
    const Reconstructor& reconstructor() const { return recon_; }
    const FeatureMatrix& reference_features() const { return reference_features_; }
    /// Z_r: encoding of the reference features.
    const Eigen::VectorXd& reference_latent() const { return z_ref_; }
    int latent_dim() const { return params_.latent_dim(); }

    Eigen::VectorXd encode(const FeatureMatrix& features) const;
    FeatureMatrix decode(const Eigen::VectorXd& z) const;
    /// Features to positions, anchor vertex at its reference position.
    Points reconstruct(const FeatureMatrix& features) const;
    Points decode_positions(const Eigen::VectorXd& z) const { return reconstruct(decode(z)); }

private:
    NetParams params_;
    TriMesh reference_;
    FeatureMatrix reference_features_;
    Connectivity conn_;
    NeighbourMean mean_;
    Reconstructor recon_;
    Eigen::VectorXd z_ref_;
};

struct ComponentInfo {
    int center = 0;
    double z_min = 0.0;
    double z_max = 0.0;
    double z_rep = 0.0;          // one of z_min, z_max
    Eigen::VectorXd magnitudes;  // V values in [0, 1]
    bool degenerate = false;
};

struct ComponentSet {
    std::vector<ComponentInfo> components;
    Eigen::VectorXd reference_latent;
};

/// Latent ranges over `latents` (N x K, the encoded training shapes), the
/// representative extreme per dimension and its per-vertex feature
/// displacement from the reference features.
ComponentSet analyze_components(const ComponentModel& model, const Eigen::MatrixXd& latents);

/// z_s = Z_r + (Z_h - Z_r) * w, componentwise. Throws UsageError on a size
/// mismatch or non-finite weight.
Eigen::VectorXd synthesis_latent(const ComponentSet& components, std::span<const double> weights);

Points synthesize(const ComponentModel& model, const ComponentSet& components, std::span<const double> weights);

struct ControlPoint {
    int vertex = 0;
    Vec3 target = Vec3::Zero();
};

struct ControlFitOptions {
    int iterations = 500;
    double step = 0.05;
    double relative_tolerance = 1e-8;
};

struct ControlFit {
    Eigen::VectorXd z;
    Points positions;
    double objective = 0.0;          // at the returned z
    double initial_objective = 0.0;  // at z = Z_r
    int iterations = 0;
};

/// Sum over controls of |p(z)_c - target_c|^2.
double control_objective(const Points& positions, std::span<const ControlPoint> controls);

/// Gradient of the control objective with respect to z, through the decoder,
/// the feature unscaling, the rotation exponential and the reconstruction solve.
Eigen::VectorXd control_objective_gradient(const ComponentModel& model, const Eigen::VectorXd& z,
                                           std::span<const ControlPoint> controls, double* objective = nullptr);

/// ADAM on z from Z_r; returns the best iterate seen.
ControlFit fit_latent_to_control_points(const ComponentModel& model, std::span<const ControlPoint> controls,
                                        const ControlFitOptions& options = {});

/// Linear blue (m = 0) to red (m = 1) ramp.
Rgb heat_color(double magnitude);

/// Writes the representative shape of component k as PLY with per-vertex
/// colors from its magnitudes.
void export_component_heatmap(const ComponentModel& model, const ComponentSet& components, int k,
                              const std::filesystem::path& path, const std::vector<std::string>& comments = {});

}  // namespace meshcomp
