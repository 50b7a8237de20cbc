#pragma once

#include "meshcomp/geodesics.hpp"
#include "meshcomp/net.hpp"

#include <functional>
#include <span>
#include <vector>

namespace meshcomp {

struct TrainState {
    Gradients adam_m;
    Gradients adam_v;
    long long step = 0;
    int epoch = 0;
    std::vector<int> centers;
    Eigen::MatrixXd lambda;  // V x K
    std::vector<LossTerms> history;
    bool converged = false;
    /// Epoch whose starting parameters were restored; -1 when the last ones were kept.
    int best_epoch = -1;
};

/// Uniform fan-based initialization: each convolution weight uniform in
/// [-a, a] with a = sqrt(6 / (in + out)), C with a = sqrt(6 / (K + mu V));
/// biases zero. Deterministic for a given seed on every platform.
NetParams init_params(const TrainConfig& config, Eigen::Index num_vertices, int input_dim, const ScalingParams& scaling);

/// Multiplier on lambda1 and lambda2 during the first epochs: ramps linearly
/// from 1/warmup to 1.
double warmup_scale(const TrainConfig& config, int epoch);

/// Proximal map of step * Omega(C): each block C_k^i shrinks towards zero by
/// step * Lambda_ik / K and is zeroed when shorter than that.
void group_shrink(Eigen::MatrixXd& components, const Eigen::MatrixXd& lambda, int mu, double step);

/// One ADAM update using the moments in `state`.
void adam_step(NetParams& params, const Gradients& grads, TrainState& state);

struct TrainResult {
    NetParams params;
    TrainState state;
};

using ProgressFn = std::function<void(int epoch, const LossTerms& loss)>;

/// Full training loop: ADAM over fixed-order batches, regularizer weights
/// ramped in over `regularizer_warmup` epochs, centers and Lambda refreshed
/// every `center_update_period` epochs, early stop (after the ramp) when the
/// relative loss change over `convergence_window` epochs drops below
/// `convergence_tolerance`. The output-layer decoder bias starts at atanh of
/// the mean training feature. Throws NumericalError on divergence.
TrainResult train(std::span<const FeatureMatrix> features, const ScalingParams& scaling, const Connectivity& connectivity,
                  const GeodesicRows& geo, const TrainConfig& config, const ProgressFn& progress = {});

/// Encodes every feature matrix; returns N x K.
Eigen::MatrixXd encode_all(std::span<const FeatureMatrix> features, const NetParams& params, const NeighbourMean& mean);

}  // namespace meshcomp
