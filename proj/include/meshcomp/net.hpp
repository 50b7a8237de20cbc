#pragma once

#include "meshcomp/deform.hpp"
#include "meshcomp/geodesics.hpp"
#include "meshcomp/mesh.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <vector>

namespace meshcomp {

enum class Activation { tanh, linear };

/// y_i = act(W_point x_i + W_neighbour mean_{j in N(i)} x_j + b).
struct ConvLayer {
    Eigen::MatrixXd w_point;      // out x in
    Eigen::MatrixXd w_neighbour;  // out x in
    Eigen::VectorXd bias;         // out
    Activation activation = Activation::tanh;

    int in_dim() const { return static_cast<int>(w_point.cols()); }
    int out_dim() const { return static_cast<int>(w_point.rows()); }
};

struct TrainConfig {
    int components = 10;               // K
    std::vector<int> layer_dims{9};    // encoder output dims; last one is mu
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double d_min = 0.2;
    double d_max = 0.4;
    double theta = 5.0;
    bool hinge_latent_penalty = false;  // max(max|Z| - theta, 0) instead of the literal form
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int epochs = 20000;
    int batch_size = 0;  // 0: full batch
    std::uint64_t seed = 1;
    int center_update_period = 1;  // epochs
    double norm_epsilon = 1e-8;
    int convergence_window = 200;
    double convergence_tolerance = 1e-6;
    double divergence_threshold = 1e6;
    /// Epochs over which lambda1 and lambda2 ramp up from ~0. Without it the
    /// latent penalty can shrink Z to zero before the data term shapes C.
    int regularizer_warmup = 300;
    /// Apply the group-sparsity term as a shrinkage step after each ADAM
    /// update instead of through its gradient; gives exact zero blocks.
    bool proximal_sparsity = true;
    /// Return the parameters of the lowest-loss epoch after the warm-up
    /// instead of the last ones. ADAM on this loss shows occasional short
    /// spikes, and a run can otherwise end inside one.
    bool restore_best = true;

    /// Throws UsageError for out-of-range values.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Trainable state. The decoder reuses the encoder weights transposed; only
/// its biases are separate parameters.
struct NetParams {
    std::vector<ConvLayer> encoder;
    std::vector<Eigen::VectorXd> decoder_bias;  // decoder_bias[l] mirrors encoder[l], size in_dim
    Eigen::MatrixXd components;                 // C, K x (mu V)
    ScalingParams scaling;
    TrainConfig config;

    int latent_dim() const { return static_cast<int>(components.rows()); }
    int mu() const { return encoder.back().out_dim(); }
    Eigen::Index num_vertices() const { return components.cols() / mu(); }
    std::size_t parameter_count() const;
    /// Every trainable block in a fixed order: per layer (W_point,
    /// W_neighbour, bias), then decoder biases, then C.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
};

/// Gradient (or optimizer moment) buffers shaped like NetParams' trainable blocks.
struct Gradients {
    std::vector<ConvLayer> encoder;
    std::vector<Eigen::VectorXd> decoder_bias;
    Eigen::MatrixXd components;

    static Gradients zeros_like(const NetParams& params);
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    void set_zero();
};

/// Row-normalized adjacency: (A x)_i = sum_{j in N(i)} x_j / D_i.
class NeighbourMean {
public:
    explicit NeighbourMean(const Connectivity& connectivity);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return a_ * x; }
    Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& x) const { return at_ * x; }
    Eigen::Index size() const { return a_.rows(); }
    /// Same maps applied to each V-row block of a vertically stacked batch.
    Eigen::MatrixXd apply_stacked(const Eigen::MatrixXd& x) const;
    Eigen::MatrixXd apply_transpose_stacked(const Eigen::MatrixXd& x) const;

private:
    Eigen::SparseMatrix<double, Eigen::RowMajor> a_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> at_;
    // Compressed rows of the (symmetric) neighbour relation for the stacked kernels.
    std::vector<int> offsets_;
    std::vector<int> indices_;
    std::vector<double> inv_degree_;
};

Eigen::MatrixXd conv_forward(const Eigen::MatrixXd& x, const ConvLayer& layer, const NeighbourMean& mean);

struct EncoderCache {
    std::vector<Eigen::MatrixXd> inputs;      // per layer, V x in
    std::vector<Eigen::MatrixXd> aggregated;  // A * inputs[l]
    std::vector<Eigen::MatrixXd> outputs;     // per layer, V x out (post activation)
    Eigen::VectorXd f;                        // row-major flatten of outputs.back()
    Eigen::VectorXd z;
};

struct DecoderCache {
    Eigen::VectorXd z;
    std::vector<Eigen::MatrixXd> inputs;  // indexed by mirrored encoder layer, V x out_dim(l)
    std::vector<Eigen::MatrixXd> aggregated;
    std::vector<Eigen::MatrixXd> outputs;  // V x in_dim(l), tanh
    const Eigen::MatrixXd& xhat() const { return outputs.front(); }
};

EncoderCache encode_forward(const FeatureMatrix& x, const NetParams& params, const NeighbourMean& mean);
DecoderCache decode_forward(const Eigen::VectorXd& z, const NetParams& params, const NeighbourMean& mean);

Eigen::VectorXd encode(const FeatureMatrix& x, const NetParams& params, const NeighbourMean& mean);
FeatureMatrix decode(const Eigen::VectorXd& z, const NetParams& params, const NeighbourMean& mean);

/// Back-propagates dL/dX_hat through the decoder. Accumulates parameter
/// gradients into `grads` when non-null and returns dL/dz.
Eigen::VectorXd decode_backward(const DecoderCache& cache, const Eigen::MatrixXd& d_xhat, const NetParams& params,
                                const NeighbourMean& mean, Gradients* grads);

/// Back-propagates dL/dz through z = C f and the encoder convolutions.
void encode_backward(const EncoderCache& cache, const Eigen::VectorXd& dz, const NetParams& params,
                     const NeighbourMean& mean, Gradients& grads);

/// Sparsity weights: V x K ramp of geodesic distance to each center.
Eigen::MatrixXd lambda_weights(const GeodesicRows& geo, std::span<const int> centers, double d_min, double d_max);
double lambda_ramp(double d, double d_min, double d_max);

/// Component centers: argmax over vertices of the mu-block norm of each row
/// of C; ties (and all-zero rows) go to the smallest vertex index.
std::vector<int> update_centers(const Eigen::MatrixXd& components, int mu);

/// Weighted group sparsity (1/K) sum_k sum_i Lambda_ik |C_k^i|, norms smoothed.
double omega_c(const Eigen::MatrixXd& components, const Eigen::MatrixXd& lambda, int mu, double norm_epsilon);
/// Adds scale * dOmega/dC into `grad`.
void omega_c_gradient(const Eigen::MatrixXd& components, const Eigen::MatrixXd& lambda, int mu, double norm_epsilon,
                      double scale, Eigen::MatrixXd& grad);

/// Latent penalty (1/K) sum_k (max_m |Z_mk| - theta); Z is B x K.
double v_z(const Eigen::MatrixXd& latents, double theta, bool hinge = false);
/// Subgradient: +-1/K at the first arg-max entry of each column (scaled).
Eigen::MatrixXd v_z_gradient(const Eigen::MatrixXd& latents, double theta, bool hinge = false);

struct LossTerms {
    double data = 0.0;   // (1/B) sum_m |X_hat_m - X_m|_F^2
    double omega = 0.0;  // Omega(C), unweighted
    double vz = 0.0;     // V(Z), unweighted
    double total = 0.0;  // with the lambda weights in effect
};

struct BatchResult {
    LossTerms loss;
    Gradients grads;
    Eigen::MatrixXd latents;  // B x K
};

/// Forward pass, loss and (optionally) exact reverse-mode gradients for a
/// batch. Shapes are stacked so each layer is a single product; results match
/// the per-shape functions above up to summation order.
/// `regularizer_scale` multiplies lambda1 and lambda2 (training warm-up).
/// With `omega_gradient` false the group-sparsity term is left out of the
/// gradient (it still counts in the loss); the proximal trainer uses this.
BatchResult evaluate_batch(std::span<const FeatureMatrix> batch, const NetParams& params, const NeighbourMean& mean,
                           const Eigen::MatrixXd& lambda, bool with_gradients, double regularizer_scale = 1.0,
                           bool omega_gradient = true);

}  // namespace meshcomp
