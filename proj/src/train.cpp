#include "meshcomp/train.hpp"

#include "meshcomp/error.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include <mutex>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif
#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace meshcomp {

namespace {

/// Flushes denormals to zero while alive. Group sparsity drives whole blocks
/// of C towards zero, where denormal arithmetic is very slow.
class FlushDenormals {
public:
#if defined(__SSE__)
    FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
    ~FlushDenormals() { _mm_setcsr(saved_); }

private:
    unsigned saved_;
#endif
};

/// Every epoch allocates and frees the same few-MB buffers; keep them on the
/// heap instead of mapping and unmapping pages each time.
void keep_heap_pages() {
#if defined(__GLIBC__)
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 64 << 20);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
    });
#endif
}

/// Uniform [-a, a) from raw 64-bit engine output (53-bit mantissa).
double uniform_symmetric(std::mt19937_64& rng, double a) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return a * (2.0 * u - 1.0);
}

void fill_uniform(Eigen::MatrixXd& m, std::mt19937_64& rng, double a) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = uniform_symmetric(rng, a);
}

}  // namespace

void group_shrink(Eigen::MatrixXd& components, const Eigen::MatrixXd& lambda, int mu, double step) {
    const Eigen::Index k_count = components.rows(), nv = components.cols() / mu;
    const double s = step / static_cast<double>(k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) {
        for (Eigen::Index i = 0; i < nv; ++i) {
            const double t = s * lambda(i, k);
            if (t <= 0.0) continue;
            auto block = components.row(k).segment(i * mu, mu);
            const double norm = block.norm();
            if (norm <= t)
                block.setZero();
            else
                block *= 1.0 - t / norm;
        }
    }
}

double warmup_scale(const TrainConfig& config, int epoch) {
    if (config.regularizer_warmup <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch + 1) / static_cast<double>(config.regularizer_warmup));
}

NetParams init_params(const TrainConfig& config, Eigen::Index num_vertices, int input_dim, const ScalingParams& scaling) {
    config.validate();
    NetParams p;
    p.config = config;
    p.scaling = scaling;
    std::mt19937_64 rng(config.seed);
    int in = input_dim;
    const std::size_t depth = config.layer_dims.size();
    for (std::size_t l = 0; l < depth; ++l) {
        const int out = config.layer_dims[l];
        ConvLayer layer;
        const double a = std::sqrt(6.0 / (in + out));
        layer.w_point.resize(out, in);
        layer.w_neighbour.resize(out, in);
        fill_uniform(layer.w_point, rng, a);
        fill_uniform(layer.w_neighbour, rng, a);
        layer.bias = Eigen::VectorXd::Zero(out);
        layer.activation = (depth > 1 && l + 1 == depth) ? Activation::linear : Activation::tanh;
        p.encoder.push_back(std::move(layer));
        p.decoder_bias.push_back(Eigen::VectorXd::Zero(in));
        in = out;
    }
    const Eigen::Index cols = static_cast<Eigen::Index>(in) * num_vertices;
    p.components.resize(config.components, cols);
    fill_uniform(p.components, rng, std::sqrt(6.0 / (static_cast<double>(config.components) + static_cast<double>(cols))));
    return p;
}

void adam_step(NetParams& params, const Gradients& grads, TrainState& state) {
    const TrainConfig& cfg = params.config;
    ++state.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto p = params.blocks();
    const auto g = grads.blocks();
    auto m = state.adam_m.blocks();
    auto v = state.adam_v.blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
        for (std::size_t k = 0; k < p[b].size(); ++k) {
            const double gk = g[b][k];
            m[b][k] = cfg.beta1 * m[b][k] + (1.0 - cfg.beta1) * gk;
            v[b][k] = cfg.beta2 * v[b][k] + (1.0 - cfg.beta2) * gk * gk;
            const double mhat = m[b][k] / c1;
            const double vhat = v[b][k] / c2;
            p[b][k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
        }
    }
}

Eigen::MatrixXd encode_all(std::span<const FeatureMatrix> features, const NetParams& params, const NeighbourMean& mean) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(features.size()), params.latent_dim());
    for (std::size_t m = 0; m < features.size(); ++m)
        z.row(static_cast<Eigen::Index>(m)) = encode(features[m], params, mean).transpose();
    return z;
}

TrainResult train(std::span<const FeatureMatrix> features, const ScalingParams& scaling, const Connectivity& connectivity,
                  const GeodesicRows& geo, const TrainConfig& config, const ProgressFn& progress) {
    config.validate();
    if (features.empty()) throw UsageError("no training shapes");
    const auto nv = features.front().rows();
    if (static_cast<std::size_t>(nv) != geo.size() || static_cast<std::size_t>(nv) != connectivity.num_vertices())
        throw UsageError("features, geodesics and connectivity disagree on the vertex count");
    for (const auto& x : features)
        if (x.rows() != nv || x.cols() != kFeatureDim) throw UsageError("inconsistent feature matrix shape");

    const FlushDenormals ftz;
    keep_heap_pages();
    TrainResult r;
    r.params = init_params(config, nv, kFeatureDim, scaling);
    // Start the output layer at the mean feature so the latents model deviations.
    Eigen::VectorXd mean_feature = Eigen::VectorXd::Zero(kFeatureDim);
    for (const auto& x : features) mean_feature += x.colwise().mean().transpose();
    mean_feature /= static_cast<double>(features.size());
    r.params.decoder_bias.front() = mean_feature.cwiseMax(-kFeatureHalfRange).cwiseMin(kFeatureHalfRange).array().atanh().matrix();
    NetParams& params = r.params;
    TrainState& state = r.state;
    state.adam_m = Gradients::zeros_like(params);
    state.adam_v = Gradients::zeros_like(params);
    state.centers = update_centers(params.components, params.mu());
    state.lambda = lambda_weights(geo, state.centers, config.d_min, config.d_max);

    const NeighbourMean mean(connectivity);
    const std::size_t n = features.size();
    const std::size_t batch = config.batch_size > 0 ? std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n) : n;

    const auto full_loss = [&](const NetParams& ps, int epoch) {
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            const BatchResult res = evaluate_batch(features.subspan(start, count), ps, mean, state.lambda, false,
                                                   warmup_scale(config, epoch), !config.proximal_sparsity);
            total += static_cast<double>(count) / static_cast<double>(n) * res.loss.total;
        }
        return total;
    };

    // Lowest-loss iterate after the warm-up, with its optimizer state.
    struct Snapshot {
        NetParams params;
        Gradients m, v;
        long long step = 0;
    };
    std::optional<Snapshot> best;
    double best_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const bool track = config.restore_best && epoch >= config.regularizer_warmup;
        std::optional<Snapshot> start_state;
        if (track) start_state = Snapshot{params, state.adam_m, state.adam_v, state.step};
        LossTerms epoch_loss;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            BatchResult res = evaluate_batch(features.subspan(start, count), params, mean, state.lambda, true,
                                             warmup_scale(config, epoch), !config.proximal_sparsity);
            const double w = static_cast<double>(count) / static_cast<double>(n);
            epoch_loss.data += w * res.loss.data;
            epoch_loss.omega += w * res.loss.omega;
            epoch_loss.vz += w * res.loss.vz;
            epoch_loss.total += w * res.loss.total;
            if (!std::isfinite(res.loss.total) || res.loss.total > config.divergence_threshold) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << ": loss " << res.loss.total << " (data "
                    << res.loss.data << ", omega " << res.loss.omega << ", vz " << res.loss.vz << ")";
                throw NumericalError(msg.str());
            }
            const double lambda1 = warmup_scale(config, epoch) * config.lambda1;
            adam_step(params, res.grads, state);
            if (config.proximal_sparsity && lambda1 > 0.0)
                group_shrink(params.components, state.lambda, params.mu(), config.learning_rate * lambda1);
        }
        if (track && epoch_loss.total < best_loss) {
            best_loss = epoch_loss.total;
            best_epoch = epoch;
            best = std::move(start_state);
        }
        state.history.push_back(epoch_loss);
        state.epoch = epoch + 1;
        if (progress) progress(epoch, epoch_loss);

        if (state.epoch % config.center_update_period == 0) {
            state.centers = update_centers(params.components, params.mu());
            state.lambda = lambda_weights(geo, state.centers, config.d_min, config.d_max);
        }

        const int window = config.convergence_window;
        if (window > 0 && static_cast<int>(state.history.size()) > window + std::max(config.regularizer_warmup, 0)) {
            const double prev = state.history[state.history.size() - 1 - static_cast<std::size_t>(window)].total;
            const double cur = epoch_loss.total;
            if (std::abs(cur - prev) <= config.convergence_tolerance * std::abs(prev)) {
                state.converged = true;
                break;
            }
        }
    }

    if (best && full_loss(params, state.epoch - 1) > best_loss) {
        params = std::move(best->params);
        state.adam_m = std::move(best->m);
        state.adam_v = std::move(best->v);
        state.step = best->step;
        state.best_epoch = best_epoch;
        state.centers = update_centers(params.components, params.mu());
        state.lambda = lambda_weights(geo, state.centers, config.d_min, config.d_max);
    }
    return r;
}

}  // namespace meshcomp
