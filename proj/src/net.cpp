#include "meshcomp/net.hpp"

#include "meshcomp/error.hpp"

#include <cmath>
#include <string>

namespace meshcomp {

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw UsageError("invalid training config: " + msg); };
    if (components < 1) fail("component count must be >= 1");
    if (layer_dims.empty()) fail("at least one convolution layer is required");
    for (int d : layer_dims)
        if (d < 1) fail("layer dimensions must be >= 1");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) fail("lambda1 and lambda2 must be >= 0");
    if (!(d_min >= 0.0 && d_min < d_max && d_max <= 1.0)) fail("need 0 <= d_min < d_max <= 1");
    if (!(learning_rate > 0.0)) fail("learning rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("ADAM betas must be in [0, 1)");
    if (!(adam_epsilon > 0.0)) fail("ADAM epsilon must be positive");
    if (epochs < 0) fail("epochs must be >= 0");
    if (batch_size < 0) fail("batch size must be >= 0");
    if (center_update_period < 1) fail("center update period must be >= 1");
    if (!(norm_epsilon >= 0.0)) fail("norm epsilon must be >= 0");
    if (!std::isfinite(theta)) fail("theta must be finite");
    if (regularizer_warmup < 0) fail("regularizer warm-up must be >= 0");
}

namespace {

template <typename Span, typename Layers, typename Biases, typename Comp>
std::vector<Span> collect_blocks(Layers& encoder, Biases& decoder_bias, Comp& components) {
    std::vector<Span> out;
    for (auto& layer : encoder) {
        out.emplace_back(layer.w_point.data(), static_cast<std::size_t>(layer.w_point.size()));
        out.emplace_back(layer.w_neighbour.data(), static_cast<std::size_t>(layer.w_neighbour.size()));
        out.emplace_back(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
    }
    for (auto& b : decoder_bias) out.emplace_back(b.data(), static_cast<std::size_t>(b.size()));
    out.emplace_back(components.data(), static_cast<std::size_t>(components.size()));
    return out;
}

}  // namespace

std::size_t NetParams::parameter_count() const {
    std::size_t n = 0;
    for (auto b : blocks()) n += b.size();
    return n;
}

std::vector<std::span<double>> NetParams::blocks() {
    return collect_blocks<std::span<double>>(encoder, decoder_bias, components);
}

std::vector<std::span<const double>> NetParams::blocks() const {
    return collect_blocks<std::span<const double>>(encoder, decoder_bias, components);
}

Gradients Gradients::zeros_like(const NetParams& params) {
    Gradients g;
    for (const auto& layer : params.encoder) {
        ConvLayer z;
        z.w_point = Eigen::MatrixXd::Zero(layer.w_point.rows(), layer.w_point.cols());
        z.w_neighbour = Eigen::MatrixXd::Zero(layer.w_neighbour.rows(), layer.w_neighbour.cols());
        z.bias = Eigen::VectorXd::Zero(layer.bias.size());
        z.activation = layer.activation;
        g.encoder.push_back(std::move(z));
    }
    for (const auto& b : params.decoder_bias) g.decoder_bias.push_back(Eigen::VectorXd::Zero(b.size()));
    g.components = Eigen::MatrixXd::Zero(params.components.rows(), params.components.cols());
    return g;
}

std::vector<std::span<double>> Gradients::blocks() {
    return collect_blocks<std::span<double>>(encoder, decoder_bias, components);
}

std::vector<std::span<const double>> Gradients::blocks() const {
    return collect_blocks<std::span<const double>>(encoder, decoder_bias, components);
}

void Gradients::set_zero() {
    for (auto b : blocks()) std::fill(b.begin(), b.end(), 0.0);
}

NeighbourMean::NeighbourMean(const Connectivity& connectivity) {
    const auto n = static_cast<Eigen::Index>(connectivity.num_vertices());
    std::vector<Eigen::Triplet<double>> t;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ring = connectivity.neighbors[static_cast<std::size_t>(i)];
        if (ring.empty()) throw DataError("vertex " + std::to_string(i) + " has no neighbours");
        const double w = 1.0 / static_cast<double>(ring.size());
        for (int j : ring) t.emplace_back(i, j, w);
    }
    a_.resize(n, n);
    a_.setFromTriplets(t.begin(), t.end());
    at_ = a_.transpose();
    offsets_.assign(1, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& ring = connectivity.neighbors[static_cast<std::size_t>(i)];
        indices_.insert(indices_.end(), ring.begin(), ring.end());
        offsets_.push_back(static_cast<int>(indices_.size()));
        inv_degree_.push_back(1.0 / static_cast<double>(ring.size()));
    }
}

Eigen::MatrixXd NeighbourMean::apply_stacked(const Eigen::MatrixXd& x) const {
    const Eigen::Index n = size();
    if (n == 0 || x.rows() % n != 0) throw UsageError("stacked batch rows are not a multiple of the vertex count");
    Eigen::MatrixXd y(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index start = 0; start < x.rows(); start += n) {
            const double* src = x.col(c).data() + start;
            double* dst = y.col(c).data() + start;
            for (Eigen::Index i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int k = offsets_[static_cast<std::size_t>(i)]; k < offsets_[static_cast<std::size_t>(i) + 1]; ++k)
                    acc += src[indices_[static_cast<std::size_t>(k)]];
                dst[i] = acc * inv_degree_[static_cast<std::size_t>(i)];
            }
        }
    return y;
}

Eigen::MatrixXd NeighbourMean::apply_transpose_stacked(const Eigen::MatrixXd& x) const {
    const Eigen::Index n = size();
    if (n == 0 || x.rows() % n != 0) throw UsageError("stacked batch rows are not a multiple of the vertex count");
    Eigen::MatrixXd y(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index start = 0; start < x.rows(); start += n) {
            const double* src = x.col(c).data() + start;
            double* dst = y.col(c).data() + start;
            for (Eigen::Index j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int k = offsets_[static_cast<std::size_t>(j)]; k < offsets_[static_cast<std::size_t>(j) + 1]; ++k) {
                    const int i = indices_[static_cast<std::size_t>(k)];
                    acc += src[i] * inv_degree_[static_cast<std::size_t>(i)];
                }
                dst[j] = acc;
            }
        }
    return y;
}

namespace {

/// tanh through the vectorized exponential; exp overflow saturates to +-1.
void tanh_inplace(Eigen::MatrixXd& m) {
    m = (1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0)).matrix();
}

void apply_activation(Eigen::MatrixXd& m, Activation act) {
    if (act == Activation::tanh) tanh_inplace(m);
}

/// Pre-activation of a convolution whose weights act on row vectors as
/// x * wp + (A x) * wn (already transposed as needed).
template <typename WP, typename WN>
Eigen::MatrixXd conv_pre(const Eigen::MatrixXd& x, const Eigen::MatrixXd& agg, const WP& wp, const WN& wn,
                         const Eigen::VectorXd& bias) {
    Eigen::MatrixXd y = x * wp;
    y.noalias() += agg * wn;
    y.rowwise() += bias.transpose();
    return y;
}

Eigen::VectorXd flatten_rows(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd t = m.transpose();
    return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

Eigen::MatrixXd unflatten_rows(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), cols, rows).transpose();
}

void check_dims(const FeatureMatrix& x, const NetParams& params) {
    if (params.encoder.empty()) throw UsageError("network has no layers");
    if (x.cols() != params.encoder.front().in_dim())
        throw UsageError("input has " + std::to_string(x.cols()) + " channels, network expects " +
                         std::to_string(params.encoder.front().in_dim()));
    if (x.rows() != params.num_vertices())
        throw UsageError("input has " + std::to_string(x.rows()) + " vertices, network expects " +
                         std::to_string(params.num_vertices()));
}

}  // namespace

Eigen::MatrixXd conv_forward(const Eigen::MatrixXd& x, const ConvLayer& layer, const NeighbourMean& mean) {
    if (x.cols() != layer.in_dim() || layer.w_neighbour.rows() != layer.out_dim() ||
        layer.w_neighbour.cols() != layer.in_dim() || layer.bias.size() != layer.out_dim())
        throw UsageError("convolution dimension mismatch");
    if (x.rows() != mean.size()) throw UsageError("convolution input vertex count mismatch");
    Eigen::MatrixXd y = conv_pre(x, mean.apply(x), layer.w_point.transpose(), layer.w_neighbour.transpose(), layer.bias);
    apply_activation(y, layer.activation);
    return y;
}

EncoderCache encode_forward(const FeatureMatrix& x, const NetParams& params, const NeighbourMean& mean) {
    check_dims(x, params);
    EncoderCache c;
    const std::size_t depth = params.encoder.size();
    c.inputs.reserve(depth);
    c.aggregated.reserve(depth);
    c.outputs.reserve(depth);
    const Eigen::MatrixXd* h = &x;
    for (const auto& layer : params.encoder) {
        c.inputs.push_back(*h);
        c.aggregated.push_back(mean.apply(*h));
        Eigen::MatrixXd y = conv_pre(*h, c.aggregated.back(), layer.w_point.transpose(), layer.w_neighbour.transpose(),
                                     layer.bias);
        apply_activation(y, layer.activation);
        c.outputs.push_back(std::move(y));
        h = &c.outputs.back();
    }
    c.f = flatten_rows(c.outputs.back());
    c.z = params.components * c.f;
    return c;
}

DecoderCache decode_forward(const Eigen::VectorXd& z, const NetParams& params, const NeighbourMean& mean) {
    if (z.size() != params.latent_dim()) throw UsageError("latent vector has wrong length");
    const std::size_t depth = params.encoder.size();
    DecoderCache c;
    c.z = z;
    c.inputs.resize(depth);
    c.aggregated.resize(depth);
    c.outputs.resize(depth);
    const Eigen::VectorXd fhat = params.components.transpose() * z;
    Eigen::MatrixXd g = unflatten_rows(fhat, params.num_vertices(), params.mu());
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = params.encoder[l];
        c.inputs[l] = std::move(g);
        c.aggregated[l] = mean.apply(c.inputs[l]);
        Eigen::MatrixXd y = conv_pre(c.inputs[l], c.aggregated[l], layer.w_point, layer.w_neighbour,
                                     params.decoder_bias[l]);
        tanh_inplace(y);
        c.outputs[l] = y;
        g = std::move(y);
    }
    return c;
}

Eigen::VectorXd encode(const FeatureMatrix& x, const NetParams& params, const NeighbourMean& mean) {
    return encode_forward(x, params, mean).z;
}

FeatureMatrix decode(const Eigen::VectorXd& z, const NetParams& params, const NeighbourMean& mean) {
    return decode_forward(z, params, mean).xhat();
}

Eigen::VectorXd decode_backward(const DecoderCache& cache, const Eigen::MatrixXd& d_xhat, const NetParams& params,
                                const NeighbourMean& mean, Gradients* grads) {
    const std::size_t depth = params.encoder.size();
    Eigen::MatrixXd d_out = d_xhat;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = params.encoder[l];
        const Eigen::MatrixXd dq = d_out.cwiseProduct((1.0 - cache.outputs[l].array().square()).matrix());
        if (grads) {
            auto& g = grads->encoder[l];
            g.w_point.noalias() += cache.inputs[l].transpose() * dq;
            g.w_neighbour.noalias() += cache.aggregated[l].transpose() * dq;
            grads->decoder_bias[l] += dq.colwise().sum().transpose();
        }
        Eigen::MatrixXd d_in = dq * layer.w_point.transpose();
        d_in.noalias() += mean.apply_transpose(dq * layer.w_neighbour.transpose());
        d_out = std::move(d_in);
    }
    const Eigen::VectorXd d_fhat = flatten_rows(d_out);
    if (grads) grads->components.noalias() += cache.z * d_fhat.transpose();
    return params.components * d_fhat;
}

void encode_backward(const EncoderCache& cache, const Eigen::VectorXd& dz, const NetParams& params,
                     const NeighbourMean& mean, Gradients& grads) {
    grads.components.noalias() += dz * cache.f.transpose();
    const Eigen::VectorXd df = params.components.transpose() * dz;
    Eigen::MatrixXd dh = unflatten_rows(df, params.num_vertices(), params.mu());
    for (std::size_t l = params.encoder.size(); l-- > 0;) {
        const auto& layer = params.encoder[l];
        Eigen::MatrixXd da = layer.activation == Activation::tanh
                                 ? Eigen::MatrixXd(dh.cwiseProduct((1.0 - cache.outputs[l].array().square()).matrix()))
                                 : dh;
        auto& g = grads.encoder[l];
        g.w_point.noalias() += da.transpose() * cache.inputs[l];
        g.w_neighbour.noalias() += da.transpose() * cache.aggregated[l];
        g.bias += da.colwise().sum().transpose();
        if (l == 0) break;
        Eigen::MatrixXd d_in = da * layer.w_point;
        d_in.noalias() += mean.apply_transpose(da * layer.w_neighbour);
        dh = std::move(d_in);
    }
}

double lambda_ramp(double d, double d_min, double d_max) {
    if (d < d_min) return 0.0;
    if (d > d_max) return 1.0;
    return (d - d_min) / (d_max - d_min);
}

Eigen::MatrixXd lambda_weights(const GeodesicRows& geo, std::span<const int> centers, double d_min, double d_max) {
    const auto n = static_cast<Eigen::Index>(geo.size());
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(centers.size()));
    for (std::size_t k = 0; k < centers.size(); ++k) {
        if (centers[k] < 0 || centers[k] >= n) throw UsageError("component center out of range");
        const auto row = geo.row(static_cast<std::size_t>(centers[k]));
        for (Eigen::Index i = 0; i < n; ++i)
            out(i, static_cast<Eigen::Index>(k)) = lambda_ramp(row[static_cast<std::size_t>(i)], d_min, d_max);
    }
    return out;
}

std::vector<int> update_centers(const Eigen::MatrixXd& components, int mu) {
    const Eigen::Index nv = components.cols() / mu;
    std::vector<int> out(static_cast<std::size_t>(components.rows()), 0);
    for (Eigen::Index k = 0; k < components.rows(); ++k) {
        double best = -1.0;
        for (Eigen::Index i = 0; i < nv; ++i) {
            const double norm = components.row(k).segment(i * mu, mu).squaredNorm();
            if (norm > best) {
                best = norm;
                out[static_cast<std::size_t>(k)] = static_cast<int>(i);
            }
        }
    }
    return out;
}

double omega_c(const Eigen::MatrixXd& components, const Eigen::MatrixXd& lambda, int mu, double norm_epsilon) {
    const Eigen::Index k_count = components.rows(), nv = components.cols() / mu;
    if (lambda.rows() != nv || lambda.cols() != k_count) throw UsageError("Lambda shape does not match C");
    const double eps2 = norm_epsilon * norm_epsilon;
    double total = 0.0;
    for (Eigen::Index k = 0; k < k_count; ++k)
        for (Eigen::Index i = 0; i < nv; ++i)
            total += lambda(i, k) * std::sqrt(components.row(k).segment(i * mu, mu).squaredNorm() + eps2);
    return total / static_cast<double>(k_count);
}

void omega_c_gradient(const Eigen::MatrixXd& components, const Eigen::MatrixXd& lambda, int mu, double norm_epsilon,
                      double scale, Eigen::MatrixXd& grad) {
    const Eigen::Index k_count = components.rows(), nv = components.cols() / mu;
    const double eps2 = norm_epsilon * norm_epsilon;
    const double s = scale / static_cast<double>(k_count);
    for (Eigen::Index k = 0; k < k_count; ++k) {
        for (Eigen::Index i = 0; i < nv; ++i) {
            const double w = lambda(i, k);
            if (w == 0.0) continue;
            const auto block = components.row(k).segment(i * mu, mu);
            const double norm = std::sqrt(block.squaredNorm() + eps2);
            if (norm == 0.0) continue;
            grad.row(k).segment(i * mu, mu) += (s * w / norm) * block;
        }
    }
}

namespace {

/// First row attaining max |Z_mk| in column k.
Eigen::Index column_argmax_abs(const Eigen::MatrixXd& z, Eigen::Index k) {
    Eigen::Index best = 0;
    for (Eigen::Index m = 1; m < z.rows(); ++m)
        if (std::abs(z(m, k)) > std::abs(z(best, k))) best = m;
    return best;
}

}  // namespace

double v_z(const Eigen::MatrixXd& latents, double theta, bool hinge) {
    if (latents.rows() < 1 || latents.cols() < 1) throw UsageError("latent penalty needs a non-empty batch");
    double total = 0.0;
    for (Eigen::Index k = 0; k < latents.cols(); ++k) {
        const double term = std::abs(latents(column_argmax_abs(latents, k), k)) - theta;
        total += hinge ? std::max(term, 0.0) : term;
    }
    return total / static_cast<double>(latents.cols());
}

Eigen::MatrixXd v_z_gradient(const Eigen::MatrixXd& latents, double theta, bool hinge) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(latents.rows(), latents.cols());
    const double inv_k = 1.0 / static_cast<double>(latents.cols());
    for (Eigen::Index k = 0; k < latents.cols(); ++k) {
        const Eigen::Index m = column_argmax_abs(latents, k);
        const double v = latents(m, k);
        if (hinge && std::abs(v) - theta <= 0.0) continue;
        g(m, k) = v > 0.0 ? inv_k : (v < 0.0 ? -inv_k : 0.0);
    }
    return g;
}

namespace {

/// Row-major flatten of each V-row block of `stacked` into the columns of the result.
Eigen::MatrixXd blocks_to_columns(const Eigen::MatrixXd& stacked, Eigen::Index nv) {
    const Eigen::Index b = stacked.rows() / nv, mu = stacked.cols();
    Eigen::MatrixXd out(nv * mu, b);
    for (Eigen::Index m = 0; m < b; ++m)
        for (Eigen::Index i = 0; i < nv; ++i)
            for (Eigen::Index c = 0; c < mu; ++c) out(i * mu + c, m) = stacked(m * nv + i, c);
    return out;
}

Eigen::MatrixXd columns_to_blocks(const Eigen::MatrixXd& cols, Eigen::Index nv, Eigen::Index mu) {
    const Eigen::Index b = cols.cols();
    Eigen::MatrixXd out(b * nv, mu);
    for (Eigen::Index m = 0; m < b; ++m)
        for (Eigen::Index i = 0; i < nv; ++i)
            for (Eigen::Index c = 0; c < mu; ++c) out(m * nv + i, c) = cols(i * mu + c, m);
    return out;
}

Eigen::MatrixXd tanh_derivative_product(const Eigen::MatrixXd& upstream, const Eigen::MatrixXd& out) {
    return (upstream.array() * (1.0 - out.array().square())).matrix();
}

}  // namespace

BatchResult evaluate_batch(std::span<const FeatureMatrix> batch, const NetParams& params, const NeighbourMean& mean,
                           const Eigen::MatrixXd& lambda, bool with_gradients, double regularizer_scale,
                           bool omega_gradient) {
    if (batch.empty()) throw UsageError("empty batch");
    for (const auto& x : batch) check_dims(x, params);
    const auto b = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index nv = params.num_vertices();
    const auto mu = static_cast<Eigen::Index>(params.mu());
    const std::size_t depth = params.encoder.size();
    const TrainConfig& cfg = params.config;
    const double lambda1 = regularizer_scale * cfg.lambda1;
    const double lambda2 = regularizer_scale * cfg.lambda2;

    Eigen::MatrixXd xs(b * nv, batch.front().cols());
    for (Eigen::Index m = 0; m < b; ++m) xs.middleRows(m * nv, nv) = batch[static_cast<std::size_t>(m)];

    // Encoder.
    std::vector<Eigen::MatrixXd> e_in(depth), e_agg(depth), e_out(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = params.encoder[l];
        e_in[l] = l == 0 ? xs : e_out[l - 1];
        e_agg[l] = mean.apply_stacked(e_in[l]);
        e_out[l] = conv_pre(e_in[l], e_agg[l], layer.w_point.transpose(), layer.w_neighbour.transpose(), layer.bias);
        apply_activation(e_out[l], layer.activation);
    }
    const Eigen::MatrixXd f = blocks_to_columns(e_out.back(), nv);  // mu V x B
    const Eigen::MatrixXd z = params.components * f;                // K x B

    // Decoder, indexed by mirrored encoder layer.
    std::vector<Eigen::MatrixXd> d_in(depth), d_agg(depth), d_out(depth);
    Eigen::MatrixXd g = columns_to_blocks(params.components.transpose() * z, nv, mu);
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = params.encoder[l];
        d_in[l] = std::move(g);
        d_agg[l] = mean.apply_stacked(d_in[l]);
        d_out[l] = conv_pre(d_in[l], d_agg[l], layer.w_point, layer.w_neighbour, params.decoder_bias[l]);
        tanh_inplace(d_out[l]);
        g = d_out[l];
    }

    BatchResult res;
    res.latents = z.transpose();
    const Eigen::MatrixXd residual = d_out.front() - xs;
    res.loss.data = residual.squaredNorm() / static_cast<double>(b);
    res.loss.omega = omega_c(params.components, lambda, params.mu(), cfg.norm_epsilon);
    res.loss.vz = v_z(res.latents, cfg.theta, cfg.hinge_latent_penalty);
    res.loss.total = res.loss.data + lambda1 * res.loss.omega + lambda2 * res.loss.vz;
    if (!with_gradients) return res;

    res.grads = Gradients::zeros_like(params);
    Gradients& gr = res.grads;

    // Decoder backward.
    Eigen::MatrixXd d_up = (2.0 / static_cast<double>(b)) * residual;
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& layer = params.encoder[l];
        const Eigen::MatrixXd dq = tanh_derivative_product(d_up, d_out[l]);
        gr.encoder[l].w_point.noalias() += d_in[l].transpose() * dq;
        gr.encoder[l].w_neighbour.noalias() += d_agg[l].transpose() * dq;
        gr.decoder_bias[l] += dq.colwise().sum().transpose();
        Eigen::MatrixXd next = dq * layer.w_point.transpose();
        next.noalias() += mean.apply_transpose_stacked(dq * layer.w_neighbour.transpose());
        d_up = std::move(next);
    }
    const Eigen::MatrixXd d_fhat = blocks_to_columns(d_up, nv);  // mu V x B
    gr.components.noalias() += z * d_fhat.transpose();
    Eigen::MatrixXd dz = params.components * d_fhat;  // K x B
    dz += lambda2 * v_z_gradient(res.latents, cfg.theta, cfg.hinge_latent_penalty).transpose();

    // Encoder backward.
    gr.components.noalias() += dz * f.transpose();
    Eigen::MatrixXd dh = columns_to_blocks(params.components.transpose() * dz, nv, mu);
    for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = params.encoder[l];
        const Eigen::MatrixXd da = layer.activation == Activation::tanh ? tanh_derivative_product(dh, e_out[l]) : dh;
        gr.encoder[l].w_point.noalias() += da.transpose() * e_in[l];
        gr.encoder[l].w_neighbour.noalias() += da.transpose() * e_agg[l];
        gr.encoder[l].bias += da.colwise().sum().transpose();
        if (l == 0) break;
        Eigen::MatrixXd next = da * layer.w_point;
        next.noalias() += mean.apply_transpose_stacked(da * layer.w_neighbour);
        dh = std::move(next);
    }
    if (omega_gradient) omega_c_gradient(params.components, lambda, params.mu(), cfg.norm_epsilon, lambda1, gr.components);
    return res;
}

}  // namespace meshcomp
