#include "meshcomp/analysis.hpp"

#include "meshcomp/error.hpp"

#include <algorithm>
#include <cmath>

namespace meshcomp {

ComponentModel::ComponentModel(NetParams params, TriMesh reference, FeatureMatrix reference_features)
    : params_(std::move(params)),
      reference_(std::move(reference)),
      reference_features_(std::move(reference_features)),
      conn_(build_connectivity(reference_)),
      mean_(conn_),
      recon_(reference_.vertices, conn_) {
    if (params_.num_vertices() != reference_.num_vertices())
        throw DataError("model vertex count does not match the reference mesh");
    if (reference_features_.rows() != reference_.num_vertices() || reference_features_.cols() != kFeatureDim)
        throw DataError("reference features have the wrong shape");
    z_ref_ = meshcomp::encode(reference_features_, params_, mean_);
}

Eigen::VectorXd ComponentModel::encode(const FeatureMatrix& features) const {
    return meshcomp::encode(features, params_, mean_);
}

FeatureMatrix ComponentModel::decode(const Eigen::VectorXd& z) const { return meshcomp::decode(z, params_, mean_); }

Points ComponentModel::reconstruct(const FeatureMatrix& features) const {
    return recon_.reconstruct(decode_gradients(features, params_.scaling));
}

ComponentSet analyze_components(const ComponentModel& model, const Eigen::MatrixXd& latents) {
    const int k_count = model.latent_dim();
    if (latents.cols() != k_count || latents.rows() == 0) throw UsageError("latent matrix must be N x K with N >= 1");
    ComponentSet out;
    out.reference_latent = model.reference_latent();
    const auto centers = update_centers(model.params().components, model.params().mu());
    const FeatureMatrix& xr = model.reference_features();
    const auto nv = xr.rows();
    for (int k = 0; k < k_count; ++k) {
        ComponentInfo info;
        info.center = centers[static_cast<std::size_t>(k)];
        info.z_min = latents.col(k).minCoeff();
        info.z_max = latents.col(k).maxCoeff();
        info.magnitudes = Eigen::VectorXd::Zero(nv);
        info.z_rep = info.z_max;
        if (info.z_min == info.z_max) {
            info.degenerate = true;
            out.components.push_back(std::move(info));
            continue;
        }
        Eigen::VectorXd zlo = out.reference_latent, zhi = out.reference_latent;
        zlo(k) = info.z_min;
        zhi(k) = info.z_max;
        const FeatureMatrix dlo = model.decode(zlo) - xr;
        const FeatureMatrix dhi = model.decode(zhi) - xr;
        const bool use_max = dhi.norm() >= dlo.norm();
        info.z_rep = use_max ? info.z_max : info.z_min;
        const FeatureMatrix& d = use_max ? dhi : dlo;
        info.magnitudes = d.rowwise().norm();
        const double peak = info.magnitudes.maxCoeff();
        if (peak > 0.0)
            info.magnitudes /= peak;
        else
            info.degenerate = true;
        out.components.push_back(std::move(info));
    }
    return out;
}

Eigen::VectorXd synthesis_latent(const ComponentSet& components, std::span<const double> weights) {
    const auto k_count = components.components.size();
    if (weights.size() != k_count)
        throw UsageError("expected " + std::to_string(k_count) + " weights, got " + std::to_string(weights.size()));
    Eigen::VectorXd z = components.reference_latent;
    for (std::size_t k = 0; k < k_count; ++k) {
        if (!std::isfinite(weights[k])) throw UsageError("weight " + std::to_string(k) + " is not finite");
        const auto kk = static_cast<Eigen::Index>(k);
        z(kk) = components.reference_latent(kk) + (components.components[k].z_rep - components.reference_latent(kk)) * weights[k];
    }
    return z;
}

Points synthesize(const ComponentModel& model, const ComponentSet& components, std::span<const double> weights) {
    return model.decode_positions(synthesis_latent(components, weights));
}

double control_objective(const Points& positions, std::span<const ControlPoint> controls) {
    double j = 0.0;
    for (const auto& c : controls) j += (positions.row(c.vertex).transpose() - c.target).squaredNorm();
    return j;
}

namespace {

void check_controls(const ComponentModel& model, std::span<const ControlPoint> controls) {
    if (controls.empty()) throw UsageError("at least one control point is required");
    const auto nv = model.reference().num_vertices();
    for (const auto& c : controls) {
        if (c.vertex < 0 || c.vertex >= nv)
            throw UsageError("control vertex " + std::to_string(c.vertex) + " out of range");
        if (!c.target.allFinite()) throw UsageError("control target is not finite");
    }
}

}  // namespace

Eigen::VectorXd control_objective_gradient(const ComponentModel& model, const Eigen::VectorXd& z,
                                           std::span<const ControlPoint> controls, double* objective) {
    check_controls(model, controls);
    const NetParams& params = model.params();
    const ScalingParams& sc = params.scaling;
    const DecoderCache cache = decode_forward(z, params, model.mean());
    const FeatureMatrix& x = cache.xhat();
    const auto nv = x.rows();

    std::vector<Vec3> rvec(static_cast<std::size_t>(nv));
    Mat3Field rot(static_cast<std::size_t>(nv)), stretch(static_cast<std::size_t>(nv)), grads(static_cast<std::size_t>(nv));
    for (Eigen::Index i = 0; i < nv; ++i) {
        const auto u = static_cast<std::size_t>(i);
        rvec[u] = Vec3(sc.unscale_r(x(i, 0)), sc.unscale_r(x(i, 1)), sc.unscale_r(x(i, 2)));
        double s[6];
        for (int c = 0; c < 6; ++c) s[c] = sc.unscale_s(x(i, 3 + c));
        rot[u] = exp_rotation(rvec[u]);
        stretch[u] << s[0], s[1], s[2], s[1], s[3], s[4], s[2], s[4], s[5];
        grads[u] = rot[u] * stretch[u];
    }
    const Points p = model.reconstructor().reconstruct(grads);

    Points dp = Points::Zero(nv, 3);
    double j = 0.0;
    for (const auto& c : controls) {
        const Vec3 diff = p.row(c.vertex).transpose() - c.target;
        j += diff.squaredNorm();
        dp.row(c.vertex) += 2.0 * diff.transpose();
    }
    if (objective) *objective = j;

    const Mat3Field dt = model.reconstructor().gradient_adjoint(dp);
    Eigen::MatrixXd dx(nv, kFeatureDim);
    const double rs = sc.r_slope(), ss = sc.s_slope();
    for (Eigen::Index i = 0; i < nv; ++i) {
        const auto u = static_cast<std::size_t>(i);
        const Mat3 d_rot = dt[u] * stretch[u].transpose();
        const Mat3 d_str = rot[u].transpose() * dt[u];
        const auto dr = exp_rotation_derivative(rvec[u]);
        for (int k = 0; k < 3; ++k) dx(i, k) = rs * d_rot.cwiseProduct(dr[static_cast<std::size_t>(k)]).sum();
        dx(i, 3) = ss * d_str(0, 0);
        dx(i, 4) = ss * (d_str(0, 1) + d_str(1, 0));
        dx(i, 5) = ss * (d_str(0, 2) + d_str(2, 0));
        dx(i, 6) = ss * d_str(1, 1);
        dx(i, 7) = ss * (d_str(1, 2) + d_str(2, 1));
        dx(i, 8) = ss * d_str(2, 2);
    }
    return decode_backward(cache, dx, params, model.mean(), nullptr);
}

ControlFit fit_latent_to_control_points(const ComponentModel& model, std::span<const ControlPoint> controls,
                                        const ControlFitOptions& options) {
    check_controls(model, controls);
    if (options.iterations < 0 || !(options.step > 0.0)) throw UsageError("bad control fit options");
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    Eigen::VectorXd z = model.reference_latent();
    const auto k_count = z.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(k_count), v = Eigen::VectorXd::Zero(k_count);

    ControlFit best;
    double prev = 0.0;
    for (int it = 0;; ++it) {
        double j = 0.0;
        const Eigen::VectorXd g = control_objective_gradient(model, z, controls, &j);
        if (!std::isfinite(j)) throw NumericalError("control-point objective became non-finite");
        if (it == 0) {
            best.initial_objective = j;
            best.objective = j;
            best.z = z;
        } else if (j < best.objective) {
            best.objective = j;
            best.z = z;
        }
        best.iterations = it;
        if (it == options.iterations || j == 0.0) break;
        if (it > 0 && std::abs(prev - j) < options.relative_tolerance * std::abs(prev)) break;
        prev = j;

        const double t = static_cast<double>(it + 1);
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
        const Eigen::VectorXd mhat = m / (1.0 - std::pow(beta1, t));
        const Eigen::VectorXd vhat = v / (1.0 - std::pow(beta2, t));
        z -= options.step * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
    best.positions = model.decode_positions(best.z);
    return best;
}

Rgb heat_color(double magnitude) {
    const double m = std::clamp(std::isfinite(magnitude) ? magnitude : 0.0, 0.0, 1.0);
    Rgb c;
    c.r = static_cast<std::uint8_t>(std::lround(255.0 * m));
    c.g = 0;
    c.b = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - m)));
    return c;
}

void export_component_heatmap(const ComponentModel& model, const ComponentSet& components, int k,
                              const std::filesystem::path& path, const std::vector<std::string>& comments) {
    const int k_count = static_cast<int>(components.components.size());
    if (k < 0 || k >= k_count) throw UsageError("component index out of range");
    std::vector<double> w(static_cast<std::size_t>(k_count), 0.0);
    w[static_cast<std::size_t>(k)] = 1.0;
    TriMesh mesh{synthesize(model, components, w), model.reference().faces};
    const auto& mag = components.components[static_cast<std::size_t>(k)].magnitudes;
    std::vector<Rgb> colors(static_cast<std::size_t>(mesh.num_vertices()));
    for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = heat_color(mag(static_cast<Eigen::Index>(i)));
    write_ply(path, mesh, colors, comments);
}

}  // namespace meshcomp
