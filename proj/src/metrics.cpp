#include "meshcomp/metrics.hpp"

#include "meshcomp/error.hpp"

#include <algorithm>
#include <cmath>

namespace meshcomp {

namespace {

void check_sets(std::span<const Points> pred, std::span<const Points> truth) {
    if (pred.size() != truth.size()) throw UsageError("prediction and truth have different shape counts");
    if (pred.empty()) throw UsageError("no shapes to compare");
    for (std::size_t m = 0; m < pred.size(); ++m)
        if (pred[m].rows() != truth[m].rows() || pred[m].rows() != truth.front().rows())
            throw DataError("topology mismatch between prediction and truth");
}

}  // namespace

double e_rms(std::span<const Points> pred, std::span<const Points> truth, const Points& truth_reference) {
    check_sets(pred, truth);
    const double diag = bounding_box_diagonal(truth_reference);
    if (!(diag > 0.0)) throw DataError("reference bounding box is degenerate");
    double sum = 0.0;
    for (std::size_t m = 0; m < pred.size(); ++m) sum += (pred[m] - truth[m]).squaredNorm();
    const double count = 3.0 * static_cast<double>(pred.size()) * static_cast<double>(truth.front().rows());
    return 1000.0 * std::sqrt(sum / count) / diag;
}

std::vector<std::pair<int, int>> mesh_edges(const Faces& faces) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(faces.rows()) * 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f)
        for (int c = 0; c < 3; ++c) {
            const int a = faces(f, c), b = faces(f, (c + 1) % 3);
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

StedTerms sted(std::span<const Points> pred, std::span<const Points> truth, const Faces& faces, int temporal_window,
               double temporal_weight) {
    check_sets(pred, truth);
    if (temporal_window < 1) throw UsageError("temporal window must be positive");
    const auto edges = mesh_edges(faces);
    if (edges.empty()) throw DataError("mesh has no edges");
    StedTerms out;

    double spatial = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t)
        for (const auto& [a, b] : edges) {
            const double e = (truth[t].row(a) - truth[t].row(b)).norm();
            if (!(e > 0.0)) throw DataError("zero-length edge in the reference sequence");
            const double eh = (pred[t].row(a) - pred[t].row(b)).norm();
            const double rel = (eh - e) / e;
            spatial += rel * rel;
        }
    out.spatial = std::sqrt(spatial / static_cast<double>(pred.size() * edges.size()));

    const auto w = static_cast<std::size_t>(temporal_window);
    if (pred.size() <= w) {
        out.warnings.push_back("sequence has fewer than " + std::to_string(w + 1) +
                               " frames; STED uses the spatial term only");
    } else {
        const auto nv = truth.front().rows();
        double temporal = 0.0;
        for (std::size_t t = 0; t + w < pred.size(); ++t)
            for (Eigen::Index i = 0; i < nv; ++i) {
                const double vh = (pred[t + w].row(i) - pred[t].row(i)).norm();
                const double v = (truth[t + w].row(i) - truth[t].row(i)).norm();
                temporal += (vh - v) * (vh - v);
            }
        out.temporal = std::sqrt(temporal / static_cast<double>((pred.size() - w) * static_cast<std::size_t>(nv)));
    }
    out.total = std::sqrt(out.spatial * out.spatial + temporal_weight * temporal_weight * out.temporal * out.temporal);
    return out;
}

ErrorReport error_report(std::span<const Points> pred, std::span<const Points> truth, const Points& truth_reference,
                         const Faces& faces, std::vector<int> shape_indices, int temporal_window) {
    check_sets(pred, truth);
    if (shape_indices.size() != pred.size()) throw UsageError("one shape index per evaluated shape is required");
    ErrorReport r;
    r.e_rms = e_rms(pred, truth, truth_reference);
    const StedTerms s = sted(pred, truth, faces, temporal_window);
    r.sted = s.total;
    r.sted_spatial = s.spatial;
    r.sted_temporal = s.temporal;
    r.warnings = s.warnings;
    r.shape_indices = std::move(shape_indices);
    for (std::size_t m = 0; m < pred.size(); ++m)
        r.per_shape_e_rms.push_back(e_rms(pred.subspan(m, 1), truth.subspan(m, 1), truth_reference));
    return r;
}

nlohmann::json to_json(const ErrorReport& report) {
    nlohmann::json per_shape = nlohmann::json::array();
    for (std::size_t m = 0; m < report.per_shape_e_rms.size(); ++m)
        per_shape.push_back({{"index", report.shape_indices[m]}, {"e_rms", report.per_shape_e_rms[m]}});
    return {{"e_rms", report.e_rms},
            {"sted", report.sted},
            {"sted_spatial", report.sted_spatial},
            {"sted_temporal", report.sted_temporal},
            {"per_shape", per_shape},
            {"warnings", report.warnings}};
}

}  // namespace meshcomp
