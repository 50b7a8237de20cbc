#pragma once

#include "meshcomp/mesh.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace meshcomp {

/// 1000 * sqrt(sum |p_hat - p|^2 / (3 N V)) / diag, where diag is the
/// bounding-box diagonal of `truth_reference`. No alignment is applied.
double e_rms(std::span<const Points> pred, std::span<const Points> truth, const Points& truth_reference);

/// Undirected edges of a triangle mesh, each once, sorted.
std::vector<std::pair<int, int>> mesh_edges(const Faces& faces);

struct StedTerms {
    double spatial = 0.0;
    double temporal = 0.0;
    double total = 0.0;
    std::vector<std::string> warnings;
};

/// Spatio-temporal edge difference.
///  spatial:  RMS over frames and edges of (|e_hat| - |e|) / |e|, truth lengths in the denominator.
///  temporal: RMS over frame pairs (t, t + window) and vertices of
///            |p_hat(t+w) - p_hat(t)| - |p(t+w) - p(t)|.
///  total:    sqrt(spatial^2 + temporal_weight^2 * temporal^2).
/// With fewer than window + 1 frames the temporal term is 0 and a warning is recorded.
StedTerms sted(std::span<const Points> pred, std::span<const Points> truth, const Faces& faces, int temporal_window = 1,
               double temporal_weight = 1.0);

struct ErrorReport {
    double e_rms = 0.0;
    double sted = 0.0;
    double sted_spatial = 0.0;
    double sted_temporal = 0.0;
    std::vector<int> shape_indices;     // manifest indices of the evaluated shapes
    std::vector<double> per_shape_e_rms;
    std::vector<std::string> warnings;
};

ErrorReport error_report(std::span<const Points> pred, std::span<const Points> truth, const Points& truth_reference,
                         const Faces& faces, std::vector<int> shape_indices, int temporal_window = 1);

nlohmann::json to_json(const ErrorReport& report);

}  // namespace meshcomp
