#include "meshcomp/sampling.hpp"

#include "meshcomp/error.hpp"

#include <limits>
#include <random>

namespace meshcomp {

std::vector<int> voronoi_sample_control_points(const GeodesicRows& geo, std::size_t count, std::uint64_t seed) {
    const std::size_t n = geo.size();
    if (count == 0 || count > n)
        throw UsageError("cannot sample " + std::to_string(count) + " control points from " + std::to_string(n) +
                         " vertices");
    std::mt19937_64 rng(seed);
    // Index drawn from raw engine output so the choice does not depend on the
    // standard library's distribution implementation.
    const std::size_t first = static_cast<std::size_t>(rng() % n);

    std::vector<int> chosen{static_cast<int>(first)};
    std::vector<float> min_dist(n, std::numeric_limits<float>::infinity());
    std::vector<bool> taken(n, false);
    taken[first] = true;
    std::size_t last = first;
    while (chosen.size() < count) {
        const auto row = geo.row(last);
        std::size_t best = n;
        float best_d = -1.0f;
        for (std::size_t i = 0; i < n; ++i) {
            min_dist[i] = std::min(min_dist[i], row[i]);
            if (!taken[i] && min_dist[i] > best_d) {
                best_d = min_dist[i];
                best = i;
            }
        }
        taken[best] = true;
        chosen.push_back(static_cast<int>(best));
        last = best;
    }
    return chosen;
}

}  // namespace meshcomp
