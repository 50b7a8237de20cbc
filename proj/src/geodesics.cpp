#include "meshcomp/geodesics.hpp"

#include "meshcomp/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>

namespace meshcomp {

static_assert(std::endian::native == std::endian::little, "cache files assume a little-endian host");

std::string to_string(GeodesicMethod method) {
    return method == GeodesicMethod::heat ? "heat" : "graph";
}

GeodesicMethod geodesic_method_from_string(const std::string& name) {
    if (name == "heat") return GeodesicMethod::heat;
    if (name == "graph") return GeodesicMethod::graph;
    throw UsageError("unknown geodesic method '" + name + "' (expected heat or graph)");
}

GeodesicMatrix::GeodesicMatrix(std::size_t n, std::vector<double> raw, GeodesicMethod method, double t_scale)
    : n_(n), method_(method), t_scale_(t_scale) {
    if (raw.size() != n * n) throw UsageError("geodesic matrix size mismatch");
    double max_raw = 0.0, max_asym = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        raw[i * n + i] = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double a = raw[i * n + j], b = raw[j * n + i];
            max_asym = std::max(max_asym, std::abs(a - b));
            const double avg = 0.5 * (a + b);
            raw[i * n + j] = raw[j * n + i] = avg;
            max_raw = std::max(max_raw, avg);
        }
    }
    if (!(max_raw > 0.0) || !std::isfinite(max_raw)) throw NumericalError("geodesic distances are degenerate");
    scale_ = max_raw;
    asymmetry_ = max_asym / max_raw;
    d_.resize(n * n);
    for (std::size_t k = 0; k < raw.size(); ++k)
        d_[k] = static_cast<float>(std::clamp(raw[k] / max_raw, 0.0, 1.0));
}

namespace {

constexpr char kCacheMagic[4] = {'M', 'D', 'G', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("geodesic cache truncated at " + what);
    return v;
}

}  // namespace

void GeodesicMatrix::save(const std::filesystem::path& path, std::uint64_t mesh_hash) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kCacheMagic, 4);
    put(out, kCacheVersion);
    put(out, static_cast<std::uint64_t>(n_));
    put(out, static_cast<std::uint32_t>(method_));
    put(out, t_scale_);
    put(out, mesh_hash);
    put(out, scale_);
    out.write(reinterpret_cast<const char*>(d_.data()), static_cast<std::streamsize>(d_.size() * sizeof(float)));
    if (!out) throw DataError("failed writing " + path.string());
}

GeodesicMatrix GeodesicMatrix::load(const std::filesystem::path& path, std::uint64_t expected_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kCacheMagic, 4) != 0)
        throw DataError(path.string() + ": not a geodesic cache");
    if (get<std::uint32_t>(in, "version") != kCacheVersion) throw DataError(path.string() + ": unsupported version");
    GeodesicMatrix g;
    g.n_ = static_cast<std::size_t>(get<std::uint64_t>(in, "size"));
    const auto method = get<std::uint32_t>(in, "method");
    if (method > 1) throw DataError(path.string() + ": unknown method tag");
    g.method_ = static_cast<GeodesicMethod>(method);
    g.t_scale_ = get<double>(in, "t_scale");
    if (get<std::uint64_t>(in, "hash") != expected_hash)
        throw DataError(path.string() + ": cache was built for a different mesh");
    g.scale_ = get<double>(in, "scale");
    g.d_.resize(g.n_ * g.n_);
    if (!in.read(reinterpret_cast<char*>(g.d_.data()), static_cast<std::streamsize>(g.d_.size() * sizeof(float))))
        throw DataError(path.string() + ": geodesic cache truncated");
    return g;
}

std::vector<double> graph_distances_from(const TriMesh& mesh, int source) {
    const auto n = static_cast<std::size_t>(mesh.num_vertices());
    std::vector<std::vector<std::pair<int, double>>> adj(n);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int a = mesh.faces(f, c), b = mesh.faces(f, (c + 1) % 3);
            const double len = (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
            adj[static_cast<std::size_t>(a)].emplace_back(b, len);
            adj[static_cast<std::size_t>(b)].emplace_back(a, len);
        }
    }
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[static_cast<std::size_t>(source)] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[static_cast<std::size_t>(v)]) continue;
        for (const auto& [w, len] : adj[static_cast<std::size_t>(v)]) {
            const double nd = d + len;
            if (nd < dist[static_cast<std::size_t>(w)]) {
                dist[static_cast<std::size_t>(w)] = nd;
                heap.emplace(nd, w);
            }
        }
    }
    return dist;
}

GeodesicMatrix graph_geodesics(const TriMesh& mesh) {
    validate_mesh(mesh);
    const auto n = static_cast<std::size_t>(mesh.num_vertices());
    std::vector<double> raw(n * n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto row = graph_distances_from(mesh, static_cast<int>(s));
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(row[j])) throw DataError("mesh is disconnected; geodesics undefined");
            raw[s * n + j] = row[j];
        }
    }
    return GeodesicMatrix(n, std::move(raw), GeodesicMethod::graph, 0.0);
}

HeatGeodesicSolver::HeatGeodesicSolver(const TriMesh& mesh, double t_scale) : mesh_(mesh) {
    validate_mesh(mesh);
    if (!(t_scale > 0.0)) throw UsageError("heat method time scale must be positive");
    const auto n = mesh.num_vertices();
    const auto nf = mesh.num_faces();
    std::vector<Eigen::Triplet<double>> lap, mass;
    face_cot_.resize(static_cast<std::size_t>(nf));
    face_normal_.resize(static_cast<std::size_t>(nf));
    face_area_.resize(static_cast<std::size_t>(nf));
    Eigen::VectorXd lumped = Eigen::VectorXd::Zero(n);
    double edge_sum = 0.0;
    for (Eigen::Index f = 0; f < nf; ++f) {
        const auto fi = static_cast<std::size_t>(f);
        const Eigen::Vector3d p[3] = {mesh.vertices.row(mesh.faces(f, 0)), mesh.vertices.row(mesh.faces(f, 1)),
                                      mesh.vertices.row(mesh.faces(f, 2))};
        const Eigen::Vector3d cr = (p[1] - p[0]).cross(p[2] - p[0]);
        const double area = 0.5 * cr.norm();
        face_area_[fi] = area;
        face_normal_[fi] = area > 0.0 ? Eigen::Vector3d(cr / cr.norm()) : Eigen::Vector3d::Zero();
        for (int c = 0; c < 3; ++c) {
            const Eigen::Vector3d u = p[(c + 1) % 3] - p[c], v = p[(c + 2) % 3] - p[c];
            face_cot_[fi][static_cast<std::size_t>(c)] = area > 0.0 ? u.dot(v) / u.cross(v).norm() : 0.0;
            edge_sum += u.norm();
            lumped[mesh.faces(f, c)] += area / 3.0;
        }
        for (int c = 0; c < 3; ++c) {
            const int i = mesh.faces(f, (c + 1) % 3), j = mesh.faces(f, (c + 2) % 3);
            const double w = 0.5 * face_cot_[fi][static_cast<std::size_t>(c)];
            lap.emplace_back(i, j, -w);
            lap.emplace_back(j, i, -w);
            lap.emplace_back(i, i, w);
            lap.emplace_back(j, j, w);
        }
    }
    const double h = edge_sum / static_cast<double>(3 * nf);
    t_ = t_scale * h * h;
    laplacian_.resize(n, n);
    laplacian_.setFromTriplets(lap.begin(), lap.end());

    for (Eigen::Index i = 0; i < n; ++i) mass.emplace_back(i, i, lumped[i]);
    Eigen::SparseMatrix<double> m(n, n);
    m.setFromTriplets(mass.begin(), mass.end());
    heat_solver_.compute(m + t_ * laplacian_);
    if (heat_solver_.info() != Eigen::Success) throw NumericalError("heat system factorization failed");

    // Vertex 0 pinned to remove the constant null space; rows shifted later.
    std::vector<Eigen::Triplet<double>> reduced;
    for (int k = 0; k < laplacian_.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(laplacian_, k); it; ++it)
            if (it.row() > 0 && it.col() > 0) reduced.emplace_back(it.row() - 1, it.col() - 1, it.value());
    Eigen::SparseMatrix<double> lr(n - 1, n - 1);
    lr.setFromTriplets(reduced.begin(), reduced.end());
    poisson_solver_.compute(lr);
    if (poisson_solver_.info() != Eigen::Success) throw NumericalError("Poisson system factorization failed");
}

std::vector<double> HeatGeodesicSolver::distances_from(int source) const {
    const auto n = mesh_.num_vertices();
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
    delta[source] = 1.0;
    const Eigen::VectorXd u = heat_solver_.solve(delta);

    Eigen::VectorXd div = Eigen::VectorXd::Zero(n);
    for (Eigen::Index f = 0; f < mesh_.num_faces(); ++f) {
        const auto fi = static_cast<std::size_t>(f);
        if (face_area_[fi] <= 0.0) continue;
        const int idx[3] = {mesh_.faces(f, 0), mesh_.faces(f, 1), mesh_.faces(f, 2)};
        const Eigen::Vector3d p[3] = {mesh_.vertices.row(idx[0]), mesh_.vertices.row(idx[1]),
                                      mesh_.vertices.row(idx[2])};
        Eigen::Vector3d grad = Eigen::Vector3d::Zero();
        for (int c = 0; c < 3; ++c) {
            const Eigen::Vector3d opposite = p[(c + 2) % 3] - p[(c + 1) % 3];
            grad += u[idx[c]] * face_normal_[fi].cross(opposite);
        }
        grad /= 2.0 * face_area_[fi];
        const double norm = grad.norm();
        if (!(norm > 0.0)) continue;
        const Eigen::Vector3d x = -grad / norm;
        for (int c = 0; c < 3; ++c) {
            const int a = (c + 1) % 3, b = (c + 2) % 3;
            const Eigen::Vector3d e1 = p[a] - p[c], e2 = p[b] - p[c];
            // cot of the angle at b is opposite e1; at a is opposite e2.
            div[idx[c]] += 0.5 * (face_cot_[fi][static_cast<std::size_t>(b)] * e1.dot(x) +
                                  face_cot_[fi][static_cast<std::size_t>(a)] * e2.dot(x));
        }
    }
    // Positive-semidefinite Laplacian: L phi = -div.
    const Eigen::VectorXd phi_rest = poisson_solver_.solve(-div.tail(n - 1));
    std::vector<double> out(static_cast<std::size_t>(n));
    out[0] = 0.0;
    for (Eigen::Index i = 1; i < n; ++i) out[static_cast<std::size_t>(i)] = phi_rest[i - 1];
    const double shift = out[static_cast<std::size_t>(source)];
    for (auto& d : out) d = std::max(0.0, d - shift);
    return out;
}

GeodesicMatrix heat_geodesics(const TriMesh& mesh, double t_scale) {
    HeatGeodesicSolver solver(mesh, t_scale);
    const auto n = static_cast<std::size_t>(mesh.num_vertices());
    std::vector<double> raw(n * n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto row = solver.distances_from(static_cast<int>(s));
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(row[j])) throw NumericalError("heat method produced non-finite distances");
            raw[s * n + j] = row[j];
        }
    }
    return GeodesicMatrix(n, std::move(raw), GeodesicMethod::heat, t_scale);
}

GeodesicMatrix compute_geodesics(const TriMesh& mesh, GeodesicMethod method, double t_scale,
                                 std::vector<std::string>* warnings) {
    if (build_connectivity(mesh).num_components() != 1)
        throw DataError("mesh is disconnected; geodesics undefined");
    GeodesicMatrix g;
    if (method == GeodesicMethod::heat) {
        try {
            g = heat_geodesics(mesh, t_scale);
        } catch (const NumericalError& e) {
            if (warnings) warnings->push_back(std::string("heat method failed (") + e.what() + "); using graph distances");
            g = graph_geodesics(mesh);
        }
    } else {
        g = graph_geodesics(mesh);
    }
    if (warnings && g.asymmetry() > 0.02)
        warnings->push_back("geodesic matrix asymmetry " + std::to_string(g.asymmetry()) + " exceeds 2%");
    return g;
}

LazyGeodesics::LazyGeodesics(const TriMesh& mesh, GeodesicMethod method, double t_scale, int sweeps)
    : mesh_(mesh), method_(method), n_(static_cast<std::size_t>(mesh.num_vertices())) {
    validate_mesh(mesh);
    if (method == GeodesicMethod::heat) heat_ = std::make_unique<HeatGeodesicSolver>(mesh, t_scale);
    double best = 0.0;
    int source = 0;
    for (int s = 0; s < std::max(1, sweeps); ++s) {
        const auto r = raw_row(source);
        const auto it = std::max_element(r.begin(), r.end());
        if (!std::isfinite(*it)) throw DataError("mesh is disconnected; geodesics undefined");
        best = std::max(best, *it);
        source = static_cast<int>(it - r.begin());
    }
    if (!(best > 0.0)) throw NumericalError("geodesic distances are degenerate");
    scale_ = best;
}

std::vector<double> LazyGeodesics::raw_row(int source) const {
    return heat_ ? heat_->distances_from(source) : graph_distances_from(mesh_, source);
}

std::span<const float> LazyGeodesics::row(std::size_t source) const {
    {
        std::lock_guard lock(mutex_);
        if (auto it = rows_.find(source); it != rows_.end()) return it->second;
    }
    const auto raw = raw_row(static_cast<int>(source));
    std::vector<float> normalized(n_);
    for (std::size_t j = 0; j < n_; ++j)
        normalized[j] = static_cast<float>(std::clamp(raw[j] / scale_, 0.0, 1.0));
    std::lock_guard lock(mutex_);
    // unordered_map nodes are stable, so spans stay valid after later inserts.
    auto [it, inserted] = rows_.emplace(source, std::move(normalized));
    return it->second;
}

}  // namespace meshcomp
