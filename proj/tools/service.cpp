#include "service.hpp"

#include "meshcomp/error.hpp"
#include "meshcomp/hash.hpp"

#include <httplib.h>

#include <cmath>

namespace meshcomp::cli {

namespace {

using json = nlohmann::json;

std::string error_body(const std::string& message) { return json{{"error", message}}.dump(); }

}  // namespace

json mesh_payload(const Points& vertices, const Faces& faces) {
    std::vector<double> v(static_cast<std::size_t>(vertices.size()));
    for (Eigen::Index i = 0; i < vertices.rows(); ++i)
        for (int c = 0; c < 3; ++c) v[static_cast<std::size_t>(3 * i + c)] = vertices(i, c);
    std::vector<int> f(static_cast<std::size_t>(faces.size()));
    for (Eigen::Index i = 0; i < faces.rows(); ++i)
        for (int c = 0; c < 3; ++c) f[static_cast<std::size_t>(3 * i + c)] = faces(i, c);
    return {{"vertices", v}, {"faces", f}};
}

ModelService::ModelService(const Checkpoint& ck)
    : model_(ck.params, ck.reference, ck.reference_features),
      set_(analyze_components(model_, ck.train_latents)),
      config_(config_to_json(ck.params.config)),
      config_hash_(ck.config_hash) {
    meta_body_ = json{{"V", ck.reference.num_vertices()},
                      {"F", ck.reference.num_faces()},
                      {"K", model_.latent_dim()},
                      {"config", config_},
                      {"config_hash", config_hash_},
                      {"mesh_hash", hex64(ck.mesh_hash())}}
                     .dump();
    json comps = json::array();
    for (std::size_t k = 0; k < set_.components.size(); ++k) {
        const auto& c = set_.components[k];
        comps.push_back({{"k", k},
                         {"center", c.center},
                         {"z_min", c.z_min},
                         {"z_max", c.z_max},
                         {"z_rep", c.z_rep},
                         {"degenerate", c.degenerate},
                         {"magnitudes", std::vector<double>(c.magnitudes.data(), c.magnitudes.data() + c.magnitudes.size())}});
    }
    components_body_ = comps.dump();
    reference_body_ = mesh_payload(model_.reference().vertices, model_.reference().faces).dump();
}

Response ModelService::meta() const { return {200, meta_body_}; }
Response ModelService::components() const { return {200, components_body_}; }
Response ModelService::reference() const { return {200, reference_body_}; }

Response ModelService::synthesize(const std::string& body) const {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& e) {
        return {400, error_body(std::string("malformed JSON: ") + e.what())};
    }
    if (!doc.is_object() || !doc.contains("weights") || !doc["weights"].is_array())
        return {400, error_body("expected an object with a 'weights' array")};
    std::vector<double> weights;
    for (const auto& w : doc["weights"]) {
        if (!w.is_number()) return {400, error_body("weights must be numbers")};
        const double v = w.get<double>();
        if (!std::isfinite(v)) return {400, error_body("weights must be finite")};
        weights.push_back(v);
    }
    if (weights.size() != set_.components.size())
        return {400, error_body("expected " + std::to_string(set_.components.size()) + " weights, got " +
                                std::to_string(weights.size()))};
    try {
        const Points p = meshcomp::synthesize(model_, set_, weights);
        if (!p.allFinite()) return {500, error_body("synthesis produced non-finite positions")};
        return {200, mesh_payload(p, model_.reference().faces).dump()};
    } catch (const UsageError& e) {
        return {400, error_body(e.what())};
    } catch (const std::exception& e) {
        return {500, error_body(e.what())};
    }
}

void run_server(const ModelService& service, const std::string& host, int port, const std::filesystem::path& ui_dir,
                const ReadyFn& on_ready) {
    httplib::Server svr;
    // httplib's default adds SO_REUSEPORT, which lets a second server share a busy port.
    svr.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    auto send = [](httplib::Response& res, const Response& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    svr.Get("/api/meta", [&](const httplib::Request&, httplib::Response& res) { send(res, service.meta()); });
    svr.Get("/api/components",
            [&](const httplib::Request&, httplib::Response& res) { send(res, service.components()); });
    svr.Get("/api/reference", [&](const httplib::Request&, httplib::Response& res) { send(res, service.reference()); });
    svr.Post("/api/synthesize",
             [&](const httplib::Request& req, httplib::Response& res) { send(res, service.synthesize(req.body)); });
    if (!ui_dir.empty() && !svr.set_mount_point("/", ui_dir.string()))
        throw UsageError("UI directory " + ui_dir.string() + " does not exist");

    int bound = port;
    if (port == 0) {
        bound = svr.bind_to_any_port(host);
        if (bound < 0) throw UsageError("could not bind to " + host);
    } else if (!svr.bind_to_port(host, port)) {
        throw UsageError("port " + std::to_string(port) + " is busy or unavailable");
    }
    if (on_ready)
        on_ready(bound, [&svr] {
            svr.wait_until_ready();
            svr.stop();
        });
    svr.listen_after_bind();
}

}  // namespace meshcomp::cli
