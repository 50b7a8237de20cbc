#pragma once

#include "meshcomp/analysis.hpp"
#include "meshcomp/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <string>

namespace meshcomp::cli {

struct Response {
    int status = 200;
    std::string body;  // JSON
};

/// The HTTP API as pure functions of one loaded checkpoint. Immutable after
/// construction; every handler is safe to call concurrently.
class ModelService {
public:
    explicit ModelService(const Checkpoint& checkpoint);

    Response meta() const;
    Response components() const;
    Response reference() const;
    /// Body {"weights": [K finite numbers]}; 400 with {"error": ...} otherwise.
    Response synthesize(const std::string& body) const;

    const ComponentModel& model() const { return model_; }
    const ComponentSet& component_set() const { return set_; }

private:
    ComponentModel model_;
    ComponentSet set_;
    nlohmann::json config_;
    std::string config_hash_;
    std::string meta_body_;
    std::string components_body_;
    std::string reference_body_;
};

/// {"vertices": [3V], "faces": [3F]}.
nlohmann::json mesh_payload(const Points& vertices, const Faces& faces);

using ReadyFn = std::function<void(int port, std::function<void()> stop)>;

/// Serves the API (and `ui_dir` as static files when non-empty) until stopped.
/// Port 0 picks a free port. `on_ready` receives the bound port and a stop
/// callback. Throws UsageError if the port is busy.
void run_server(const ModelService& service, const std::string& host, int port, const std::filesystem::path& ui_dir,
                const ReadyFn& on_ready = {});

}  // namespace meshcomp::cli
