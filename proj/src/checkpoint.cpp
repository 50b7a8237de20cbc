#include "meshcomp/checkpoint.hpp"

#include "meshcomp/error.hpp"
#include "meshcomp/hash.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace meshcomp {

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'D', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

using json = nlohmann::json;

struct ArrayWriter {
    json manifest = json::array();
    std::vector<double> payload;

    template <typename Derived>
    void add(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
        manifest.push_back({{"name", name},
                            {"rows", m.rows()},
                            {"cols", m.cols()},
                            {"offset", payload.size() * sizeof(double)}});
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) payload.push_back(static_cast<double>(m(r, c)));
    }
};

struct ArrayReader {
    std::map<std::string, json> manifest;
    const std::vector<double>* payload = nullptr;

    Eigen::MatrixXd get(const std::string& name) const {
        auto it = manifest.find(name);
        if (it == manifest.end()) throw DataError("checkpoint is missing array '" + name + "'");
        const auto rows = it->second.at("rows").get<Eigen::Index>();
        const auto cols = it->second.at("cols").get<Eigen::Index>();
        const auto offset = it->second.at("offset").get<std::size_t>();
        if (rows < 0 || cols < 0 || offset % sizeof(double) != 0) throw DataError("corrupt array entry '" + name + "'");
        const std::size_t start = offset / sizeof(double);
        const std::size_t count = static_cast<std::size_t>(rows * cols);
        if (start + count > payload->size()) throw DataError("checkpoint truncated in array '" + name + "'");
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = (*payload)[start + static_cast<std::size_t>(r * cols + c)];
        return m;
    }
    Eigen::VectorXd vec(const std::string& name) const {
        const Eigen::MatrixXd m = get(name);
        return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    }
};

void add_gradients(ArrayWriter& w, const std::string& prefix, const Gradients& g) {
    for (std::size_t l = 0; l < g.encoder.size(); ++l) {
        const std::string p = prefix + "encoder." + std::to_string(l) + ".";
        w.add(p + "w_point", g.encoder[l].w_point);
        w.add(p + "w_neighbour", g.encoder[l].w_neighbour);
        w.add(p + "bias", g.encoder[l].bias);
    }
    for (std::size_t l = 0; l < g.decoder_bias.size(); ++l)
        w.add(prefix + "decoder." + std::to_string(l) + ".bias", g.decoder_bias[l]);
    w.add(prefix + "components", g.components);
}

void read_gradients(const ArrayReader& r, const std::string& prefix, Gradients& g) {
    for (std::size_t l = 0; l < g.encoder.size(); ++l) {
        const std::string p = prefix + "encoder." + std::to_string(l) + ".";
        g.encoder[l].w_point = r.get(p + "w_point");
        g.encoder[l].w_neighbour = r.get(p + "w_neighbour");
        g.encoder[l].bias = r.vec(p + "bias");
    }
    for (std::size_t l = 0; l < g.decoder_bias.size(); ++l)
        g.decoder_bias[l] = r.vec(prefix + "decoder." + std::to_string(l) + ".bias");
    g.components = r.get(prefix + "components");
}

}  // namespace

json config_to_json(const TrainConfig& c) {
    return {{"components", c.components},
            {"layer_dims", c.layer_dims},
            {"lambda1", c.lambda1},
            {"lambda2", c.lambda2},
            {"d_min", c.d_min},
            {"d_max", c.d_max},
            {"theta", c.theta},
            {"hinge_latent_penalty", c.hinge_latent_penalty},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"center_update_period", c.center_update_period},
            {"norm_epsilon", c.norm_epsilon},
            {"convergence_window", c.convergence_window},
            {"convergence_tolerance", c.convergence_tolerance},
            {"divergence_threshold", c.divergence_threshold},
            {"regularizer_warmup", c.regularizer_warmup},
            {"proximal_sparsity", c.proximal_sparsity},
            {"restore_best", c.restore_best}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    try {
        c.components = j.at("components").get<int>();
        c.layer_dims = j.at("layer_dims").get<std::vector<int>>();
        c.lambda1 = j.at("lambda1").get<double>();
        c.lambda2 = j.at("lambda2").get<double>();
        c.d_min = j.at("d_min").get<double>();
        c.d_max = j.at("d_max").get<double>();
        c.theta = j.at("theta").get<double>();
        c.hinge_latent_penalty = j.at("hinge_latent_penalty").get<bool>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.beta1 = j.at("beta1").get<double>();
        c.beta2 = j.at("beta2").get<double>();
        c.adam_epsilon = j.at("adam_epsilon").get<double>();
        c.epochs = j.at("epochs").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.center_update_period = j.at("center_update_period").get<int>();
        c.norm_epsilon = j.at("norm_epsilon").get<double>();
        c.convergence_window = j.at("convergence_window").get<int>();
        c.convergence_tolerance = j.at("convergence_tolerance").get<double>();
        c.divergence_threshold = j.at("divergence_threshold").get<double>();
        c.regularizer_warmup = j.at("regularizer_warmup").get<int>();
        c.proximal_sparsity = j.at("proximal_sparsity").get<bool>();
        c.restore_best = j.at("restore_best").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad training config: ") + e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const NetParams& p = ck.params;
    ArrayWriter w;
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        const std::string pre = "encoder." + std::to_string(l) + ".";
        w.add(pre + "w_point", p.encoder[l].w_point);
        w.add(pre + "w_neighbour", p.encoder[l].w_neighbour);
        w.add(pre + "bias", p.encoder[l].bias);
    }
    for (std::size_t l = 0; l < p.decoder_bias.size(); ++l)
        w.add("decoder." + std::to_string(l) + ".bias", p.decoder_bias[l]);
    w.add("components", p.components);
    add_gradients(w, "adam_m.", ck.state.adam_m);
    add_gradients(w, "adam_v.", ck.state.adam_v);
    w.add("lambda", ck.state.lambda);
    Eigen::MatrixXd history(static_cast<Eigen::Index>(ck.state.history.size()), 4);
    for (std::size_t e = 0; e < ck.state.history.size(); ++e) {
        const auto& h = ck.state.history[e];
        history.row(static_cast<Eigen::Index>(e)) << h.data, h.omega, h.vz, h.total;
    }
    w.add("history", history);
    w.add("reference.vertices", ck.reference.vertices);
    w.add("reference.faces", ck.reference.faces.cast<double>());
    w.add("reference.features", ck.reference_features);
    w.add("train_latents", ck.train_latents);

    json activations = json::array();
    for (const auto& layer : p.encoder) activations.push_back(layer.activation == Activation::tanh ? "tanh" : "linear");
    json header = {{"format", "MDAE"},
                   {"version", kVersion},
                   {"config", config_to_json(p.config)},
                   {"dims",
                    {{"V", ck.reference.num_vertices()},
                     {"F", ck.reference.num_faces()},
                     {"K", p.latent_dim()},
                     {"mu", p.mu()},
                     {"activations", activations}}},
                   {"scaling", {{"r_min", p.scaling.r_min}, {"r_max", p.scaling.r_max}, {"s_min", p.scaling.s_min},
                                {"s_max", p.scaling.s_max}}},
                   {"centers", ck.state.centers},
                   {"step", ck.state.step},
                   {"epoch", ck.state.epoch},
                   {"converged", ck.state.converged},
                   {"best_epoch", ck.state.best_epoch},
                   {"mesh_hash", hex64(ck.mesh_hash())},
                   {"reference_index", ck.reference_index},
                   {"train_indices", ck.train_indices},
                   {"test_indices", ck.test_indices},
                   {"split", ck.split},
                   {"aligned", ck.aligned},
                   {"config_hash", ck.config_hash},
                   {"arrays", w.manifest}};
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(w.payload.data()),
              static_cast<std::streamsize>(w.payload.size() * sizeof(double)));
    if (!out) throw DataError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    const std::string where = path.string() + ": ";
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw DataError(where + "not a model checkpoint");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 4, sizeof version);
    if (version != kVersion) throw DataError(where + "unsupported checkpoint version " + std::to_string(version));
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof len);
    if (len > bytes.size() - 16) throw DataError(where + "checkpoint truncated in header");
    json header;
    try {
        header = json::parse(bytes.substr(16, len));
    } catch (const json::exception& e) {
        throw DataError(where + "corrupt header: " + e.what());
    }
    const std::size_t body = 16 + len;
    if ((bytes.size() - body) % sizeof(double) != 0) throw DataError(where + "checkpoint truncated in array data");
    std::vector<double> payload((bytes.size() - body) / sizeof(double));
    std::memcpy(payload.data(), bytes.data() + body, payload.size() * sizeof(double));

    Checkpoint ck;
    try {
        ArrayReader r;
        r.payload = &payload;
        for (const auto& entry : header.at("arrays")) r.manifest[entry.at("name").get<std::string>()] = entry;

        NetParams& p = ck.params;
        p.config = config_from_json(header.at("config"));
        const auto& sc = header.at("scaling");
        p.scaling = {sc.at("r_min").get<double>(), sc.at("r_max").get<double>(), sc.at("s_min").get<double>(),
                     sc.at("s_max").get<double>()};
        const auto activations = header.at("dims").at("activations").get<std::vector<std::string>>();
        for (std::size_t l = 0; l < activations.size(); ++l) {
            const std::string pre = "encoder." + std::to_string(l) + ".";
            ConvLayer layer;
            layer.w_point = r.get(pre + "w_point");
            layer.w_neighbour = r.get(pre + "w_neighbour");
            layer.bias = r.vec(pre + "bias");
            layer.activation = activations[l] == "linear" ? Activation::linear : Activation::tanh;
            p.encoder.push_back(std::move(layer));
            p.decoder_bias.push_back(r.vec("decoder." + std::to_string(l) + ".bias"));
        }
        p.components = r.get("components");
        if (p.encoder.empty()) throw DataError("checkpoint has no layers");

        TrainState& st = ck.state;
        st.adam_m = Gradients::zeros_like(p);
        st.adam_v = Gradients::zeros_like(p);
        read_gradients(r, "adam_m.", st.adam_m);
        read_gradients(r, "adam_v.", st.adam_v);
        st.lambda = r.get("lambda");
        const Eigen::MatrixXd history = r.get("history");
        for (Eigen::Index e = 0; e < history.rows(); ++e)
            st.history.push_back({history(e, 0), history(e, 1), history(e, 2), history(e, 3)});
        st.centers = header.at("centers").get<std::vector<int>>();
        st.step = header.at("step").get<long long>();
        st.epoch = header.at("epoch").get<int>();
        st.converged = header.at("converged").get<bool>();
        st.best_epoch = header.at("best_epoch").get<int>();

        ck.reference.vertices = r.get("reference.vertices");
        ck.reference.faces = r.get("reference.faces").cast<int>();
        ck.reference_features = r.get("reference.features");
        ck.train_latents = r.get("train_latents");
        ck.reference_index = header.at("reference_index").get<int>();
        ck.train_indices = header.at("train_indices").get<std::vector<int>>();
        ck.test_indices = header.at("test_indices").get<std::vector<int>>();
        ck.split = header.at("split").get<std::string>();
        ck.aligned = header.at("aligned").get<bool>();
        ck.config_hash = header.at("config_hash").get<std::string>();
        if (header.at("mesh_hash").get<std::string>() != hex64(ck.mesh_hash()))
            throw DataError("stored mesh hash does not match the stored reference mesh");
        validate_mesh(ck.reference);
    } catch (const json::exception& e) {
        throw DataError(where + "malformed checkpoint: " + e.what());
    } catch (const DataError& e) {
        throw DataError(where + e.what());
    }
    return ck;
}

void verify_checkpoint_mesh(const Checkpoint& ckpt, const TriMesh& mesh) {
    const auto expected = ckpt.mesh_hash();
    const auto actual = mesh_content_hash(mesh);
    if (expected != actual)
        throw DataError("checkpoint was trained on mesh " + hex64(expected) + " but the supplied mesh hashes to " +
                        hex64(actual));
}

}  // namespace meshcomp
