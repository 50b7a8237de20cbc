#include "cli.hpp"

#include "service.hpp"

#include "meshcomp/analysis.hpp"
#include "meshcomp/checkpoint.hpp"
#include "meshcomp/deform.hpp"
#include "meshcomp/error.hpp"
#include "meshcomp/geodesics.hpp"
#include "meshcomp/hash.hpp"
#include "meshcomp/metrics.hpp"
#include "meshcomp/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace meshcomp::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t parse_seed_token(const std::string& token, const std::string& spec) {
    if (token.rfind("seed", 0) != 0 || token.size() == 4) throw UsageError("bad split seed '" + token + "' in " + spec);
    try {
        std::size_t used = 0;
        const auto v = std::stoull(token.substr(4), &used);
        if (used != token.size() - 4) throw std::invalid_argument(token);
        return v;
    } catch (const std::logic_error&) {
        throw UsageError("bad split seed '" + token + "' in " + spec);
    }
}

std::vector<std::string> split_on(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) out.push_back(item);
    if (!text.empty() && text.back() == sep) out.emplace_back();
    return out;
}

/// Index in [0, bound) from raw engine output; bound is small, so the modulo bias is irrelevant.
std::size_t draw_index(std::mt19937_64& rng, std::size_t bound) { return static_cast<std::size_t>(rng() % bound); }

std::string require_path(const fs::path& p, const char* flag) {
    if (p.empty()) throw UsageError(std::string("missing required flag ") + flag);
    return p.string();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << text;
        if (!out) throw DataError("failed writing " + path.string());
    }
    fs::rename(tmp, path);
}

std::string dataset_hash(const ShapeSet& set) {
    Fnv1a h;
    for (const auto& s : set.shapes) h.update(std::as_bytes(std::span<const double>(s.data(), static_cast<std::size_t>(s.size()))));
    h.update(std::as_bytes(std::span<const int>(set.faces.data(), static_cast<std::size_t>(set.faces.size()))));
    return hex64(h.digest());
}

ShapeSet load_set(const Options& o, bool align) {
    ShapeSet set = load_shape_set(require_path(o.manifest, "--manifest"));
    return align ? rigid_align(set) : set;
}

/// Loads `<dir>/geodesics.mdgc` when it matches the mesh and method, otherwise
/// computes and writes it.
GeodesicMatrix cached_geodesics(const TriMesh& reference, GeodesicMethod method, const fs::path& dir,
                                std::vector<std::string>& warnings, bool& reused) {
    const fs::path path = dir / "geodesics.mdgc";
    const auto hash = mesh_content_hash(reference);
    reused = false;
    if (fs::exists(path)) {
        try {
            GeodesicMatrix g = GeodesicMatrix::load(path, hash);
            if (g.method() == method && g.size() == static_cast<std::size_t>(reference.num_vertices())) {
                reused = true;
                return g;
            }
        } catch (const DataError& e) {
            warnings.push_back(std::string("ignoring stale geodesic cache: ") + e.what());
        }
    }
    GeodesicMatrix g = compute_geodesics(reference, method, 1.0, &warnings);
    fs::create_directories(dir);
    const fs::path tmp = path.string() + ".tmp";
    g.save(tmp, hash);
    fs::rename(tmp, path);
    return g;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json scaling_json(const ScalingParams& s) {
    return {{"r_min", s.r_min}, {"r_max", s.r_max}, {"s_min", s.s_min}, {"s_max", s.s_max}};
}

}  // namespace

Split make_split(const std::string& spec, int count) {
    if (count < 1) throw UsageError("no shapes to split");
    const auto n = static_cast<std::size_t>(count);
    Split s;
    const auto parts = split_on(spec, ':');
    if (spec.empty() || spec == "all") {
        for (int i = 0; i < count; ++i) s.train.push_back(i);
        return s;
    }
    if (parts[0] == "random") {
        if (parts.size() != 3) throw UsageError("random split must be random:<fraction>:seed<S>, got " + spec);
        double frac = 0.0;
        try {
            std::size_t used = 0;
            frac = std::stod(parts[1], &used);
            if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
        } catch (const std::logic_error&) {
            throw UsageError("bad split fraction in " + spec);
        }
        if (!(frac > 0.0 && frac <= 1.0)) throw UsageError("split fraction must be in (0, 1]");
        std::mt19937_64 rng(parse_seed_token(parts[2], spec));
        std::vector<int> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[draw_index(rng, i)]);
        const auto train_count = static_cast<std::size_t>(std::lround(frac * static_cast<double>(n)));
        if (train_count == 0) throw UsageError("split leaves no training shapes");
        s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
        s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end());
    } else if (parts[0] == "every") {
        if (parts.size() != 2 && parts.size() != 3) throw UsageError("every split must be every:<n>[:seed<S>], got " + spec);
        int step = 0;
        try {
            std::size_t used = 0;
            step = std::stoi(parts[1], &used);
            if (used != parts[1].size()) throw std::invalid_argument(parts[1]);
        } catch (const std::logic_error&) {
            throw UsageError("bad block size in " + spec);
        }
        if (step < 1) throw UsageError("block size must be >= 1");
        std::optional<std::mt19937_64> rng;
        if (parts.size() == 3) rng.emplace(parse_seed_token(parts[2], spec));
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(step)) {
            const std::size_t len = std::min(static_cast<std::size_t>(step), n - start);
            const std::size_t pick = rng ? start + draw_index(*rng, len) : start;
            for (std::size_t i = start; i < start + len; ++i)
                (i == pick ? s.train : s.test).push_back(static_cast<int>(i));
        }
    } else {
        throw UsageError("unknown split '" + spec + "' (expected all, random:..., every:...)");
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

TrainConfig apply_overrides(TrainConfig c, const Options& o) {
    if (o.components) c.components = *o.components;
    if (o.lambda1) c.lambda1 = *o.lambda1;
    if (o.lambda2) c.lambda2 = *o.lambda2;
    if (o.d_min) c.d_min = *o.d_min;
    if (o.d_max) c.d_max = *o.d_max;
    if (o.theta) c.theta = *o.theta;
    if (o.learning_rate) c.learning_rate = *o.learning_rate;
    if (o.epochs) c.epochs = *o.epochs;
    if (o.seed) c.seed = *o.seed;
    c.validate();
    return c;
}

std::string json_hash(const json& doc) {
    Fnv1a h;
    h.update(doc.dump());
    return hex64(h.digest());
}

std::vector<double> parse_weights(const std::string& text) {
    if (text.empty()) throw UsageError("--weights is required (comma-separated, one per component)");
    std::vector<double> out;
    for (const auto& item : split_on(text, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            if (!std::isfinite(v)) throw UsageError("weight '" + item + "' is not finite");
            out.push_back(v);
        } catch (const std::logic_error&) {
            throw UsageError("bad weight '" + item + "'");
        }
    }
    return out;
}

fs::path write_manifest(const fs::path& dir, const std::vector<TriMesh>& meshes, int reference_index) {
    fs::create_directories(dir);
    json shapes = json::array();
    for (std::size_t i = 0; i < meshes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "shape_%03zu.obj", i);
        write_obj(dir / name, meshes[i]);
        shapes.push_back(name);
    }
    const fs::path manifest = dir / "manifest.json";
    write_text_atomic(manifest, json{{"shapes", shapes}, {"reference_index", reference_index}}.dump(2) + "\n");
    return manifest;
}

int cmd_prep(const Options& o, std::ostream& log) {
    const fs::path out = require_path(o.out, "--out");
    const GeodesicMethod method = geodesic_method_from_string(o.geodesic_method);
    const ShapeSet set = load_set(o, o.align);
    const EncodedFeatures enc = encode_features(set);
    std::vector<std::string> warnings = enc.warnings;
    for (const auto& w : set.connectivity.warnings) warnings.push_back(w);
    bool reused = false;
    const GeodesicMatrix geo = cached_geodesics(set.reference_mesh(), method, out, warnings, reused);

    const json config = {{"command", "prep"},
                         {"dataset", dataset_hash(set)},
                         {"align", o.align},
                         {"geodesic_method", to_string(method)}};
    const json summary = {{"config_hash", json_hash(config)},
                          {"config", config},
                          {"mesh_hash", hex64(mesh_content_hash(set.reference_mesh()))},
                          {"V", set.num_vertices()},
                          {"F", set.faces.rows()},
                          {"N", set.size()},
                          {"reference_index", set.reference_index},
                          {"geodesics",
                           {{"file", "geodesics.mdgc"},
                            {"method", to_string(geo.method())},
                            {"t_scale", geo.t_scale()},
                            {"scale", geo.scale()},
                            {"asymmetry", geo.asymmetry()},
                            {"reused", reused}}},
                          {"scaling", scaling_json(enc.scaling)},
                          {"warnings", warnings}};
    write_text_atomic(out / "prep.json", summary.dump(2) + "\n");
    if (!o.quiet)
        log << "prep: " << set.size() << " shapes, " << set.num_vertices() << " vertices, geodesics "
            << (reused ? "reused" : "computed") << " -> " << out.string() << "\n";
    return 0;
}

int cmd_train(const Options& o, std::ostream& log) {
    const fs::path out = require_path(o.out, "--out");
    const TrainConfig config = apply_overrides(TrainConfig{}, o);
    const GeodesicMethod method = geodesic_method_from_string(o.geodesic_method);
    const ShapeSet set = load_set(o, o.align);
    const Split split = make_split(o.split, static_cast<int>(set.size()));
    const EncodedFeatures enc = encode_features(set, split.train);
    std::vector<std::string> warnings = enc.warnings;
    bool reused = false;
    const GeodesicMatrix geo = cached_geodesics(set.reference_mesh(), method, out, warnings, reused);
    if (!o.quiet)
        for (const auto& w : warnings) log << "warning: " << w << "\n";

    std::vector<FeatureMatrix> train_features;
    for (int i : split.train) train_features.push_back(enc.features[static_cast<std::size_t>(i)]);

    const json run = {{"command", "train"},
                      {"dataset", dataset_hash(set)},
                      {"align", o.align},
                      {"split", o.split},
                      {"geodesic_method", to_string(method)},
                      {"config", config_to_json(config)}};
    const std::string config_hash = json_hash(run);

    ProgressFn progress;
    if (!o.quiet)
        progress = [&log](int epoch, const LossTerms& l) {
            if (epoch % 500 == 0)
                log << "epoch " << epoch << "  loss " << l.total << "  data " << l.data << "  omega " << l.omega
                    << "  vz " << l.vz << "\n";
        };
    TrainResult result = train(train_features, enc.scaling, set.connectivity, geo, config, progress);

    Checkpoint ck;
    const NeighbourMean mean(set.connectivity);
    ck.train_latents = encode_all(train_features, result.params, mean);
    ck.params = std::move(result.params);
    ck.state = std::move(result.state);
    ck.reference = set.reference_mesh();
    ck.reference_index = set.reference_index;
    ck.reference_features = enc.features[static_cast<std::size_t>(set.reference_index)];
    ck.train_indices = split.train;
    ck.test_indices = split.test;
    ck.split = o.split;
    ck.aligned = o.align;
    ck.config_hash = config_hash;

    const fs::path ckpt_path = o.checkpoint.empty() ? out / "model.mdae" : o.checkpoint;
    if (ckpt_path.has_parent_path()) fs::create_directories(ckpt_path.parent_path());
    const fs::path tmp = ckpt_path.string() + ".tmp";
    save_checkpoint(ck, tmp);
    fs::rename(tmp, ckpt_path);

    std::ostringstream csv;
    csv << "# config_hash " << config_hash << "\n";
    csv << "epoch,data,omega,vz,total\n";
    for (std::size_t e = 0; e < ck.state.history.size(); ++e) {
        const auto& h = ck.state.history[e];
        csv << e << "," << format_double(h.data) << "," << format_double(h.omega) << "," << format_double(h.vz) << ","
            << format_double(h.total) << "\n";
    }
    write_text_atomic(out / "loss.csv", csv.str());
    if (!o.quiet) {
        const auto& last = ck.state.history.empty() ? LossTerms{} : ck.state.history.back();
        log << "trained " << ck.state.epoch << " epochs" << (ck.state.converged ? " (converged)" : "")
            << ", final loss " << last.total << ", data-term MSE per entry "
            << last.data / static_cast<double>(set.num_vertices() * kFeatureDim) << "\n"
            << "checkpoint " << ckpt_path.string() << "  config_hash " << config_hash << "\n";
    }
    return 0;
}

int cmd_eval(const Options& o, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(require_path(o.checkpoint, "--checkpoint"));
    const ShapeSet set = load_set(o, o.align || ck.aligned);
    verify_checkpoint_mesh(ck, set.reference_mesh());
    std::vector<int> indices;
    if (o.subset == "test")
        indices = ck.test_indices;
    else if (o.subset == "train")
        indices = ck.train_indices;
    else if (o.subset == "all")
        for (int i = 0; i < static_cast<int>(set.size()); ++i) indices.push_back(i);
    else
        throw UsageError("--subset must be test, train or all");
    if (indices.empty()) throw UsageError("the " + o.subset + " split is empty; nothing to evaluate");
    for (int i : indices)
        if (i < 0 || i >= static_cast<int>(set.size()))
            throw DataError("checkpoint split index " + std::to_string(i) + " is outside the manifest");

    const ComponentModel model(ck.params, ck.reference, ck.reference_features);
    const GradientFitter fitter(set.reference(), set.connectivity);
    const int anchor = model.reconstructor().anchor();
    std::vector<Points> pred, truth;
    for (int i : indices) {
        const Points& shape = set.shapes[static_cast<std::size_t>(i)];
        const FeatureMatrix x = encode_shape(fitter, set.connectivity, shape, ck.params.scaling);
        const FeatureMatrix xhat = model.decode(model.encode(x));
        pred.push_back(model.reconstructor().reconstruct(decode_gradients(xhat, ck.params.scaling),
                                                         shape.row(anchor).transpose()));
        truth.push_back(shape);
    }
    const ErrorReport report = error_report(pred, truth, set.reference(), set.faces, indices);
    const json run = {{"command", "eval"},
                      {"checkpoint", ck.config_hash},
                      {"dataset", dataset_hash(set)},
                      {"subset", o.subset}};
    json doc = to_json(report);
    doc["config_hash"] = json_hash(run);
    doc["checkpoint_config_hash"] = ck.config_hash;
    doc["subset"] = o.subset;
    const std::string text = doc.dump(2) + "\n";
    if (o.out.empty())
        log << text;
    else {
        write_text_atomic(o.out, text);
        if (!o.quiet) log << "e_rms " << report.e_rms << "  sted " << report.sted << " -> " << o.out.string() << "\n";
    }
    return 0;
}

int cmd_components(const Options& o, std::ostream& log) {
    const fs::path out = require_path(o.out, "--out");
    const Checkpoint ck = load_checkpoint(require_path(o.checkpoint, "--checkpoint"));
    const ComponentModel model(ck.params, ck.reference, ck.reference_features);
    const ComponentSet set = analyze_components(model, ck.train_latents);
    const std::string hash = json_hash({{"command", "components"}, {"checkpoint", ck.config_hash}});
    fs::create_directories(out);
    json list = json::array();
    for (std::size_t k = 0; k < set.components.size(); ++k) {
        const auto& c = set.components[k];
        const std::string name = "component_" + std::to_string(k) + ".ply";
        export_component_heatmap(model, set, static_cast<int>(k), out / name,
                                 {"config_hash " + hash, "component " + std::to_string(k) + " center " +
                                                             std::to_string(c.center) + " z_rep " + format_double(c.z_rep)});
        list.push_back({{"k", k},
                        {"file", name},
                        {"center", c.center},
                        {"z_min", c.z_min},
                        {"z_max", c.z_max},
                        {"z_rep", c.z_rep},
                        {"degenerate", c.degenerate},
                        {"magnitudes", std::vector<double>(c.magnitudes.data(), c.magnitudes.data() + c.magnitudes.size())}});
    }
    write_text_atomic(out / "components.json",
                      json{{"config_hash", hash}, {"checkpoint_config_hash", ck.config_hash}, {"components", list}}.dump(2) +
                          "\n");
    if (!o.quiet) log << "wrote " << set.components.size() << " component heatmaps to " << out.string() << "\n";
    return 0;
}

int cmd_synthesize(const Options& o, std::ostream& log) {
    const fs::path out = require_path(o.out, "--out");
    const Checkpoint ck = load_checkpoint(require_path(o.checkpoint, "--checkpoint"));
    const std::vector<double> weights = parse_weights(o.weights);
    if (static_cast<int>(weights.size()) != ck.params.latent_dim())
        throw UsageError("checkpoint has " + std::to_string(ck.params.latent_dim()) + " components but " +
                         std::to_string(weights.size()) + " weights were given");
    const ComponentModel model(ck.params, ck.reference, ck.reference_features);
    const ComponentSet set = analyze_components(model, ck.train_latents);
    const Points p = synthesize(model, set, weights);
    json wj = weights;
    const std::string hash = json_hash({{"command", "synthesize"}, {"checkpoint", ck.config_hash}, {"weights", wj}});
    write_obj(out, TriMesh{p, ck.reference.faces}, {"config_hash " + hash, "weights " + wj.dump()});
    if (!o.quiet) log << "synthesized mesh -> " << out.string() << "\n";
    return 0;
}

int cmd_serve(const Options& o, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(require_path(o.checkpoint, "--checkpoint"));
    const ModelService service(ck);
    run_server(service, o.host, o.port, o.ui_dir, [&](int port, const std::function<void()>&) {
        log << "serving on http://" << o.host << ":" << port << std::endl;
    });
    return 0;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Sparse localized deformation components for mesh collections"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("--manifest", o.manifest, "JSON manifest listing the shapes (OBJ)");
    app.add_option("--checkpoint", o.checkpoint, "model checkpoint (input, or output path for train)");
    app.add_option("--out", o.out, "output directory (prep, train, components) or file (eval, synthesize)");
    app.add_option("--components", o.components, "number of components K");
    app.add_option("--lambda1", o.lambda1, "sparsity weight");
    app.add_option("--lambda2", o.lambda2, "latent penalty weight");
    app.add_option("--dmin", o.d_min, "normalized geodesic radius with no sparsity penalty");
    app.add_option("--dmax", o.d_max, "normalized geodesic radius with full sparsity penalty");
    app.add_option("--theta", o.theta, "latent penalty offset");
    app.add_option("--lr", o.learning_rate, "ADAM learning rate");
    app.add_option("--epochs", o.epochs, "training epochs");
    app.add_option("--seed", o.seed, "random seed");
    app.add_option("--split", o.split, "all | random:<fraction>:seed<S> | every:<n>[:seed<S>]");
    app.add_flag("--align", o.align, "rigidly align every shape to the reference first");
    app.add_option("--weights", o.weights, "comma-separated synthesis weights, one per component");
    app.add_option("--port", o.port, "HTTP port for serve (0 picks a free one)");
    app.add_option("--host", o.host, "HTTP bind address for serve");
    app.add_option("--ui", o.ui_dir, "static UI directory for serve");
    app.add_option("--subset", o.subset, "shapes to evaluate: test | train | all");
    app.add_option("--geodesics", o.geodesic_method, "heat | graph");
    app.add_flag("--quiet", o.quiet, "suppress progress output");
    for (const char* name : {"prep", "train", "eval", "components", "synthesize", "serve"}) app.add_subcommand(name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? 0 : 1;
    }
    o.command = app.get_subcommands().front()->get_name();
    try {
        if (o.command == "prep") return cmd_prep(o, out);
        if (o.command == "train") return cmd_train(o, out);
        if (o.command == "eval") return cmd_eval(o, out);
        if (o.command == "components") return cmd_components(o, out);
        if (o.command == "synthesize") return cmd_synthesize(o, out);
        return cmd_serve(o, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace meshcomp::cli
