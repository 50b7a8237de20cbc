#include "meshcomp/error.hpp"
#include "meshcomp/mesh.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace meshcomp {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int parse_obj_index(const std::string& token, int vertex_count, int line_no) {
    const std::string head = token.substr(0, token.find('/'));
    int value = 0;
    auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), value);
    if (ec != std::errc() || ptr != head.data() + head.size() || value == 0)
        throw DataError("line " + std::to_string(line_no) + ": bad face index '" + token + "'");
    // OBJ is 1-based; negative indices count back from the latest vertex.
    return value > 0 ? value - 1 : vertex_count + value;
}

void write_or_throw(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

void append_vertex(std::string& out, double x, double y, double z) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", x, y, z);
    out += buf;
}

}  // namespace

TriMesh parse_obj(const std::string& text) {
    std::vector<double> coords;
    std::vector<int> faces;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) throw DataError("line " + std::to_string(line_no) + ": bad vertex record");
            coords.insert(coords.end(), {x, y, z});
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            const int nv = static_cast<int>(coords.size() / 3);
            while (ls >> tok) poly.push_back(parse_obj_index(tok, nv, line_no));
            if (poly.size() != 3)
                throw DataError("line " + std::to_string(line_no) + ": face with " +
                                std::to_string(poly.size()) + " vertices, only triangles are supported");
            faces.insert(faces.end(), poly.begin(), poly.end());
        }
    }
    TriMesh mesh;
    mesh.vertices = Eigen::Map<const Points>(coords.data(), static_cast<Eigen::Index>(coords.size() / 3), 3);
    mesh.faces = Eigen::Map<const Faces>(faces.data(), static_cast<Eigen::Index>(faces.size() / 3), 3);
    validate_mesh(mesh);
    return mesh;
}

TriMesh read_obj(const fs::path& path) {
    try {
        return parse_obj(read_text(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_obj(const fs::path& path, const TriMesh& mesh, const std::vector<std::string>& comments) {
    std::string out;
    for (const auto& c : comments) out += "# " + c + "\n";
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
        out += "v ";
        append_vertex(out, mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2));
        out += '\n';
    }
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
        out += "f " + std::to_string(mesh.faces(f, 0) + 1) + ' ' + std::to_string(mesh.faces(f, 1) + 1) + ' ' +
               std::to_string(mesh.faces(f, 2) + 1) + '\n';
    write_or_throw(path, out);
}

void write_ply(const fs::path& path, const TriMesh& mesh, const std::vector<Rgb>& colors,
               const std::vector<std::string>& comments) {
    if (colors.size() != static_cast<std::size_t>(mesh.num_vertices()))
        throw UsageError("color count does not match vertex count");
    std::string out = "ply\nformat ascii 1.0\n";
    for (const auto& c : comments) out += "comment " + c + "\n";
    out += "element vertex " + std::to_string(mesh.num_vertices()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "element face " + std::to_string(mesh.num_faces()) + "\n";
    out += "property list uchar int vertex_indices\nend_header\n";
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
        append_vertex(out, mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2));
        const Rgb& c = colors[static_cast<std::size_t>(i)];
        out += ' ' + std::to_string(c.r) + ' ' + std::to_string(c.g) + ' ' + std::to_string(c.b) + '\n';
    }
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
        out += "3 " + std::to_string(mesh.faces(f, 0)) + ' ' + std::to_string(mesh.faces(f, 1)) + ' ' +
               std::to_string(mesh.faces(f, 2)) + '\n';
    write_or_throw(path, out);
}

TriMesh read_ply(const fs::path& path, std::vector<Rgb>* colors) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw DataError(path.string() + ": not a PLY file");
    long nv = -1, nf = -1;
    std::vector<std::string> vprops;
    std::string current;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii") throw DataError(path.string() + ": only ASCII PLY is supported");
        } else if (tag == "element") {
            long count = 0;
            ls >> current >> count;
            if (current == "vertex") nv = count;
            if (current == "face") nf = count;
        } else if (tag == "property" && current == "vertex") {
            std::string type, name;
            ls >> type >> name;
            vprops.push_back(name);
        } else if (tag == "end_header") {
            break;
        }
    }
    if (nv < 0 || nf < 0) throw DataError(path.string() + ": missing vertex or face element");
    auto find_prop = [&](const std::string& name) {
        for (std::size_t k = 0; k < vprops.size(); ++k)
            if (vprops[k] == name) return static_cast<int>(k);
        return -1;
    };
    const int ix = find_prop("x"), iy = find_prop("y"), iz = find_prop("z");
    const int ir = find_prop("red"), ig = find_prop("green"), ib = find_prop("blue");
    if (ix < 0 || iy < 0 || iz < 0) throw DataError(path.string() + ": vertex element lacks x/y/z");

    TriMesh mesh;
    mesh.vertices.resize(nv, 3);
    if (colors) colors->assign(static_cast<std::size_t>(nv), Rgb{});
    std::vector<double> values(vprops.size());
    for (long i = 0; i < nv; ++i) {
        for (auto& v : values)
            if (!(in >> v)) throw DataError(path.string() + ": truncated vertex data");
        mesh.vertices.row(i) << values[static_cast<std::size_t>(ix)], values[static_cast<std::size_t>(iy)],
            values[static_cast<std::size_t>(iz)];
        if (colors && ir >= 0 && ig >= 0 && ib >= 0)
            (*colors)[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(values[static_cast<std::size_t>(ir)]),
                                                      static_cast<std::uint8_t>(values[static_cast<std::size_t>(ig)]),
                                                      static_cast<std::uint8_t>(values[static_cast<std::size_t>(ib)])};
    }
    mesh.faces.resize(nf, 3);
    for (long f = 0; f < nf; ++f) {
        int n = 0;
        if (!(in >> n) || n != 3) throw DataError(path.string() + ": only triangle faces are supported");
        if (!(in >> mesh.faces(f, 0) >> mesh.faces(f, 1) >> mesh.faces(f, 2)))
            throw DataError(path.string() + ": truncated face data");
    }
    validate_mesh(mesh);
    return mesh;
}

Manifest read_manifest(const fs::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("shapes") || !doc["shapes"].is_array())
        throw DataError(path.string() + ": manifest needs a 'shapes' array");
    Manifest manifest;
    const fs::path base = path.parent_path();
    for (const auto& entry : doc["shapes"]) {
        if (!entry.is_string()) throw DataError(path.string() + ": shape entries must be strings");
        fs::path p = entry.get<std::string>();
        manifest.shapes.push_back(p.is_absolute() ? p : base / p);
    }
    manifest.reference_index = doc.value("reference_index", 0);
    manifest.aligned = doc.value("aligned", false);
    return manifest;
}

ShapeSet load_shape_set(const fs::path& manifest_path) {
    const Manifest manifest = read_manifest(manifest_path);
    std::vector<TriMesh> meshes;
    meshes.reserve(manifest.shapes.size());
    for (const auto& p : manifest.shapes) meshes.push_back(read_obj(p));
    return make_shape_set(std::move(meshes), manifest.reference_index);
}

}  // namespace meshcomp
