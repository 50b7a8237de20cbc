#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include "cli.hpp"

#include "meshcomp/analysis.hpp"
#include "meshcomp/checkpoint.hpp"
#include "meshcomp/error.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

using namespace meshcomp;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "meshcomp");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path small_manifest(const fs::path& dir, int count = 10) {
    const ShapeSet set = fixture::bent_tubes(count, 5);
    std::vector<TriMesh> meshes;
    for (std::size_t m = 0; m < set.size(); ++m) meshes.push_back(set.mesh(m));
    return cli::write_manifest(dir, meshes);
}

std::vector<std::string> train_args(const fs::path& manifest, const fs::path& out) {
    return {"train", "--manifest", manifest.string(), "--out", out.string(), "--components", "2",
            "--epochs", "300", "--split", "random:0.8:seed3", "--quiet"};
}

}  // namespace

TEST_CASE("split specs") {
    const auto half = cli::make_split("random:0.5:seed1", 71);
    CHECK(half.train.size() == 36);
    CHECK(half.test.size() == 35);
    CHECK(cli::make_split("random:0.5:seed1", 71).train == half.train);
    CHECK(cli::make_split("random:0.5:seed2", 71).train != half.train);
    std::vector<int> all = half.train;
    all.insert(all.end(), half.test.begin(), half.test.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 71; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);

    const auto every = cli::make_split("every:10", 150);
    CHECK(every.train.size() == 15);
    CHECK(every.test.size() == 135);
    CHECK(every.train[1] == 10);
    const auto seeded = cli::make_split("every:10:seed4", 150);
    CHECK(seeded.train.size() == 15);
    for (std::size_t b = 0; b < 15; ++b) CHECK(seeded.train[b] / 10 == static_cast<int>(b));

    CHECK(cli::make_split("all", 5).train.size() == 5);
    CHECK(cli::make_split("all", 5).test.empty());
    for (const char* bad : {"random:0.5", "random:x:seed1", "random:0.5:s1", "random:1.5:seed1", "every:0", "every:3:seed", "bogus"})
        CHECK_THROWS_AS(cli::make_split(bad, 20), UsageError);
}

TEST_CASE("weights parsing") {
    CHECK(cli::parse_weights("1,-0.5,2e-1") == std::vector<double>{1.0, -0.5, 0.2});
    CHECK_THROWS_AS(cli::parse_weights(""), UsageError);
    CHECK_THROWS_AS(cli::parse_weights("1,,2"), UsageError);
    CHECK_THROWS_AS(cli::parse_weights("1,nan"), UsageError);
    CHECK_THROWS_AS(cli::parse_weights("1,2x"), UsageError);
}

TEST_CASE("usage errors exit with code 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"prep"}).code == 1);  // no manifest
    CHECK(invoke({"train", "--manifest", "x.json", "--out", "o", "--components", "0"}).code == 1);
    CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("prep on a tetrahedron manifest is idempotent") {
    const auto dir = oracle::scratch_dir("cli_prep");
    const auto manifest = cli::write_manifest(dir / "data", {primitives::tetrahedron(), primitives::tetrahedron()});
    Run r = invoke({"prep", "--manifest", manifest.string(), "--out", (dir / "run").string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "run" / "geodesics.mdgc"));
    const auto first = nlohmann::json::parse(slurp(dir / "run" / "prep.json"));
    CHECK(first.at("geodesics").at("reused") == false);
    const std::string cache = slurp(dir / "run" / "geodesics.mdgc");
    r = invoke({"prep", "--manifest", manifest.string(), "--out", (dir / "run").string()});
    REQUIRE(r.code == 0);
    const auto second = nlohmann::json::parse(slurp(dir / "run" / "prep.json"));
    CHECK(second.at("geodesics").at("reused") == true);
    CHECK(second.at("config_hash") == first.at("config_hash"));
    CHECK(slurp(dir / "run" / "geodesics.mdgc") == cache);
}

TEST_CASE("corrupt mesh: nonzero exit and no partial cache") {
    const auto dir = oracle::scratch_dir("cli_corrupt");
    const auto manifest = cli::write_manifest(dir / "data", {primitives::tetrahedron(), primitives::tetrahedron()});
    std::ofstream(dir / "data" / "shape_001.obj") << "v 0 0 0\nv 1 0\nf 1 2 3\n";
    const Run r = invoke({"prep", "--manifest", manifest.string(), "--out", (dir / "run").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("shape_001.obj") != std::string::npos);
    CHECK(!fs::exists(dir / "run" / "geodesics.mdgc"));
    CHECK(!fs::exists(dir / "run" / "prep.json"));
}

TEST_CASE("--align makes a moved duplicate set encode like the original") {
    const auto dir = oracle::scratch_dir("cli_align");
    const ShapeSet set = fixture::bent_tubes(4, 2);
    std::vector<TriMesh> plain, moved;
    std::mt19937_64 rng(5);
    for (std::size_t m = 0; m < set.size(); ++m) {
        plain.push_back(set.mesh(m));
        TriMesh t = set.mesh(m);
        if (m != 0) {
            const Mat3 r = oracle::random_rotation(rng);
            t.vertices = ((r * t.vertices.transpose()).transpose()).rowwise() + Eigen::RowVector3d(3.0, -1.0, 2.0);
        }
        moved.push_back(t);
    }
    const auto m1 = cli::write_manifest(dir / "plain", plain);
    const auto m2 = cli::write_manifest(dir / "moved", moved);
    REQUIRE(invoke({"prep", "--manifest", m1.string(), "--out", (dir / "r1").string(), "--align"}).code == 0);
    REQUIRE(invoke({"prep", "--manifest", m2.string(), "--out", (dir / "r2").string(), "--align"}).code == 0);
    const auto a = encode_features(rigid_align(load_shape_set(m1)));
    const auto b = encode_features(rigid_align(load_shape_set(m2)));
    for (std::size_t m = 0; m < a.features.size(); ++m) CHECK((a.features[m] - b.features[m]).cwiseAbs().maxCoeff() < 1e-9);
    const auto j1 = nlohmann::json::parse(slurp(dir / "r1" / "prep.json"));
    const auto j2 = nlohmann::json::parse(slurp(dir / "r2" / "prep.json"));
    for (const char* k : {"r_min", "r_max", "s_min", "s_max"})
        CHECK(j1.at("scaling").at(k).get<double>() == doctest::Approx(j2.at("scaling").at(k).get<double>()).epsilon(1e-9));
}

TEST_CASE("train, eval, components and synthesize") {
    const auto dir = oracle::scratch_dir("cli_pipeline");
    const auto manifest = small_manifest(dir / "data");
    const auto run = dir / "run";
    Run r = invoke(train_args(manifest, run));
    REQUIRE(r.code == 0);
    const auto ckpt = run / "model.mdae";
    REQUIRE(fs::exists(ckpt));
    const Checkpoint ck = load_checkpoint(ckpt);
    CHECK(ck.train_indices.size() == 8);
    CHECK(ck.test_indices.size() == 2);
    CHECK(ck.params.latent_dim() == 2);
    CHECK(ck.params.config.epochs == 300);
    CHECK(ck.config_hash.size() == 16);

    const std::string loss = slurp(run / "loss.csv");
    CHECK(loss.rfind("# config_hash " + ck.config_hash + "\n", 0) == 0);
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 2 + ck.state.epoch);

    SUBCASE("same flags give identical bytes") {
        REQUIRE(invoke(train_args(manifest, dir / "again")).code == 0);
        CHECK(slurp(dir / "again" / "model.mdae") == slurp(ckpt));
        CHECK(slurp(dir / "again" / "loss.csv") == loss);
        auto other = train_args(manifest, dir / "seed2");
        other.insert(other.end(), {"--seed", "2"});
        REQUIRE(invoke(other).code == 0);
        CHECK(slurp(dir / "seed2" / "model.mdae") != slurp(ckpt));
    }
    SUBCASE("eval writes a schema-valid report") {
        REQUIRE(invoke({"eval", "--manifest", manifest.string(), "--checkpoint", ckpt.string(), "--out", (run / "eval.json").string()}).code == 0);
        const auto doc = nlohmann::json::parse(slurp(run / "eval.json"));
        CHECK(doc.at("per_shape").size() == 2);
        CHECK(doc.at("checkpoint_config_hash") == ck.config_hash);
        CHECK(doc.at("subset") == "test");
        CHECK(doc.at("e_rms").get<double>() > 0.0);
        const std::string cmd = std::string("python3 ") + MESHCOMP_SOURCE_DIR + "/tests/validate_schema.py " + MESHCOMP_SOURCE_DIR +
                                "/schemas/eval_report.schema.json " + (run / "eval.json").string();
        CHECK(std::system(cmd.c_str()) == 0);

        REQUIRE(invoke({"eval", "--manifest", manifest.string(), "--checkpoint", ckpt.string(), "--out", (run / "e2.json").string()}).code == 0);
        CHECK(slurp(run / "eval.json") == slurp(run / "e2.json"));

        // stdout when no --out is given
        r = invoke({"eval", "--manifest", manifest.string(), "--checkpoint", ckpt.string(), "--subset", "train"});
        REQUIRE(r.code == 0);
        CHECK(nlohmann::json::parse(r.out).at("per_shape").size() == 8);
    }
    SUBCASE("an empty split is an error, not a zero") {
        auto all = train_args(manifest, dir / "all");
        all[all.size() - 2] = "all";
        REQUIRE(invoke(all).code == 0);
        r = invoke({"eval", "--manifest", manifest.string(), "--checkpoint", (dir / "all" / "model.mdae").string()});
        CHECK(r.code == 1);
        CHECK(r.err.find("empty") != std::string::npos);
    }
    SUBCASE("eval against another mesh is a data error") {
        const auto other = cli::write_manifest(dir / "other", {primitives::tetrahedron(), primitives::tetrahedron()});
        r = invoke({"eval", "--manifest", other.string(), "--checkpoint", ckpt.string()});
        CHECK(r.code == 2);
    }
    SUBCASE("components export every heatmap") {
        REQUIRE(invoke({"components", "--checkpoint", ckpt.string(), "--out", (run / "comps").string()}).code == 0);
        for (int k = 0; k < 2; ++k) {
            const auto ply = run / "comps" / ("component_" + std::to_string(k) + ".ply");
            REQUIRE(fs::exists(ply));
            CHECK(slurp(ply).find("comment config_hash ") != std::string::npos);
            CHECK(read_ply(ply).num_vertices() == ck.reference.num_vertices());
        }
        const auto doc = nlohmann::json::parse(slurp(run / "comps" / "components.json"));
        CHECK(doc.at("components").size() == 2);
        CHECK(doc.contains("config_hash"));
    }
    SUBCASE("synthesize") {
        REQUIRE(invoke({"synthesize", "--checkpoint", ckpt.string(), "--weights", "0,0", "--out", (run / "zero.obj").string()}).code == 0);
        const ComponentModel model(ck.params, ck.reference, ck.reference_features);
        const TriMesh zero = read_obj(run / "zero.obj");
        CHECK((zero.vertices - model.decode_positions(model.reference_latent())).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(slurp(run / "zero.obj").rfind("# config_hash ", 0) == 0);

        REQUIRE(invoke({"synthesize", "--checkpoint", ckpt.string(), "--weights", "1,1", "--out", (run / "both.obj").string()}).code == 0);
        CHECK(read_obj(run / "both.obj").num_vertices() == ck.reference.num_vertices());

        r = invoke({"synthesize", "--checkpoint", ckpt.string(), "--weights", "1,1,1", "--out", (run / "bad.obj").string()});
        CHECK(r.code == 1);
        CHECK(!fs::exists(run / "bad.obj"));
    }
}

TEST_CASE("a three-component checkpoint rejects two weights") {
    const auto dir = oracle::scratch_dir("cli_k3");
    save_checkpoint(fixture::small_checkpoint(), dir / "k3.mdae");
    const Run r = invoke({"synthesize", "--checkpoint", (dir / "k3.mdae").string(), "--weights", "0.5,0.5", "--out", (dir / "x.obj").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("3 components") != std::string::npos);
}
