#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include "meshcomp/checkpoint.hpp"
#include "meshcomp/error.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

using namespace meshcomp;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

template <typename A, typename B>
bool same_bits(const A& a, const B& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
    const Checkpoint& ck = fixture::small_checkpoint();
    const auto dir = oracle::scratch_dir("ckpt_roundtrip");
    save_checkpoint(ck, dir / "a.mdae");
    const Checkpoint back = load_checkpoint(dir / "a.mdae");

    CHECK(back.params.config == ck.params.config);
    CHECK(back.params.scaling == ck.params.scaling);
    const auto a = ck.params.blocks();
    const auto b = back.params.blocks();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        REQUIRE(a[k].size() == b[k].size());
        CHECK(std::memcmp(a[k].data(), b[k].data(), a[k].size_bytes()) == 0);
    }
    for (std::size_t l = 0; l < ck.params.encoder.size(); ++l) CHECK(back.params.encoder[l].activation == ck.params.encoder[l].activation);
    const auto ma = ck.state.adam_m.blocks();
    const auto mb = back.state.adam_m.blocks();
    for (std::size_t k = 0; k < ma.size(); ++k) CHECK(std::memcmp(ma[k].data(), mb[k].data(), ma[k].size_bytes()) == 0);
    CHECK(back.state.step == ck.state.step);
    CHECK(back.state.epoch == ck.state.epoch);
    CHECK(back.state.centers == ck.state.centers);
    CHECK(same_bits(back.state.lambda, ck.state.lambda));
    REQUIRE(back.state.history.size() == ck.state.history.size());
    CHECK(back.state.history.back().total == ck.state.history.back().total);
    CHECK(same_bits(back.reference.vertices, ck.reference.vertices));
    CHECK(back.reference.faces == ck.reference.faces);
    CHECK(same_bits(back.reference_features, ck.reference_features));
    CHECK(same_bits(back.train_latents, ck.train_latents));
    CHECK(back.train_indices == ck.train_indices);
    CHECK(back.test_indices == ck.test_indices);
    CHECK(back.split == ck.split);
    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.mesh_hash() == ck.mesh_hash());

    // saving the loaded copy reproduces the file byte for byte
    save_checkpoint(back, dir / "b.mdae");
    CHECK(slurp(dir / "a.mdae") == slurp(dir / "b.mdae"));
}

TEST_CASE("checkpoint header layout") {
    const auto dir = oracle::scratch_dir("ckpt_layout");
    save_checkpoint(fixture::small_checkpoint(), dir / "a.mdae");
    const std::string bytes = slurp(dir / "a.mdae");
    REQUIRE(bytes.size() > 16);
    CHECK(bytes.substr(0, 4) == "MDAE");
    std::uint32_t version = 0;
    std::uint64_t header = 0;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&header, bytes.data() + 8, 8);
    CHECK(version == 1);
    const auto doc = nlohmann::json::parse(bytes.substr(16, header));
    CHECK(doc.contains("config"));
    CHECK(doc.contains("scaling"));
    CHECK(doc.contains("centers"));
    CHECK(doc.at("mesh_hash").get<std::string>().size() == 16);
    // arrays are packed back to back after the header
    std::uint64_t offset = 0;
    for (const auto& a : doc.at("arrays")) {
        CHECK(a.at("offset").get<std::uint64_t>() == offset);
        offset += 8 * a.at("rows").get<std::uint64_t>() * a.at("cols").get<std::uint64_t>();
    }
    CHECK(16 + header + offset == bytes.size());
}

TEST_CASE("damaged checkpoints are rejected") {
    const auto dir = oracle::scratch_dir("ckpt_bad");
    save_checkpoint(fixture::small_checkpoint(), dir / "good.mdae");
    const std::string bytes = slurp(dir / "good.mdae");

    std::string magic = bytes;
    magic[0] = 'X';
    spit(dir / "magic.mdae", magic);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.mdae"), DataError);

    std::string version = bytes;
    version[4] = 9;
    spit(dir / "version.mdae", version);
    CHECK_THROWS_AS(load_checkpoint(dir / "version.mdae"), DataError);

    spit(dir / "short.mdae", bytes.substr(0, bytes.size() - 8));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.mdae"), DataError);
    spit(dir / "tiny.mdae", bytes.substr(0, 10));
    CHECK_THROWS_AS(load_checkpoint(dir / "tiny.mdae"), DataError);

    std::string header = bytes;
    header[20] = '#';
    spit(dir / "header.mdae", header);
    CHECK_THROWS_AS(load_checkpoint(dir / "header.mdae"), DataError);

    // a flipped reference coordinate no longer matches the stored mesh hash
    const std::uint64_t hlen = [&] {
        std::uint64_t h = 0;
        std::memcpy(&h, bytes.data() + 8, 8);
        return h;
    }();
    const auto doc = nlohmann::json::parse(bytes.substr(16, hlen));
    for (const auto& a : doc.at("arrays"))
        if (a.at("name") == "reference.vertices") {
            std::string tampered = bytes;
            tampered[16 + hlen + a.at("offset").get<std::size_t>() + 3] ^= 0x10;
            spit(dir / "tampered.mdae", tampered);
            CHECK_THROWS_AS(load_checkpoint(dir / "tampered.mdae"), DataError);
        }

    CHECK_THROWS_AS(load_checkpoint(dir / "missing.mdae"), DataError);
}

TEST_CASE("mesh hash check") {
    const Checkpoint& ck = fixture::small_checkpoint();
    CHECK_NOTHROW(verify_checkpoint_mesh(ck, ck.reference));
    TriMesh other = ck.reference;
    other.vertices(0, 0) += 0.01;
    CHECK_THROWS_AS(verify_checkpoint_mesh(ck, other), DataError);
    CHECK_THROWS_AS(verify_checkpoint_mesh(ck, primitives::icosahedron()), DataError);
}

TEST_CASE("config json round trip") {
    TrainConfig c;
    c.components = 7;
    c.layer_dims = {9, 3};
    c.hinge_latent_penalty = true;
    c.seed = 123456789012345ULL;
    c.proximal_sparsity = false;
    c.restore_best = false;
    CHECK(config_from_json(config_to_json(c)) == c);
    auto j = config_to_json(c);
    j.erase("lambda1");
    CHECK_THROWS_AS(config_from_json(j), DataError);
}
