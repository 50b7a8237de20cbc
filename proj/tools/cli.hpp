#pragma once

#include "meshcomp/net.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace meshcomp::cli {

struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

/// "all" (default), "random:<fraction>:seed<S>" or "every:<n>[:seed<S>]".
/// random: shuffles with the seed and keeps lround(fraction * n) for training.
/// every:  one shape per block of n, the first unless a seed is given, in
///         which case a seeded random pick per block.
Split make_split(const std::string& spec, int count);

/// Flags shared by the subcommands. Optional values stay unset unless given.
struct Options {
    std::string command;
    std::filesystem::path manifest;
    std::filesystem::path checkpoint;
    std::filesystem::path out;
    std::optional<int> components;
    std::optional<double> lambda1, lambda2, d_min, d_max, theta, learning_rate;
    std::optional<int> epochs;
    std::optional<std::uint64_t> seed;
    std::string split = "all";
    bool align = false;
    std::string weights;
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string subset = "test";
    std::filesystem::path ui_dir;
    std::string geodesic_method = "heat";
    bool quiet = false;
};

TrainConfig apply_overrides(TrainConfig config, const Options& options);

/// Stable hash of a JSON document (keys sorted by the serializer).
std::string json_hash(const nlohmann::json& doc);

/// Parses "w1,w2,..." into finite doubles; UsageError otherwise.
std::vector<double> parse_weights(const std::string& text);

int cmd_prep(const Options& options, std::ostream& log);
int cmd_train(const Options& options, std::ostream& log);
int cmd_eval(const Options& options, std::ostream& log);
int cmd_components(const Options& options, std::ostream& log);
int cmd_synthesize(const Options& options, std::ostream& log);
int cmd_serve(const Options& options, std::ostream& log);

/// Writes meshes as shape_000.obj, ... plus manifest.json into `dir`; returns the manifest path.
std::filesystem::path write_manifest(const std::filesystem::path& dir, const std::vector<TriMesh>& meshes,
                                     int reference_index = 0);

/// Parses arguments and runs one command. Maps UsageError to exit code 1,
/// DataError to 2 and NumericalError to 3; messages go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace meshcomp::cli
