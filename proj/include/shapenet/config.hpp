#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "shapenet/eval.hpp"
#include "shapenet/geometry.hpp"
#include "shapenet/nbv.hpp"
#include "shapenet/training.hpp"

namespace shapenet {

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment. Duplicate keys and
/// malformed lines throw InvalidArgument naming the source and line.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<config>");
KeyValues read_key_values(const std::filesystem::path& path);

/// Everything a run can be configured with. Keys of TrainConfig use the
/// field names verbatim; the rest are listed in config_keys().
struct RunConfig {
    TrainConfig train;
    NbvBudget nbv;
    SvmConfig svm;
    std::vector<ShapeClass> classes = {ShapeClass::Block, ShapeClass::Sphere, ShapeClass::Pyramid,
                                       ShapeClass::LBracket};
    std::string architecture = "desk";
    int samples_per_class = 100;
    double test_fraction = 0.2;
    int particles = 100;
    int iterations = 50;
    int eval_particles = 20; // Gibbs budget of the benchmark's recognition stage
    int eval_iterations = 10;
    std::size_t knn_k = 1;
    std::size_t candidates = 8;
    int nbv_episodes_per_class = 10;
    std::vector<Strategy> strategies = {Strategy::MutualInformation, Strategy::Random, Strategy::MaxVisibility,
                                        Strategy::Farthest};
    int train_views = 2; // single-view observations per training shape for view-based stages
    bool wake_sleep = true;
    bool discriminative = true;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;

    void validate() const;
};

/// Applies every pair; unknown keys or unparsable values throw InvalidArgument.
void apply_key_values(RunConfig& cfg, const KeyValues& kv);
RunConfig load_run_config(const std::filesystem::path& path);

/// Serializes the config in the same key = value format.
std::string format_run_config(const RunConfig& cfg);

std::vector<std::string> config_keys();

} // namespace shapenet
