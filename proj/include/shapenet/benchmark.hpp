#pragma once

#include <string>
#include <vector>

#include "shapenet/config.hpp"
#include "shapenet/eval.hpp"

namespace shapenet {

struct SyntheticDataset {
    std::vector<VoxelGrid> train, test;
    std::vector<int> train_labels, test_labels;
};

/// samples_per_class shapes per class, split per class into train and test
/// with a seeded shuffle.
SyntheticDataset make_synthetic_dataset(const std::vector<ShapeClass>& classes, int samples_per_class,
                                        double test_fraction, const GridSpec& spec, std::uint64_t seed);

/// Quarter turn about +z through the grid center; exact on cubic grids.
VoxelGrid rotate_grid_quarter(const VoxelGrid& grid, int quarters);

/// Random single view of a shape from the candidate sphere.
ObservationGrid random_view(const VoxelGrid& shape, const GridSpec& spec, std::uint64_t seed);

/// Camera on the viewing sphere at the given azimuth and elevation (radians),
/// looking at the grid center.
CameraPose orbit_pose(const GridSpec& spec, double azimuth, double elevation, double radius);

/// Block (label 0) and block-with-handle (label 1) episodes in alternating
/// order. The first view faces the x side away from the handle (a random x
/// side for plain blocks). Exactly one candidate looks from the handle side,
/// the others stay near the first view; candidate order is shuffled.
std::vector<NbvEpisodeSpec> make_handle_episodes(std::size_t n, std::size_t candidates, const GridSpec& spec,
                                                 std::uint64_t seed);

struct BenchmarkResult {
    MetricsReport report;
    NetworkParams generative;
    std::string diagnostics_csv;
    std::map<int, std::vector<double>> pr_curves;
    double seconds = 0;
};

/// End-to-end desk run: synthetic data, pretraining and fine-tuning,
/// recognition, feature classification, retrieval, the k-NN baseline and the
/// two-view NBV table. A stage failure leaves a partial report with
/// failed_stage set.
BenchmarkResult desk_benchmark(const RunConfig& cfg);

} // namespace shapenet
