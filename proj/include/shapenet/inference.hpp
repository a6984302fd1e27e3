#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "shapenet/cdbn.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

/// Binary visible state of a voxel grid.
LayerState grid_state(const VoxelGrid& grid);

/// Bottom-up pass through the conv stack and the dense layer. Element i is
/// the hidden state of conv layer i; the last element is the dense hidden state.
std::vector<LayerState> bottom_up(const NetworkParams& net, const LayerState& input, Propagation mode, Rng& rng);

/// Deterministic mean-field pass returning the top hidden means with no label input.
std::vector<float> extract_features(const NetworkParams& net, const VoxelGrid& grid);

/// One Gibbs chain: its final completion and label.
struct Particle {
    VoxelGrid grid;
    int label = 0;
    LayerState top_state;
    std::uint64_t seed = 0;
};

struct CompletionResult {
    LabelDistribution label_dist; ///< empirical label frequencies over particles
    int winner = 0;               ///< most frequent label, ties to the lowest index
    std::vector<VoxelGrid> completions;
    std::vector<int> labels;
    std::size_t clamp_violations = 0;
};

std::uint64_t particle_seed(std::uint64_t root, std::size_t index);

/// Runs a single chain: x_u starts Bernoulli(0.5); each iteration samples the
/// hidden layers bottom-up, a label from p(y | features), the top hidden
/// units, then the layers top-down, and re-clamps the observed voxels.
Particle run_particle(const NetworkParams& net, const ObservationGrid& obs, int iterations, std::uint64_t seed,
                      std::size_t* clamp_violations = nullptr);

/// Independent particles with seeds particle_seed(seed, i). Results are
/// ordered by particle index and do not depend on `threads`.
CompletionResult gibbs_complete(const NetworkParams& net, const ObservationGrid& obs, int iterations, int particles,
                                std::uint64_t seed, int threads = 1);

LabelDistribution classify(const NetworkParams& net, const ObservationGrid& obs, int particles, int iterations,
                           std::uint64_t seed, int threads = 1);

} // namespace shapenet
