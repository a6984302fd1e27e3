#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shapenet/camera.hpp"
#include "shapenet/cdbn.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

/// H = -sum p ln p, with 0 ln 0 = 0.
double recognition_entropy(const LabelDistribution& dist);

struct NbvBudget {
    int outer_samples = 10;    // completions drawn per decision
    int inner_particles = 50;  // particles for each conditional entropy
    int outer_iterations = 50; // Gibbs iterations for the completions
    int inner_iterations = 50;
    int classify_particles = 100;
    int classify_iterations = 50;

    void validate() const;
};

struct ViewScore {
    CameraPose pose;
    double expected_entropy = 0;   ///< H_i
    double mutual_information = 0; ///< H - H_i
    int samples_used = 0;
};

struct ViewChoice {
    std::size_t best = 0;
    CameraPose pose;
    double entropy = 0; ///< H before the view
    std::vector<ViewScore> scores;
};

/// Monte-Carlo estimate of the expected label entropy after observing from
/// `pose`: completions of the current observation are rendered from the pose,
/// the newly visible voxels are added with their hallucinated labels, and the
/// resulting label entropies are averaged.
ViewScore expected_entropy_for_view(const NetworkParams& net, const ObservationGrid& obs, const CameraPose& pose,
                                    const NbvBudget& budget, const Intrinsics& in, std::uint64_t seed,
                                    int threads = 1);

/// Scores every candidate against one shared H and one shared set of
/// completions, and picks the largest mutual information (earliest on ties).
ViewChoice choose_next_view(const NetworkParams& net, const ObservationGrid& obs,
                            const std::vector<CameraPose>& candidates, const NbvBudget& budget, const Intrinsics& in,
                            std::uint64_t seed, int threads = 1);

enum class Strategy { MutualInformation, Random, MaxVisibility, Farthest, Oracle };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Random, max_visibility and farthest selection; returns the chosen index.
std::size_t baseline_select(Strategy strategy, const ObservationGrid& obs, const std::vector<CameraPose>& candidates,
                            const std::optional<CameraPose>& previous, std::uint64_t seed, const Intrinsics& in);

/// Cheating upper bound: renders the true shape from each candidate and picks
/// the smallest resulting label entropy.
std::size_t oracle_select(const NetworkParams& net, const VoxelGrid& true_shape, const ObservationGrid& obs,
                          const std::vector<CameraPose>& candidates, const NbvBudget& budget, const Intrinsics& in,
                          std::uint64_t seed, int threads = 1);

struct EpisodeStep {
    int step = 0;
    Strategy strategy = Strategy::MutualInformation;
    CameraPose pose;
    double entropy_before = 0;
    double entropy_after = 0;
    LabelDistribution label_dist;
    std::size_t unknown_count = 0;
};

struct EpisodeLog {
    std::vector<EpisodeStep> steps;
    int final_label = 0;
};

struct EpisodeOptions {
    std::size_t candidates = 8;
    double radius = 0;         // 0 picks default_view_radius
    Intrinsics intrinsics;
    double look_jitter = 2.0;
    int threads = 1;
};

/// Sequential planning: render the true shape from the current pose, merge,
/// classify, then pick the next pose among fresh candidates.
EpisodeLog plan_episode(const NetworkParams& net, const VoxelGrid& true_shape, const CameraPose& initial_pose,
                        int steps, Strategy strategy, const NbvBudget& budget, const EpisodeOptions& options,
                        std::uint64_t seed);

/// One JSON object per line.
std::string episode_jsonl(const EpisodeLog& log);

} // namespace shapenet
