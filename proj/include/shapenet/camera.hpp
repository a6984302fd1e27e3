#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "shapenet/vec3.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

/// Camera placement in grid (voxel) coordinates.
struct CameraPose {
    Vec3 position;
    Vec3 look_at;
    Vec3 up_hint{0, 0, 1};

    bool operator==(const CameraPose&) const = default;
};

/// Orthonormal camera frame derived from a pose. When the up hint is parallel
/// to the viewing direction another axis is substituted.
struct CameraBasis {
    Vec3 forward, right, up;

    explicit CameraBasis(const CameraPose& pose);
};

struct Intrinsics {
    int width = 64;
    int height = 64;
    double focal_px = 80.0;
};

/// Focal length that frames a sphere of `radius` seen from `distance` in the
/// narrower image side.
double framing_focal(int width, int height, double distance, double radius);

inline constexpr double kNoHit = std::numeric_limits<double>::infinity();

struct DepthMap {
    int width = 0;
    int height = 0;
    double focal_px = 0;
    std::vector<float> depths; ///< row-major, +inf where nothing was hit
    /// Linear index of the voxel each pixel struck, -1 on a miss. Filled by the
    /// renderer; maps read back from disk leave it empty.
    std::vector<std::int32_t> hit_voxel;

    float at(int u, int v) const { return depths[static_cast<std::size_t>(v) * width + u]; }
};

/// Unit direction through the center of pixel (u, v).
Vec3 pixel_ray(const CameraBasis& basis, const Intrinsics& in, int u, int v);

/// Per-pixel Euclidean distance to the first occupied voxel boundary, found by
/// integer DDA traversal of the grid. Throws if the camera sits in an occupied voxel.
DepthMap render_depth(const VoxelGrid& grid, const CameraPose& pose, const Intrinsics& in);

/// Half the voxel diagonal, the default surface band.
inline constexpr double kDefaultSurfaceBand = 0.8660254037844386;

/// Labels each voxel by comparing its center distance with the depth of the
/// pixel it projects into: Free when more than half a voxel diagonal in front,
/// Unknown behind. Within `surface_band` of the depth a voxel is Surface only
/// if that pixel's ray struck it, otherwise Unknown, so narrowing the band can
/// only demote Surface to Unknown.
/// Voxels behind the camera or outside the image are Unknown.
ObservationGrid depth_to_observation(const DepthMap& depth, const CameraPose& pose, const GridSpec& spec,
                                     double surface_band = kDefaultSurfaceBand);

/// Render + convert in one step.
ObservationGrid observe(const VoxelGrid& shape, const CameraPose& pose, const Intrinsics& in,
                        double surface_band = kDefaultSurfaceBand);

/// Throws DataError unless `sample` is 1 on every Surface voxel and 0 on every
/// Free voxel of `obs`.
void check_consistent(const VoxelGrid& sample, const ObservationGrid& obs);

struct NewObservation {
    VoxelGrid mask;            ///< voxels Unknown before and observed from the new pose
    ObservationGrid view;      ///< the full observation of `sample` from the new pose
    std::size_t count = 0;
};

NewObservation new_observed_mask(const VoxelGrid& sample, const ObservationGrid& current, const CameraPose& pose,
                                 const Intrinsics& in);

/// `current` with the mask voxels replaced by their state in `view`.
ObservationGrid apply_new_observation(const ObservationGrid& current, const NewObservation& next);

struct MergeResult {
    ObservationGrid merged;
    std::size_t conflicts = 0; ///< voxels Surface in one input and Free in the other
};

MergeResult merge_observations(const ObservationGrid& a, const ObservationGrid& b);

/// n poses uniformly distributed on a sphere of `radius` about the grid center,
/// each looking at the center displaced by at most `jitter` voxels.
std::vector<CameraPose> generate_view_candidates(std::size_t n, double radius, std::uint64_t seed,
                                                 const GridSpec& spec, double jitter = 2.0);

/// Default viewing radius and intrinsics for a grid: the camera sits at 2.5x
/// the payload half-diagonal and the payload fills the image.
double default_view_radius(const GridSpec& spec);
Intrinsics default_intrinsics(const GridSpec& spec);

std::string format_pose(const CameraPose& pose);
/// Nine whitespace-separated decimals: position, look_at, up_hint.
CameraPose parse_pose(const std::string& text);

} // namespace shapenet
