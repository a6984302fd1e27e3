#include "shapenet/voxel_grid.hpp"

#include <algorithm>
#include <string>

#include "shapenet/error.hpp"

namespace shapenet {

void GridSpec::validate() const {
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) throw InvalidArgument("grid dims must be positive");
    if (dims.x != dims.y || dims.y != dims.z) throw InvalidArgument("only cubic grids are supported");
    if (payload_origin < 0 || dims.x < 2 * payload_origin + 1)
        throw InvalidArgument("grid of " + std::to_string(dims.x) + " cannot hold padding " + std::to_string(payload_origin));
    if (!(world_scale > 0)) throw InvalidArgument("world_scale must be positive");
}

VoxelGrid::VoxelGrid(Dims3 dims, int payload_origin)
    : dims_(dims), payload_origin_(payload_origin), cells_(dims.volume(), 0) {
    if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0) throw InvalidArgument("voxel grid dims must be positive");
    if (payload_origin < 0 || dims.x < 2 * payload_origin + 1 || dims.y < 2 * payload_origin + 1 ||
        dims.z < 2 * payload_origin + 1)
        throw InvalidArgument("padding too large for grid");
}

std::size_t VoxelGrid::count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

bool VoxelGrid::in_payload(int x, int y, int z) const {
    const int p = payload_origin_;
    return x >= p && y >= p && z >= p && x < dims_.x - p && y < dims_.y - p && z < dims_.z - p;
}

bool VoxelGrid::padding_is_empty() const {
    for (int z = 0; z < dims_.z; ++z)
        for (int y = 0; y < dims_.y; ++y)
            for (int x = 0; x < dims_.x; ++x)
                if (!in_payload(x, y, z) && at(x, y, z)) return false;
    return true;
}

void VoxelGrid::clear_padding() {
    for (int z = 0; z < dims_.z; ++z)
        for (int y = 0; y < dims_.y; ++y)
            for (int x = 0; x < dims_.x; ++x)
                if (!in_payload(x, y, z)) set(x, y, z, false);
}

ObservationGrid::ObservationGrid(Dims3 dims, VoxelState fill) : dims_(dims), states_(dims.volume(), fill) {}

std::size_t ObservationGrid::count(VoxelState s) const {
    return static_cast<std::size_t>(std::count(states_.begin(), states_.end(), s));
}

ObservationGrid ObservationGrid::from_occupancy(const VoxelGrid& grid) {
    ObservationGrid obs(grid.dims(), VoxelState::Free);
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (grid[i]) obs.states_[i] = VoxelState::Surface;
    return obs;
}

VoxelGrid ObservationGrid::surface_occupancy(int payload_origin) const {
    VoxelGrid g(dims_, payload_origin);
    for (std::size_t i = 0; i < states_.size(); ++i) g[i] = states_[i] == VoxelState::Surface ? 1 : 0;
    return g;
}

} // namespace shapenet
