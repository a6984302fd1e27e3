#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "shapenet/vec3.hpp"

namespace shapenet {

struct Dims3 {
    int x = 30, y = 30, z = 30;

    std::size_t volume() const { return static_cast<std::size_t>(x) * y * z; }
    bool operator==(const Dims3&) const = default;

    static Dims3 cube(int n) { return {n, n, n}; }
};

/// Maps model space onto a voxel grid. Voxel (i, j, k) covers
/// [i, i+1) x [j, j+1) x [k, k+1) in grid units; the grid center
/// (dims / 2) corresponds to world_center.
struct GridSpec {
    Dims3 dims{};
    int payload_origin = 3;
    double world_scale = 1.0; ///< model units per voxel
    Vec3 world_center{};

    int payload_extent() const { return dims.x - 2 * payload_origin; }
    Vec3 grid_center() const { return {dims.x / 2.0, dims.y / 2.0, dims.z / 2.0}; }

    /// The paper-scale layout: 24^3 payload plus 3 cells of padding.
    static GridSpec paper() { return {Dims3::cube(30), 3, 1.0, {}}; }
    /// Desk-scale layout: 12^3 payload plus 2 cells of padding.
    static GridSpec desk() { return {Dims3::cube(16), 2, 1.0, {}}; }

    void validate() const;
};

/// Dense binary occupancy tensor, row-major with x fastest.
class VoxelGrid {
public:
    VoxelGrid() = default;
    explicit VoxelGrid(Dims3 dims, int payload_origin = 0);

    const Dims3& dims() const { return dims_; }
    int payload_origin() const { return payload_origin_; }
    std::size_t size() const { return cells_.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) + static_cast<std::size_t>(dims_.x) * (y + static_cast<std::size_t>(dims_.y) * z);
    }
    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims_.x && y < dims_.y && z < dims_.z;
    }
    std::uint8_t at(int x, int y, int z) const { return cells_[index(x, y, z)]; }
    void set(int x, int y, int z, bool on) { cells_[index(x, y, z)] = on ? 1 : 0; }

    std::uint8_t operator[](std::size_t i) const { return cells_[i]; }
    std::uint8_t& operator[](std::size_t i) { return cells_[i]; }

    const std::vector<std::uint8_t>& cells() const { return cells_; }
    std::vector<std::uint8_t>& cells() { return cells_; }

    std::size_t count() const;
    /// True iff every cell outside the central payload is zero.
    bool padding_is_empty() const;
    void clear_padding();
    bool in_payload(int x, int y, int z) const;

    bool operator==(const VoxelGrid&) const = default;

private:
    Dims3 dims_{0, 0, 0};
    int payload_origin_ = 0;
    std::vector<std::uint8_t> cells_;
};

enum class VoxelState : std::uint8_t { Free = 0, Surface = 1, Unknown = 2 };

/// Per-voxel Free / Surface / Unknown labels from one or more depth views.
/// Free and Surface voxels form the observed set, Unknown the unobserved one.
class ObservationGrid {
public:
    ObservationGrid() = default;
    explicit ObservationGrid(Dims3 dims, VoxelState fill = VoxelState::Unknown);

    const Dims3& dims() const { return dims_; }
    std::size_t size() const { return states_.size(); }

    VoxelState operator[](std::size_t i) const { return states_[i]; }
    VoxelState& operator[](std::size_t i) { return states_[i]; }
    const std::vector<VoxelState>& states() const { return states_; }

    bool observed(std::size_t i) const { return states_[i] != VoxelState::Unknown; }
    std::size_t count(VoxelState s) const;

    /// Fully observed view of a known shape: occupied -> Surface, empty -> Free.
    static ObservationGrid from_occupancy(const VoxelGrid& grid);
    /// Surface -> 1, everything else -> 0.
    VoxelGrid surface_occupancy(int payload_origin = 0) const;

    bool operator==(const ObservationGrid&) const = default;

private:
    Dims3 dims_{0, 0, 0};
    std::vector<VoxelState> states_;
};

} // namespace shapenet
