#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "shapenet/vec3.hpp"
#include "shapenet/voxel_grid.hpp"

namespace shapenet {

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> faces;

    bool empty() const { return faces.empty(); }
    /// Throws DataError when a face references a missing vertex.
    void validate() const;
    /// Every undirected edge is shared by exactly two faces.
    bool is_watertight() const;
    std::pair<Vec3, Vec3> bounds() const;
};

TriangleMesh read_off(std::istream& in);
TriangleMesh read_off(const std::filesystem::path& path);
void write_off(std::ostream& out, const TriangleMesh& mesh);

/// Axis-aligned box with outward-facing triangles.
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);
/// Subdivided icosahedron with vertices projected onto the sphere.
TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions);

/// Scales and centers so the longest bounding-box side spans the payload.
GridSpec fit_grid_spec(const TriangleMesh& mesh, Dims3 dims, int payload_origin);

struct Voxelization {
    VoxelGrid grid;
    /// Set when the mesh was not watertight and only its surface was rasterized.
    bool surface_only = false;
};

/// A voxel is occupied iff its center lies inside the closed surface, decided by
/// the parity of +x ray crossings. Open meshes fall back to surface rasterization.
Voxelization voxelize_mesh(const TriangleMesh& mesh, const GridSpec& spec);

/// Voxels whose cube overlaps any triangle.
VoxelGrid rasterize_surface(const TriangleMesh& mesh, const GridSpec& spec);

/// 360 / step_degrees copies rotated about the vertical axis through the
/// bounding-box center; copy 0 is the input.
std::vector<TriangleMesh> rotate_augment(const TriangleMesh& mesh, double step_degrees);

enum class ShapeClass : int { Block = 0, Sphere, Pyramid, LBracket, BlockWithHandle };

inline constexpr int kShapeClassCount = 5;

std::string_view shape_class_name(ShapeClass c);
/// Throws InvalidArgument for unknown names.
ShapeClass parse_shape_class(std::string_view name);

struct SyntheticShape {
    VoxelGrid grid;
    /// +1 / -1 for the x side carrying the handle, 0 when there is none.
    int handle_side = 0;
};

/// Deterministic jittered primitive inside the payload of `spec`.
SyntheticShape generate_synthetic_shape(ShapeClass cls, std::uint64_t seed, const GridSpec& spec);
VoxelGrid generate_synthetic(ShapeClass cls, std::uint64_t seed, const GridSpec& spec);

} // namespace shapenet
