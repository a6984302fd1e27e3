#include "shapenet/camera.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "shapenet/error.hpp"
#include "shapenet/rng.hpp"

namespace shapenet {

CameraBasis::CameraBasis(const CameraPose& pose) {
    const Vec3 dir = pose.look_at - pose.position;
    if (norm(dir) < 1e-12) throw InvalidArgument("camera position coincides with look_at");
    forward = normalized(dir);
    Vec3 hint = pose.up_hint;
    if (norm(hint) < 1e-12 || norm(cross(forward, normalized(hint))) < 1e-6)
        hint = std::abs(forward.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{0, 1, 0};
    right = normalized(cross(forward, hint));
    up = cross(right, forward);
}

double framing_focal(int width, int height, double distance, double radius) {
    if (!(distance > radius)) throw InvalidArgument("camera too close to frame the object");
    const double half_angle = std::asin(radius / distance);
    return 0.5 * std::min(width, height) / std::tan(half_angle);
}

Vec3 pixel_ray(const CameraBasis& basis, const Intrinsics& in, int u, int v) {
    const double du = (u + 0.5 - in.width / 2.0) / in.focal_px;
    const double dv = (v + 0.5 - in.height / 2.0) / in.focal_px;
    return normalized(basis.forward + basis.right * du - basis.up * dv);
}

namespace {

void check_intrinsics(const Intrinsics& in) {
    if (in.width <= 0 || in.height <= 0) throw InvalidArgument("image size must be positive");
    if (!(in.focal_px > 0)) throw InvalidArgument("focal length must be positive");
}

struct Hit {
    double t = kNoHit;
    std::int32_t voxel = -1;
};

// Distance along the unit ray to the first occupied voxel, or kNoHit.
Hit trace(const VoxelGrid& grid, const Vec3& origin, const Vec3& dir) {
    const Dims3 d = grid.dims();
    const double ext[3] = {static_cast<double>(d.x), static_cast<double>(d.y), static_cast<double>(d.z)};
    double t0 = 0, t1 = kNoHit;
    for (int a = 0; a < 3; ++a) {
        if (dir[a] == 0) {
            if (origin[a] < 0 || origin[a] > ext[a]) return {};
            continue;
        }
        double ta = (0 - origin[a]) / dir[a], tb = (ext[a] - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1) return {};

    const Vec3 entry = origin + dir * t0;
    int cell[3], step[3];
    double t_max[3], t_delta[3];
    const int dims[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a) {
        cell[a] = std::clamp(static_cast<int>(std::floor(entry[a])), 0, dims[a] - 1);
        if (dir[a] > 0) {
            step[a] = 1;
            t_max[a] = t0 + (cell[a] + 1 - entry[a]) / dir[a];
            t_delta[a] = 1 / dir[a];
        } else if (dir[a] < 0) {
            step[a] = -1;
            t_max[a] = t0 + (cell[a] - entry[a]) / dir[a];
            t_delta[a] = -1 / dir[a];
        } else {
            step[a] = 0;
            t_max[a] = kNoHit;
            t_delta[a] = kNoHit;
        }
    }
    double t = t0;
    for (;;) {
        if (grid.at(cell[0], cell[1], cell[2]))
            return {t, static_cast<std::int32_t>(grid.index(cell[0], cell[1], cell[2]))};
        int a = 0;
        if (t_max[1] < t_max[a]) a = 1;
        if (t_max[2] < t_max[a]) a = 2;
        t = t_max[a];
        t_max[a] += t_delta[a];
        cell[a] += step[a];
        if (cell[a] < 0 || cell[a] >= dims[a]) return {};
    }
}

} // namespace

DepthMap render_depth(const VoxelGrid& grid, const CameraPose& pose, const Intrinsics& in) {
    check_intrinsics(in);
    const CameraBasis basis(pose);
    const int cx = static_cast<int>(std::floor(pose.position.x));
    const int cy = static_cast<int>(std::floor(pose.position.y));
    const int cz = static_cast<int>(std::floor(pose.position.z));
    if (grid.in_bounds(cx, cy, cz) && grid.at(cx, cy, cz)) throw InvalidArgument("camera is inside an occupied voxel");

    const std::size_t n = static_cast<std::size_t>(in.width) * in.height;
    DepthMap out{in.width, in.height, in.focal_px, std::vector<float>(n), std::vector<std::int32_t>(n)};
    for (int v = 0; v < in.height; ++v)
        for (int u = 0; u < in.width; ++u) {
            const Hit hit = trace(grid, pose.position, pixel_ray(basis, in, u, v));
            const std::size_t p = static_cast<std::size_t>(v) * in.width + u;
            out.depths[p] = static_cast<float>(hit.t);
            out.hit_voxel[p] = hit.voxel;
        }
    return out;
}

ObservationGrid depth_to_observation(const DepthMap& depth, const CameraPose& pose, const GridSpec& spec,
                                     double surface_band) {
    if (!(depth.focal_px > 0)) throw InvalidArgument("focal length must be positive");
    if (depth.width <= 0 || depth.height <= 0 ||
        depth.depths.size() != static_cast<std::size_t>(depth.width) * depth.height)
        throw InvalidArgument("depth map size is inconsistent");
    const CameraBasis basis(pose);
    const Intrinsics in{depth.width, depth.height, depth.focal_px};
    const bool have_hits = depth.hit_voxel.size() == depth.depths.size();
    // Without the renderer's record, step just past the recorded depth.
    auto struck = [&](int u, int v) -> std::size_t {
        const std::size_t p = static_cast<std::size_t>(v) * depth.width + u;
        if (have_hits) return static_cast<std::size_t>(depth.hit_voxel[p]);
        const Vec3 q = pose.position + pixel_ray(basis, in, u, v) * (depth.depths[p] + 1e-3);
        const int qx = static_cast<int>(std::floor(q.x)), qy = static_cast<int>(std::floor(q.y)),
                  qz = static_cast<int>(std::floor(q.z));
        if (qx < 0 || qy < 0 || qz < 0 || qx >= spec.dims.x || qy >= spec.dims.y || qz >= spec.dims.z)
            return static_cast<std::size_t>(-1);
        return (static_cast<std::size_t>(qz) * spec.dims.y + qy) * spec.dims.x + qx;
    };
    const Dims3 d = spec.dims;
    ObservationGrid obs(d, VoxelState::Unknown);
    std::size_t i = 0;
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x, ++i) {
                const Vec3 rel = Vec3{x + 0.5, y + 0.5, z + 0.5} - pose.position;
                const double zc = dot(rel, basis.forward);
                if (zc <= 0) continue;
                const double u = depth.width / 2.0 + depth.focal_px * dot(rel, basis.right) / zc;
                const double v = depth.height / 2.0 - depth.focal_px * dot(rel, basis.up) / zc;
                if (!(u >= 0 && v >= 0 && u < depth.width && v < depth.height)) continue;
                const int pu = static_cast<int>(u), pv = static_cast<int>(v);
                const double pixel = depth.at(pu, pv);
                const double dist = norm(rel);
                if (pixel == kNoHit || dist < pixel - kDefaultSurfaceBand) {
                    obs[i] = VoxelState::Free;
                } else if (dist <= pixel + surface_band && struck(pu, pv) == i) {
                    // Only the voxel the pixel ray struck is known to be occupied;
                    // its empty neighbours in front of the surface share the band.
                    obs[i] = VoxelState::Surface;
                }
            }
    return obs;
}

ObservationGrid observe(const VoxelGrid& shape, const CameraPose& pose, const Intrinsics& in, double surface_band) {
    GridSpec spec;
    spec.dims = shape.dims();
    spec.payload_origin = shape.payload_origin();
    return depth_to_observation(render_depth(shape, pose, in), pose, spec, surface_band);
}

void check_consistent(const VoxelGrid& sample, const ObservationGrid& obs) {
    if (!(sample.dims() == obs.dims())) throw InvalidArgument("sample and observation dims differ");
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (obs[i] == VoxelState::Surface && !sample[i]) throw DataError("sample is empty on an observed surface voxel");
        if (obs[i] == VoxelState::Free && sample[i]) throw DataError("sample is occupied on an observed free voxel");
    }
}

NewObservation new_observed_mask(const VoxelGrid& sample, const ObservationGrid& current, const CameraPose& pose,
                                 const Intrinsics& in) {
    check_consistent(sample, current);
    NewObservation out{VoxelGrid(sample.dims(), sample.payload_origin()), observe(sample, pose, in), 0};
    for (std::size_t i = 0; i < current.size(); ++i)
        if (!current.observed(i) && out.view.observed(i)) {
            out.mask[i] = 1;
            ++out.count;
        }
    return out;
}

ObservationGrid apply_new_observation(const ObservationGrid& current, const NewObservation& next) {
    ObservationGrid out = current;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (next.mask[i]) out[i] = next.view[i];
    return out;
}

MergeResult merge_observations(const ObservationGrid& a, const ObservationGrid& b) {
    if (!(a.dims() == b.dims())) throw InvalidArgument("cannot merge observations of different dims");
    MergeResult r{ObservationGrid(a.dims()), 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        const VoxelState sa = a[i], sb = b[i];
        if (sa == VoxelState::Surface || sb == VoxelState::Surface) {
            r.merged[i] = VoxelState::Surface;
            if (sa == VoxelState::Free || sb == VoxelState::Free) ++r.conflicts;
        } else if (sa == VoxelState::Free || sb == VoxelState::Free) {
            r.merged[i] = VoxelState::Free;
        }
    }
    return r;
}

std::vector<CameraPose> generate_view_candidates(std::size_t n, double radius, std::uint64_t seed,
                                                 const GridSpec& spec, double jitter) {
    spec.validate();
    if (n == 0) throw InvalidArgument("need at least one view candidate");
    const double half_diag = spec.payload_extent() * std::sqrt(3.0) / 2.0;
    if (!(radius > half_diag)) throw InvalidArgument("candidate radius must exceed the payload half-diagonal");
    Rng rng(derive_seed(seed, {0xca3ULL}));
    const Vec3 center = spec.grid_center();
    std::vector<CameraPose> poses;
    poses.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double cz = rng.uniform(-1, 1), phi = rng.uniform(0, 2 * std::numbers::pi);
        const double s = std::sqrt(1 - cz * cz);
        const Vec3 dir{s * std::cos(phi), s * std::sin(phi), cz};
        Vec3 offset;
        do {
            offset = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        } while (dot(offset, offset) > 1);
        poses.push_back({center + dir * radius, center + offset * jitter, {0, 0, 1}});
    }
    return poses;
}

double default_view_radius(const GridSpec& spec) { return 2.5 * spec.payload_extent() * std::sqrt(3.0) / 2.0; }

Intrinsics default_intrinsics(const GridSpec& spec) {
    Intrinsics in;
    const double half_diag = spec.payload_extent() * std::sqrt(3.0) / 2.0;
    in.focal_px = framing_focal(in.width, in.height, default_view_radius(spec), half_diag + 2.0);
    return in;
}

std::string format_pose(const CameraPose& pose) {
    std::ostringstream s;
    s << std::setprecision(17);
    for (const Vec3* v : {&pose.position, &pose.look_at, &pose.up_hint}) s << v->x << ' ' << v->y << ' ' << v->z << ' ';
    auto text = s.str();
    text.pop_back();
    return text;
}

CameraPose parse_pose(const std::string& text) {
    std::istringstream s(text);
    double v[9];
    for (double& x : v)
        if (!(s >> x)) throw InvalidArgument("camera pose needs nine numbers: '" + text + "'");
    std::string extra;
    if (s >> extra) throw InvalidArgument("trailing text in camera pose: '" + text + "'");
    CameraPose p{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, {v[6], v[7], v[8]}};
    CameraBasis check(p);
    (void)check;
    return p;
}

} // namespace shapenet
