#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "shapenet/camera.hpp"
#include "shapenet/error.hpp"
#include "shapenet/geometry.hpp"

using namespace shapenet;

namespace {

const GridSpec kDesk = GridSpec::desk();

std::size_t unknown(const ObservationGrid& o) { return o.count(VoxelState::Unknown); }

// Distance along a pixel ray to the first occupied voxel, by fine stepping.
double stepped_depth(const VoxelGrid& g, const Vec3& origin, const Vec3& dir) {
    constexpr double h = 1.0 / 512;
    for (double t = 0; t < 200; t += h) {
        const Vec3 p = origin + dir * t;
        const int x = static_cast<int>(std::floor(p.x)), y = static_cast<int>(std::floor(p.y)),
                  z = static_cast<int>(std::floor(p.z));
        if (g.in_bounds(x, y, z) && g.at(x, y, z)) return t;
    }
    return kNoHit;
}

} // namespace

TEST_CASE("empty grid renders to all misses") {
    const VoxelGrid g(Dims3::cube(16), 2);
    const auto pose = generate_view_candidates(1, default_view_radius(kDesk), 3, kDesk).front();
    const auto d = render_depth(g, pose, default_intrinsics(kDesk));
    for (float x : d.depths) CHECK(x == kNoHit);

    // Nothing occludes, so every payload voxel is seen as free.
    const auto obs = observe(g, pose, default_intrinsics(kDesk));
    for (int z = 2; z < 14; ++z)
        for (int y = 2; y < 14; ++y)
            for (int x = 2; x < 14; ++x) CHECK(obs[g.index(x, y, z)] == VoxelState::Free);
}

TEST_CASE("single voxel on the optical axis") {
    VoxelGrid g(Dims3::cube(16), 2);
    g.set(8, 8, 8, true);
    const CameraPose pose{{8.5, 8.5, 30.5}, {8.5, 8.5, 8.5}, {0, 1, 0}};
    Intrinsics in;
    const auto d = render_depth(g, pose, in);
    CHECK(std::abs(d.at(in.width / 2, in.height / 2) - 21.5) <= 0.5);
    const auto obs = depth_to_observation(d, pose, kDesk);
    CHECK(obs[g.index(8, 8, 8)] == VoxelState::Surface);
    CHECK(obs[g.index(8, 8, 5)] == VoxelState::Unknown);
    CHECK(obs[g.index(8, 8, 12)] == VoxelState::Free);
}

TEST_CASE("depth agrees with a stepped ray") {
    const Intrinsics in = default_intrinsics(kDesk);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto g = generate_synthetic(static_cast<ShapeClass>(seed % kShapeClassCount), seed, kDesk);
        const auto pose = generate_view_candidates(1, default_view_radius(kDesk), seed + 10, kDesk).front();
        const auto d = render_depth(g, pose, in);
        const CameraBasis basis(pose);
        for (int v = 0; v < in.height; v += 5)
            for (int u = 0; u < in.width; u += 5) {
                const double ref = stepped_depth(g, pose.position, pixel_ray(basis, in, u, v));
                const double got = d.at(u, v);
                if (ref == kNoHit)
                    CHECK(got == kNoHit);
                else
                    CHECK(std::abs(got - ref) < 0.01);
            }
    }
}

TEST_CASE("no occupied voxel is ever seen as free") {
    const Intrinsics in = default_intrinsics(kDesk);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto g = generate_synthetic(static_cast<ShapeClass>(s % kShapeClassCount), 100 + s, kDesk);
        for (const auto& pose : generate_view_candidates(3, default_view_radius(kDesk), s, kDesk)) {
            const auto obs = observe(g, pose, in);
            std::size_t false_free = 0;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (g[i] && obs[i] == VoxelState::Free) ++false_free;
            CHECK(false_free == 0);
            CHECK_NOTHROW(check_consistent(g, obs));
        }
    }
}

TEST_CASE("hidden voxels behind the visible surface stay unknown") {
    const Intrinsics in = default_intrinsics(kDesk);
    const auto g = generate_synthetic(ShapeClass::Block, 5, kDesk);
    const CameraPose pose{{-30, 8, 8}, {8, 8, 8}, {0, 0, 1}};
    const auto obs = observe(g, pose, in);
    std::size_t surface = 0, hidden = 0;
    for (int z = 0; z < 16; ++z)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                if (!g.at(x, y, z)) continue;
                const auto st = obs[g.index(x, y, z)];
                // A voxel with an occupied voxel two cells nearer the camera is
                // buried and cannot be within the surface band.
                if (x >= 2 && g.at(x - 1, y, z) && g.at(x - 2, y, z)) {
                    CHECK(st == VoxelState::Unknown);
                    ++hidden;
                }
                if (st == VoxelState::Surface) ++surface;
            }
    CHECK(surface > 0);
    CHECK(hidden > 0);
}

TEST_CASE("shrinking the surface band never frees unknown voxels") {
    const Intrinsics in = default_intrinsics(kDesk);
    const auto g = generate_synthetic(ShapeClass::LBracket, 9, kDesk);
    const auto pose = generate_view_candidates(1, default_view_radius(kDesk), 4, kDesk).front();
    const auto wide = observe(g, pose, in, kDefaultSurfaceBand);
    const auto narrow = observe(g, pose, in, 0.3);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (wide[i] == VoxelState::Unknown) CHECK(narrow[i] == VoxelState::Unknown);
}

TEST_CASE("merge") {
    const Intrinsics in = default_intrinsics(kDesk);
    const auto g = generate_synthetic(ShapeClass::Sphere, 2, kDesk);
    const auto poses = generate_view_candidates(6, default_view_radius(kDesk), 77, kDesk);
    std::vector<ObservationGrid> views;
    for (const auto& p : poses) views.push_back(observe(g, p, in));

    const ObservationGrid blank(g.dims());
    CHECK(merge_observations(views[0], blank).merged == views[0]);
    CHECK(merge_observations(views[0], views[0]).merged == views[0]);
    for (std::size_t a = 0; a < views.size(); ++a)
        for (std::size_t b = 0; b < views.size(); ++b) {
            const auto ab = merge_observations(views[a], views[b]);
            CHECK(ab.merged == merge_observations(views[b], views[a]).merged);
            CHECK(ab.conflicts == 0);
            CHECK(unknown(ab.merged) <= unknown(views[a]));
            CHECK(unknown(ab.merged) <= unknown(views[b]));
        }

    const CameraPose left{{-30, 8, 8}, {8, 8, 8}, {0, 0, 1}}, right{{46, 8, 8}, {8, 8, 8}, {0, 0, 1}};
    const auto l = observe(g, left, in), r = observe(g, right, in);
    const auto both = merge_observations(l, r).merged;
    CHECK(unknown(both) < unknown(l));
    CHECK(unknown(both) < unknown(r));

    ObservationGrid s(Dims3::cube(2), VoxelState::Surface), f(Dims3::cube(2), VoxelState::Free);
    const auto c = merge_observations(s, f);
    CHECK(c.conflicts == 8);
    CHECK(c.merged.count(VoxelState::Surface) == 8);
    CHECK_THROWS_AS(merge_observations(s, ObservationGrid(Dims3::cube(3))), InvalidArgument);
}

TEST_CASE("newly observed voxels") {
    const Intrinsics in = default_intrinsics(kDesk);
    const auto g = generate_synthetic(ShapeClass::Block, 3, kDesk);
    const CameraPose front{{-30, 8.2, 8.1}, {8, 8, 8}, {0, 0, 1}}, back{{46, 7.9, 8.1}, {8, 8, 8}, {0, 0, 1}};
    const auto current = observe(g, front, in);

    const auto same = new_observed_mask(g, current, front, in);
    CHECK(same.count == 0);

    const auto opp = new_observed_mask(g, current, back, in);
    CHECK(opp.count > 0);
    std::size_t back_surface = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (opp.mask[i]) CHECK_FALSE(current.observed(i));
        if (current[i] == VoxelState::Unknown && opp.view[i] == VoxelState::Surface) {
            CHECK(opp.mask[i] == 1);
            ++back_surface;
        }
    }
    CHECK(back_surface > 0);
    const auto next = apply_new_observation(current, opp);
    CHECK(unknown(next) == unknown(current) - opp.count);

    VoxelGrid wrong = g;
    for (std::size_t i = 0; i < wrong.size(); ++i)
        if (current[i] == VoxelState::Free) {
            wrong[i] = 1;
            break;
        }
    CHECK_THROWS_AS(new_observed_mask(wrong, current, back, in), DataError);
}

TEST_CASE("view candidates") {
    const double r = default_view_radius(kDesk);
    const auto c = generate_view_candidates(8, r, 1, kDesk);
    REQUIRE(c.size() == 8);
    for (const auto& p : c) {
        CHECK(norm(p.position - kDesk.grid_center()) == doctest::Approx(r).epsilon(1e-9));
        CHECK(norm(p.look_at - kDesk.grid_center()) <= 2.0);
    }
    CHECK(generate_view_candidates(1, r, 42, kDesk) == generate_view_candidates(1, r, 42, kDesk));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto many = generate_view_candidates(64, r, seed, kDesk);
        std::set<std::tuple<double, double, double>> seen;
        for (const auto& p : many) seen.insert({p.position.x, p.position.y, p.position.z});
        CHECK(seen.size() == 64);
    }
    CHECK_THROWS_AS(generate_view_candidates(0, r, 1, kDesk), InvalidArgument);
    CHECK_THROWS_AS(generate_view_candidates(4, 5.0, 1, kDesk), InvalidArgument);
}

TEST_CASE("bad camera input") {
    VoxelGrid g(Dims3::cube(16), 2);
    g.set(8, 8, 8, true);
    CHECK_THROWS_AS(render_depth(g, {{8.5, 8.5, 8.5}, {0, 0, 0}, {0, 0, 1}}, Intrinsics{}), InvalidArgument);
    CHECK_THROWS_AS(render_depth(g, {{1, 1, 1}, {1, 1, 1}, {0, 0, 1}}, Intrinsics{}), InvalidArgument);
    DepthMap d{4, 4, 0.0, std::vector<float>(16, 1.0f)};
    CHECK_THROWS_AS(depth_to_observation(d, {{-10, 0, 0}, {0, 0, 0}, {0, 0, 1}}, kDesk), InvalidArgument);

    const CameraPose p{{1.5, -2.25, 3}, {0, 0.5, 0}, {0, 0, 1}};
    CHECK(parse_pose(format_pose(p)) == p);
    CHECK_THROWS_AS(parse_pose("1 2 3"), InvalidArgument);
    CHECK_THROWS_AS(parse_pose("1 2 3 4 5 6 7 8 9 10"), InvalidArgument);
}
