#include "shapenet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "shapenet/error.hpp"
#include "shapenet/rng.hpp"

namespace shapenet {

void TriangleMesh::validate() const {
    for (const auto& f : faces)
        for (auto idx : f)
            if (idx >= vertices.size())
                throw DataError("face references vertex " + std::to_string(idx) + " of " +
                                std::to_string(vertices.size()));
}

bool TriangleMesh::is_watertight() const {
    if (faces.empty()) return false;
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
    for (const auto& f : faces)
        for (int e = 0; e < 3; ++e) {
            auto a = f[e], b = f[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            ++edges[{a, b}];
        }
    return std::all_of(edges.begin(), edges.end(), [](const auto& kv) { return kv.second == 2; });
}

std::pair<Vec3, Vec3> TriangleMesh::bounds() const {
    if (vertices.empty()) return {};
    Vec3 lo = vertices.front(), hi = vertices.front();
    for (const auto& v : vertices)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], v[a]);
            hi[a] = std::max(hi[a], v[a]);
        }
    return {lo, hi};
}

namespace {

// Reads the next token, skipping '#' comments.
bool next_token(std::istream& in, std::string& tok) {
    while (in >> tok) {
        if (tok[0] != '#') return true;
        std::string rest;
        std::getline(in, rest);
    }
    return false;
}

double parse_double(const std::string& tok) {
    try {
        std::size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) throw DataError("bad number '" + tok + "' in OFF file");
        return v;
    } catch (const std::logic_error&) {
        throw DataError("bad number '" + tok + "' in OFF file");
    }
}

long parse_long(const std::string& tok) {
    try {
        std::size_t used = 0;
        long v = std::stol(tok, &used);
        if (used != tok.size()) throw DataError("bad integer '" + tok + "' in OFF file");
        return v;
    } catch (const std::logic_error&) {
        throw DataError("bad integer '" + tok + "' in OFF file");
    }
}

} // namespace

TriangleMesh read_off(std::istream& in) {
    std::string tok;
    if (!next_token(in, tok) || tok != "OFF") throw DataError("missing OFF header");
    auto read_count = [&] {
        if (!next_token(in, tok)) throw DataError("truncated OFF file");
        long v = parse_long(tok);
        if (v < 0) throw DataError("negative count in OFF file");
        return static_cast<std::size_t>(v);
    };
    const std::size_t nv = read_count();
    const std::size_t nf = read_count();
    read_count(); // edge count, unused

    TriangleMesh mesh;
    mesh.vertices.resize(nv);
    for (auto& v : mesh.vertices)
        for (int a = 0; a < 3; ++a) {
            if (!next_token(in, tok)) throw DataError("truncated OFF vertex list");
            v[a] = parse_double(tok);
        }
    mesh.faces.resize(nf);
    for (auto& f : mesh.faces) {
        if (!next_token(in, tok)) throw DataError("truncated OFF face list");
        if (parse_long(tok) != 3) throw DataError("only triangular faces are supported");
        for (auto& idx : f) {
            if (!next_token(in, tok)) throw DataError("truncated OFF face list");
            long v = parse_long(tok);
            if (v < 0) throw DataError("negative vertex index in OFF file");
            idx = static_cast<std::uint32_t>(v);
        }
    }
    mesh.validate();
    return mesh;
}

TriangleMesh read_off(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return read_off(in);
}

void write_off(std::ostream& out, const TriangleMesh& mesh) {
    std::ostringstream s;
    s.precision(17);
    s << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
    for (const auto& v : mesh.vertices) s << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& f : mesh.faces) s << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    out << s.str();
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
    TriangleMesh m;
    for (int i = 0; i < 8; ++i)
        m.vertices.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
    // Two triangles per face, counter-clockwise seen from outside.
    m.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
               {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
    return m;
}

TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> unit = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                              {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : unit) v = normalized(v);
    std::vector<std::array<std::uint32_t, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoints;
        auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
            auto key = std::minmax(a, b);
            auto it = midpoints.find(key);
            if (it != midpoints.end()) return it->second;
            unit.push_back(normalized((unit[a] + unit[b]) * 0.5));
            auto idx = static_cast<std::uint32_t>(unit.size() - 1);
            midpoints.emplace(key, idx);
            return idx;
        };
        std::vector<std::array<std::uint32_t, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            auto ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    TriangleMesh m;
    m.faces = std::move(faces);
    m.vertices.reserve(unit.size());
    for (const auto& u : unit) m.vertices.push_back(center + u * radius);
    return m;
}

GridSpec fit_grid_spec(const TriangleMesh& mesh, Dims3 dims, int payload_origin) {
    GridSpec spec{dims, payload_origin, 1.0, {}};
    spec.validate();
    if (mesh.vertices.empty()) return spec;
    auto [lo, hi] = mesh.bounds();
    const double longest = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
    if (longest > 0) spec.world_scale = longest / spec.payload_extent();
    spec.world_center = (lo + hi) * 0.5;
    return spec;
}

namespace {

std::vector<Vec3> to_grid_coords(const TriangleMesh& mesh, const GridSpec& spec) {
    std::vector<Vec3> out;
    out.reserve(mesh.vertices.size());
    const Vec3 gc = spec.grid_center();
    for (const auto& v : mesh.vertices) out.push_back((v - spec.world_center) / spec.world_scale + gc);
    return out;
}

// Separating-axis triangle/box overlap test for a box of half-size h at c.
bool triangle_box_overlap(const Vec3& c, double h, Vec3 a, Vec3 b, Vec3 d) {
    a = a - c;
    b = b - c;
    d = d - c;
    const std::array<Vec3, 3> v = {a, b, d};
    const std::array<Vec3, 3> e = {b - a, d - b, a - d};
    auto separated = [&](const Vec3& axis) {
        double p0 = dot(v[0], axis), p1 = dot(v[1], axis), p2 = dot(v[2], axis);
        double r = h * (std::abs(axis.x) + std::abs(axis.y) + std::abs(axis.z));
        return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
    };
    const std::array<Vec3, 3> box_axes = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    for (const auto& ba : box_axes)
        for (const auto& te : e)
            if (separated(cross(ba, te))) return false;
    for (const auto& ba : box_axes)
        if (separated(ba)) return false;
    return !separated(cross(e[0], e[1]));
}

} // namespace

VoxelGrid rasterize_surface(const TriangleMesh& mesh, const GridSpec& spec) {
    spec.validate();
    mesh.validate();
    VoxelGrid grid(spec.dims, spec.payload_origin);
    const auto g = to_grid_coords(mesh, spec);
    const Dims3 d = spec.dims;
    for (const auto& f : mesh.faces) {
        const Vec3 &a = g[f[0]], &b = g[f[1]], &c = g[f[2]];
        int lo[3], hi[3];
        const int ext[3] = {d.x, d.y, d.z};
        for (int ax = 0; ax < 3; ++ax) {
            lo[ax] = std::max(0, static_cast<int>(std::floor(std::min({a[ax], b[ax], c[ax]}))) - 1);
            hi[ax] = std::min(ext[ax] - 1, static_cast<int>(std::floor(std::max({a[ax], b[ax], c[ax]}))) + 1);
        }
        for (int z = lo[2]; z <= hi[2]; ++z)
            for (int y = lo[1]; y <= hi[1]; ++y)
                for (int x = lo[0]; x <= hi[0]; ++x)
                    if (!grid.at(x, y, z) && triangle_box_overlap({x + 0.5, y + 0.5, z + 0.5}, 0.5, a, b, c))
                        grid.set(x, y, z, true);
    }
    grid.clear_padding();
    return grid;
}

Voxelization voxelize_mesh(const TriangleMesh& mesh, const GridSpec& spec) {
    spec.validate();
    mesh.validate();
    Voxelization result{VoxelGrid(spec.dims, spec.payload_origin), false};
    if (mesh.empty()) return result;
    if (!mesh.is_watertight()) {
        result.grid = rasterize_surface(mesh, spec);
        result.surface_only = true;
        return result;
    }

    // Rays start at voxel centers nudged off the lattice so they never graze
    // an edge or vertex exactly.
    constexpr double kEpsY = 1.2345e-6;
    constexpr double kEpsZ = 2.3456e-6;
    const Dims3 d = spec.dims;
    const auto g = to_grid_coords(mesh, spec);
    std::vector<std::vector<double>> crossings(static_cast<std::size_t>(d.y) * d.z);

    for (const auto& f : mesh.faces) {
        const Vec3 &a = g[f[0]], &b = g[f[1]], &c = g[f[2]];
        const double area = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
        if (area == 0.0) continue; // parallel to the ray
        const int ylo = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
        const int yhi = std::min(d.y - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}) - 0.5)));
        const int zlo = std::max(0, static_cast<int>(std::floor(std::min({a.z, b.z, c.z}) - 0.5)));
        const int zhi = std::min(d.z - 1, static_cast<int>(std::ceil(std::max({a.z, b.z, c.z}) - 0.5)));
        for (int k = zlo; k <= zhi; ++k)
            for (int j = ylo; j <= yhi; ++j) {
                const double py = j + 0.5 + kEpsY, pz = k + 0.5 + kEpsZ;
                const double w0 = (b.y - py) * (c.z - pz) - (c.y - py) * (b.z - pz);
                const double w1 = (c.y - py) * (a.z - pz) - (a.y - py) * (c.z - pz);
                const double w2 = (a.y - py) * (b.z - pz) - (b.y - py) * (a.z - pz);
                const bool inside = (w0 > 0 && w1 > 0 && w2 > 0) || (w0 < 0 && w1 < 0 && w2 < 0);
                if (!inside) continue;
                const double x = (w0 * a.x + w1 * b.x + w2 * c.x) / (w0 + w1 + w2);
                crossings[static_cast<std::size_t>(j) + static_cast<std::size_t>(d.y) * k].push_back(x);
            }
    }

    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j) {
            auto& xs = crossings[static_cast<std::size_t>(j) + static_cast<std::size_t>(d.y) * k];
            if (xs.empty()) continue;
            std::sort(xs.begin(), xs.end());
            std::size_t passed = 0; // crossings with x below the current center
            for (int i = 0; i < d.x; ++i) {
                const double xc = i + 0.5;
                while (passed < xs.size() && xs[passed] < xc) ++passed;
                if ((xs.size() - passed) % 2 == 1) result.grid.set(i, j, k, true);
            }
        }
    result.grid.clear_padding();
    return result;
}

std::vector<TriangleMesh> rotate_augment(const TriangleMesh& mesh, double step_degrees) {
    if (!(step_degrees > 0) || step_degrees > 360)
        throw InvalidArgument("rotation step must be in (0, 360]");
    const double poses = 360.0 / step_degrees;
    const auto n = static_cast<int>(std::lround(poses));
    if (std::abs(poses - n) > 1e-9) throw InvalidArgument("rotation step must divide 360 degrees");

    auto [lo, hi] = mesh.bounds();
    const Vec3 pivot = (lo + hi) * 0.5;
    std::vector<TriangleMesh> out;
    out.reserve(n);
    for (int p = 0; p < n; ++p) {
        const double deg = p * step_degrees;
        double c = std::cos(deg * std::numbers::pi / 180.0), s = std::sin(deg * std::numbers::pi / 180.0);
        // Exact values at quarter turns keep symmetric shapes bit-identical.
        const double quarter = deg / 90.0;
        if (std::abs(quarter - std::round(quarter)) < 1e-12) {
            static constexpr double kCos[4] = {1, 0, -1, 0};
            static constexpr double kSin[4] = {0, 1, 0, -1};
            const auto q = static_cast<int>(std::lround(quarter)) % 4;
            c = kCos[q];
            s = kSin[q];
        }
        TriangleMesh m = mesh;
        if (p != 0)
            for (auto& v : m.vertices) {
                const double dx = v.x - pivot.x, dy = v.y - pivot.y;
                v.x = pivot.x + c * dx - s * dy;
                v.y = pivot.y + s * dx + c * dy;
            }
        out.push_back(std::move(m));
    }
    return out;
}

std::string_view shape_class_name(ShapeClass c) {
    switch (c) {
    case ShapeClass::Block: return "block";
    case ShapeClass::Sphere: return "sphere";
    case ShapeClass::Pyramid: return "pyramid";
    case ShapeClass::LBracket: return "L-bracket";
    case ShapeClass::BlockWithHandle: return "block-with-handle";
    }
    throw InvalidArgument("unknown shape class");
}

ShapeClass parse_shape_class(std::string_view name) {
    for (int i = 0; i < kShapeClassCount; ++i)
        if (shape_class_name(static_cast<ShapeClass>(i)) == name) return static_cast<ShapeClass>(i);
    throw InvalidArgument("unknown shape class '" + std::string(name) + "'");
}

namespace {

struct Box {
    Vec3 lo, hi;
    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
    }
};

template <typename Inside>
void fill_payload(VoxelGrid& grid, Inside&& inside) {
    const int p = grid.payload_origin();
    const Dims3 d = grid.dims();
    for (int z = p; z < d.z - p; ++z)
        for (int y = p; y < d.y - p; ++y)
            for (int x = p; x < d.x - p; ++x)
                if (inside(Vec3{x - p + 0.5, y - p + 0.5, z - p + 0.5})) grid.set(x, y, z, true);
}

} // namespace

SyntheticShape generate_synthetic_shape(ShapeClass cls, std::uint64_t seed, const GridSpec& spec) {
    spec.validate();
    if (static_cast<int>(cls) < 0 || static_cast<int>(cls) >= kShapeClassCount)
        throw InvalidArgument("unknown shape class");
    const double P = spec.payload_extent();
    Rng rng(derive_seed(seed, {0x5117ULL}));
    auto jitter = [&](double frac) { return rng.uniform(-frac, frac) * P; };
    const Vec3 mid{P / 2, P / 2, P / 2};

    SyntheticShape out{VoxelGrid(spec.dims, spec.payload_origin), 0};
    switch (cls) {
    case ShapeClass::Block:
    case ShapeClass::BlockWithHandle: {
        const double hx = rng.uniform(0.2, 0.28) * P, hy = rng.uniform(0.22, 0.34) * P, hz = rng.uniform(0.22, 0.36) * P;
        const Vec3 c = mid + Vec3{jitter(0.03), jitter(0.05), jitter(0.05)};
        const Box body{c - Vec3{hx, hy, hz}, c + Vec3{hx, hy, hz}};
        if (cls == ShapeClass::Block) {
            fill_payload(out.grid, [&](const Vec3& q) { return body.contains(q); });
            break;
        }
        out.handle_side = rng.bernoulli(0.5) ? 1 : -1;
        const double reach = rng.uniform(0.3, 0.36) * P;
        const double half_w = rng.uniform(0.7, 0.85) * hy, half_h = rng.uniform(0.7, 0.85) * hz;
        const double face = c.x + out.handle_side * hx;
        const Box handle{{std::min(face, face + out.handle_side * reach), c.y - half_w, c.z - half_h},
                         {std::max(face, face + out.handle_side * reach), c.y + half_w, c.z + half_h}};
        fill_payload(out.grid, [&](const Vec3& q) { return body.contains(q) || handle.contains(q); });
        break;
    }
    case ShapeClass::Sphere: {
        const double r = rng.uniform(0.28, 0.42) * P;
        const Vec3 c = mid + Vec3{jitter(0.05), jitter(0.05), jitter(0.05)};
        fill_payload(out.grid, [&](const Vec3& q) { return norm(q - c) <= r; });
        break;
    }
    case ShapeClass::Pyramid: {
        const double a = rng.uniform(0.3, 0.45) * P, h = rng.uniform(0.55, 0.85) * P;
        const Vec3 c = mid + Vec3{jitter(0.04), jitter(0.04), 0};
        const double z0 = P / 2 - h / 2 + jitter(0.04);
        fill_payload(out.grid, [&](const Vec3& q) {
            const double t = (q.z - z0) / h;
            if (t < 0 || t > 1) return false;
            const double w = a * (1 - t);
            return std::abs(q.x - c.x) <= w && std::abs(q.y - c.y) <= w;
        });
        break;
    }
    case ShapeClass::LBracket: {
        const double lx = rng.uniform(0.65, 0.85) * P, wy = rng.uniform(0.3, 0.5) * P;
        const double t = rng.uniform(0.2, 0.28) * P, hz = rng.uniform(0.55, 0.8) * P;
        const Vec3 lo = mid - Vec3{lx / 2, wy / 2, hz / 2} + Vec3{jitter(0.04), jitter(0.04), jitter(0.04)};
        const Box base{lo, lo + Vec3{lx, wy, t}};
        const Box upright{lo, lo + Vec3{t, wy, hz}};
        fill_payload(out.grid, [&](const Vec3& q) { return base.contains(q) || upright.contains(q); });
        break;
    }
    }
    return out;
}

VoxelGrid generate_synthetic(ShapeClass cls, std::uint64_t seed, const GridSpec& spec) {
    return generate_synthetic_shape(cls, seed, spec).grid;
}

} // namespace shapenet
