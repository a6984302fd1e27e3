#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance runner. Each one is written straight from the definition and
// shares no code with the library routine it checks.

#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

#include "shapenet/camera.hpp"
#include "shapenet/cdbn.hpp"
#include "shapenet/geometry.hpp"

namespace oracle {

using namespace shapenet;

inline Vec3 voxel_center_world(const GridSpec& spec, int i, int j, int k) {
    const Vec3 g{i + 0.5, j + 0.5, k + 0.5};
    return (g - spec.grid_center()) * spec.world_scale + spec.world_center;
}

// Voxel centers strictly inside an axis-aligned box given in model units.
inline std::size_t box_center_count(const Vec3& lo, const Vec3& hi, const GridSpec& spec) {
    std::size_t n = 0;
    for (int k = 0; k < spec.dims.z; ++k)
        for (int j = 0; j < spec.dims.y; ++j)
            for (int i = 0; i < spec.dims.x; ++i) {
                const Vec3 c = voxel_center_world(spec, i, j, k);
                if (c.x > lo.x && c.x < hi.x && c.y > lo.y && c.y < hi.y && c.z > lo.z && c.z < hi.z) ++n;
            }
    return n;
}

// Centers inside a convex closed mesh: on the inner side of every face plane.
inline std::size_t convex_center_count(const TriangleMesh& mesh, const GridSpec& spec) {
    Vec3 centroid;
    for (const auto& v : mesh.vertices) centroid = centroid + v;
    centroid = centroid / static_cast<double>(mesh.vertices.size());
    std::size_t n = 0;
    for (int k = 0; k < spec.dims.z; ++k)
        for (int j = 0; j < spec.dims.y; ++j)
            for (int i = 0; i < spec.dims.x; ++i) {
                const Vec3 c = voxel_center_world(spec, i, j, k);
                bool inside = true;
                for (const auto& f : mesh.faces) {
                    const Vec3& a = mesh.vertices[f[0]];
                    const Vec3 nrm = cross(mesh.vertices[f[1]] - a, mesh.vertices[f[2]] - a);
                    if (dot(nrm, c - a) * dot(nrm, centroid - a) <= 0) {
                        inside = false;
                        break;
                    }
                }
                if (inside) ++n;
            }
    return n;
}

inline std::size_t ball_center_count(const Vec3& center, double r, const GridSpec& spec) {
    std::size_t n = 0;
    for (int k = 0; k < spec.dims.z; ++k)
        for (int j = 0; j < spec.dims.y; ++j)
            for (int i = 0; i < spec.dims.x; ++i)
                if (norm(voxel_center_world(spec, i, j, k) - center) <= r) ++n;
    return n;
}

// Number of 6-connected components of occupied voxels.
inline int components6(const VoxelGrid& g) {
    const Dims3 d = g.dims();
    std::vector<char> seen(g.size(), 0);
    int count = 0;
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (!g[s] || seen[s]) continue;
        ++count;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = 1;
        while (!q.empty()) {
            const std::size_t c = q.front();
            q.pop();
            const int x = static_cast<int>(c % d.x), y = static_cast<int>((c / d.x) % d.y),
                      z = static_cast<int>(c / (static_cast<std::size_t>(d.x) * d.y));
            const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (const auto& o : nb) {
                const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
                if (!g.in_bounds(nx, ny, nz)) continue;
                const std::size_t n = g.index(nx, ny, nz);
                if (g[n] && !seen[n]) {
                    seen[n] = 1;
                    q.push(n);
                }
            }
        }
    }
    return count;
}

// Conv RBM energy with every index written out.
inline double conv_energy(const ConvLayerParams& p, const std::vector<double>& v, const std::vector<double>& h) {
    const int n = p.visible_extent, m = p.hidden_extent(), k = p.kernel, s = p.stride, C = p.in_channels;
    auto vat = [&](int c, int x, int y, int z) { return static_cast<double>(v[((static_cast<std::size_t>(c) * n + z) * n + y) * n + x]); };
    auto hat = [&](int f, int x, int y, int z) { return static_cast<double>(h[((static_cast<std::size_t>(f) * m + z) * m + y) * m + x]); };
    auto wat = [&](int f, int c, int ox, int oy, int oz) {
        return static_cast<double>(p.filters[((((static_cast<std::size_t>(f) * C + c) * k + oz) * k + oy) * k) + ox]);
    };
    double e = 0;
    for (int f = 0; f < p.out_channels; ++f)
        for (int jz = 0; jz < m; ++jz)
            for (int jy = 0; jy < m; ++jy)
                for (int jx = 0; jx < m; ++jx) {
                    double act = p.hidden_bias[static_cast<std::size_t>(f)];
                    for (int c = 0; c < C; ++c)
                        for (int oz = 0; oz < k; ++oz)
                            for (int oy = 0; oy < k; ++oy)
                                for (int ox = 0; ox < k; ++ox)
                                    act += wat(f, c, ox, oy, oz) * vat(c, jx * s + ox, jy * s + oy, jz * s + oz);
                    e -= hat(f, jx, jy, jz) * act;
                }
    for (std::size_t l = 0; l < v.size(); ++l) e -= static_cast<double>(p.visible_bias[l]) * v[l];
    return e;
}

inline double dense_energy(const DenseLayerParams& p, const std::vector<double>& v, const std::vector<double>& h) {
    double e = 0;
    for (int j = 0; j < p.hidden; ++j) {
        e -= p.hidden_bias[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(j)];
        for (int i = 0; i < p.visible; ++i)
            e -= h[static_cast<std::size_t>(j)] * p.weights[static_cast<std::size_t>(j) * p.visible + i] * v[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < p.visible; ++i) e -= p.visible_bias[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    return e;
}

// Bits of `code` as a 0/1 vector of length n.
inline std::vector<double> bits(unsigned code, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = (code >> i) & 1u;
    return out;
}

// P(h_j = 1 | v) by summing Boltzmann weights over every hidden configuration.
inline std::vector<double> hidden_marginals(const DenseLayerParams& p, const std::vector<double>& v) {
    std::vector<double> num(static_cast<std::size_t>(p.hidden), 0.0);
    double z = 0;
    for (unsigned code = 0; code < (1u << p.hidden); ++code) {
        const auto h = bits(code, p.hidden);
        const double w = std::exp(-dense_energy(p, v, h));
        z += w;
        for (int j = 0; j < p.hidden; ++j) num[static_cast<std::size_t>(j)] += w * h[static_cast<std::size_t>(j)];
    }
    for (double& x : num) x /= z;
    return num;
}

inline std::vector<double> visible_marginals(const DenseLayerParams& p, const std::vector<double>& h) {
    std::vector<double> num(static_cast<std::size_t>(p.visible), 0.0);
    double z = 0;
    for (unsigned code = 0; code < (1u << p.visible); ++code) {
        const auto v = bits(code, p.visible);
        const double w = std::exp(-dense_energy(p, v, h));
        z += w;
        for (int i = 0; i < p.visible; ++i) num[static_cast<std::size_t>(i)] += w * v[static_cast<std::size_t>(i)];
    }
    for (double& x : num) x /= z;
    return num;
}

// Exact log-likelihood gradient of a tiny dense RBM over a dataset, by
// enumerating the joint. Layout: weights [hidden][visible], hidden bias, visible bias.
inline std::vector<std::vector<double>> exact_gradient(const DenseLayerParams& p,
                                                       const std::vector<std::vector<double>>& data) {
    const auto H = static_cast<std::size_t>(p.hidden), V = static_cast<std::size_t>(p.visible);
    std::vector<std::vector<double>> pos{std::vector<double>(H * V), std::vector<double>(H), std::vector<double>(V)};
    auto neg = pos;
    for (const auto& v : data) {
        const auto ph = hidden_marginals(p, v);
        for (std::size_t j = 0; j < H; ++j) {
            for (std::size_t i = 0; i < V; ++i) pos[0][j * V + i] += ph[j] * v[i] / data.size();
            pos[1][j] += ph[j] / data.size();
        }
        for (std::size_t i = 0; i < V; ++i) pos[2][i] += v[i] / data.size();
    }
    double z = 0;
    for (unsigned vc = 0; vc < (1u << V); ++vc)
        for (unsigned hc = 0; hc < (1u << H); ++hc) {
            const auto v = bits(vc, p.visible), h = bits(hc, p.hidden);
            const double w = std::exp(-dense_energy(p, v, h));
            z += w;
            for (std::size_t j = 0; j < H; ++j) {
                for (std::size_t i = 0; i < V; ++i) neg[0][j * V + i] += w * h[j] * v[i];
                neg[1][j] += w * h[j];
            }
            for (std::size_t i = 0; i < V; ++i) neg[2][i] += w * v[i];
        }
    for (std::size_t t = 0; t < pos.size(); ++t)
        for (std::size_t i = 0; i < pos[t].size(); ++i) pos[t][i] -= neg[t][i] / z;
    return pos;
}

// Top RBM energy with the label given as a class index replicated dup times.
inline double top_energy(const TopLayerParams& p, const std::vector<double>& f, int label, const std::vector<double>& h) {
    const int L = p.label_units();
    std::vector<double> y(static_cast<std::size_t>(L), 0.0);
    for (int d = 0; d < p.dup; ++d) y[static_cast<std::size_t>(label * p.dup + d)] = 1;
    double e = 0;
    for (int j = 0; j < p.hidden; ++j) {
        double a = p.hidden_bias[static_cast<std::size_t>(j)];
        for (int i = 0; i < p.feature_visible; ++i)
            a += p.feature_weights[static_cast<std::size_t>(j) * p.feature_visible + i] * f[static_cast<std::size_t>(i)];
        for (int u = 0; u < L; ++u) a += p.label_weights[static_cast<std::size_t>(j) * L + u] * y[static_cast<std::size_t>(u)];
        e -= h[static_cast<std::size_t>(j)] * a;
    }
    for (int i = 0; i < p.feature_visible; ++i) e -= p.feature_bias[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(i)];
    for (int u = 0; u < L; ++u) e -= p.label_bias[static_cast<std::size_t>(u)] * y[static_cast<std::size_t>(u)];
    return e;
}

// p(label | features) by summing over every top hidden configuration.
inline std::vector<double> label_posterior(const TopLayerParams& p, const std::vector<double>& f) {
    std::vector<double> w(static_cast<std::size_t>(p.classes), 0.0);
    double z = 0;
    for (int k = 0; k < p.classes; ++k)
        for (unsigned code = 0; code < (1u << p.hidden); ++code) {
            const double x = std::exp(-top_energy(p, f, k, bits(code, p.hidden)));
            w[static_cast<std::size_t>(k)] += x;
            z += x;
        }
    for (double& x : w) x /= z;
    return w;
}

} // namespace oracle
